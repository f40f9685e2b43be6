from .store import (
    CHOICES, CaseSet, ResponseStore, Session, SurveyCase, TokenTable,
    load_case_set, load_tokens, session_order,
)
from .service import annotate_video, build_report, create_app

__all__ = [
    "CHOICES", "CaseSet", "ResponseStore", "Session", "SurveyCase", "TokenTable",
    "load_case_set", "load_tokens", "session_order",
    "annotate_video", "build_report", "create_app",
]
