"""Canonical view-group labels and the free-text tag lookup.

Acquisition software tags the same imaging plane inconsistently ("ap4",
"ap4 2d", "a4 2d", ...); the table below folds every known tag into its
canonical view group. Lookup is case-insensitive with surrounding
whitespace trimmed and interior runs collapsed; an unknown tag raises,
never silently defaults.
"""
from __future__ import annotations

import re

from ..errors import DataError

# (view group, tags) rows; several groups appear in more than one row
# because distinct tag families map to the same plane.
VIEW_TAG_TABLE: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("APICAL 2", ("a2", "ap2 2d", "a2 2d", "a2 lavol", "la 2ch")),
    ("APICAL 3", ("a long", "ap3 2d", "a3 2d")),
    ("APICAL 4", ("ap4", "ap4 2d", "a4 2d", "a4 zoom", "a4 lavol", "la ap4 ch")),
    ("APICAL 4 FOCUSED TO RV", ("rv focus", "rvfocus")),
    ("APICAL 5", ("a5", "ap5 2d", "a5 2d")),
    ("PARASTERNAL LONG AXIS", ("pl deep", "psl deep")),
    ("PARASTERNAL LONG ASCENDING AORTA", ("pl ascao", "asc ao", "pl asc ao")),
    ("PARASTERNAL LONG MITRAL VALVE", ("pla mv",)),
    ("PARASTERNAL LONG PULMONIC VALVE", ("pl pv", "pv lax")),
    ("PARASTERNAL LONG RV INFLOW", ("pl rvif", "rv inf", "rvif 2d")),
    ("PARASTERNAL LONG ZOOM AORTIC VALVE", ("pl av ao", "av zoom")),
    ("PARASTERNAL SHORT AORTIC VALVE", ("ps av", "psavzoom", "psax av")),
    ("PARASTERNAL SHORT PULMONIC VALVE AND PULMONARY ARTERY",
     ("ps pv pa", "ps pv", "psax pv")),
    ("PARASTERNAL SHORT TRICUSPID VALVE", ("ps tv", "ps tv 2d", "psax tv")),
    ("SHORT AXIS APEX", ("sax apex",)),
    ("SHORT AXIS BASE", ("lv base",)),
    ("SHORT AXIS MID PAPILLARY", ("sax mid", "sax")),
    ("SUBCOSTAL 4CHAMBER", ("sbc 4 ch", "sbc 4", "sbc 4ch")),
    ("SUBCOSTAL HEPATIC VEIN", ("ivc hv", "sbc hv")),
    ("SUBCOSTAL INTER-ATRIAL SEPTUM", ("ias", "sbc ias", "ias 2d")),
    ("SUBCOSTAL IVC WITH RESPIRATION",
     ("ivc resp", "sbc ivc", "ivc insp", "ivc sniff", "ivcsniff", "sniff")),
    ("SUBCOSTAL RV", ("sbc rv",)),
    ("SUPRASTERNAL NOTCH", ("ssn", "ssn sax")),
    ("PARASTERNAL LONG LAX", ("lax",)),
    ("SHORT AXIS MID PAPILLARY", ("lv mid",)),
    ("SHORT AXIS APEX", ("lv apex",)),
    ("APICAL 3 ZOOM", ("ap3",)),
    ("APICAL 2 ZOOM", ("ap2",)),
    ("SHORT AXIS BASE", ("sax base",)),
)

# distinct canonical labels, in first-appearance order
VIEW_GROUPS: tuple[str, ...] = tuple(dict.fromkeys(g for g, _ in VIEW_TAG_TABLE))

_TAG_MAP: dict[str, str] = {}
for _group, _tags in VIEW_TAG_TABLE:
    for _tag in _tags:
        _TAG_MAP[_tag] = _group


class UnmappedViewTagError(DataError):
    """Raised for a tag with no entry in the view map."""


def _normalize(tag: str) -> str:
    return re.sub(r"\s+", " ", tag.strip().lower())


def normalize_view_tag(tag: str) -> str:
    """Map a free-text acquisition tag to its canonical view group."""
    key = _normalize(tag)
    try:
        return _TAG_MAP[key]
    except KeyError:
        raise UnmappedViewTagError(f"view tag {tag!r} is not in the view map") from None


def known_tags() -> tuple[str, ...]:
    return tuple(_TAG_MAP.keys())
