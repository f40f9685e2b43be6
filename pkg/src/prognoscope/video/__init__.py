from .evid import RawVideo, StudyRecord, read_evid, write_evid, read_manifest, write_manifest
from .views import VIEW_GROUPS, VIEW_TAG_TABLE, UnmappedViewTagError, known_tags, normalize_view_tag
from .pipeline import (
    Clip, crop_pad, modal_dims, preprocess_video, reduce_resolution,
    resample_fps, to_clip, TARGET_FPS, CLIP_FRAMES,
)
from .flow import FlowField, farneback_flow, flow_to_color
from .phantom import PhantomParams, PhantomSample, phantom_corpus, synth_phantom

__all__ = [
    "RawVideo", "StudyRecord", "read_evid", "write_evid", "read_manifest", "write_manifest",
    "VIEW_GROUPS", "VIEW_TAG_TABLE", "UnmappedViewTagError", "known_tags", "normalize_view_tag",
    "Clip", "crop_pad", "modal_dims", "preprocess_video", "reduce_resolution",
    "resample_fps", "to_clip", "TARGET_FPS", "CLIP_FRAMES",
    "FlowField", "farneback_flow", "flow_to_color",
    "PhantomParams", "PhantomSample", "phantom_corpus", "synth_phantom",
]
