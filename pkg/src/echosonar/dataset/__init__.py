"""Feature assembly, label alignment, augmentation and file formats."""
from .features import (
    DEFAULT_SHIFTS,
    LABEL_QUANTUM_MM,
    MAX_GAP_US,
    WINDOW_SLICES,
    AlignmentReport,
    FeatureWindow,
    align_labels,
    assemble_features,
    augment,
    curriculum_order,
    leave_one_group_out,
    nearest_frames,
    quantize_mm,
    shift_label,
    shift_mm,
    shift_tensor,
    window_ends,
)
from .formats import (
    SessionManifest,
    decode_audio,
    decode_pose_csv,
    decode_tensor,
    encode_audio,
    encode_manifest,
    encode_pose_csv,
    encode_tensor,
    read_audio,
    read_manifest,
    read_pose_csv,
    read_tensor,
    write_audio,
    write_manifest,
    write_pose_csv,
    write_tensor,
)

__all__ = [
    "DEFAULT_SHIFTS", "LABEL_QUANTUM_MM", "MAX_GAP_US", "WINDOW_SLICES", "AlignmentReport", "FeatureWindow",
    "align_labels", "assemble_features", "augment", "curriculum_order", "leave_one_group_out",
    "nearest_frames", "quantize_mm", "shift_label", "shift_mm", "shift_tensor", "window_ends",
    "SessionManifest", "decode_audio", "decode_pose_csv", "decode_tensor", "encode_audio",
    "encode_manifest", "encode_pose_csv", "encode_tensor", "read_audio", "read_manifest",
    "read_pose_csv", "read_tensor", "write_audio", "write_manifest", "write_pose_csv", "write_tensor",
]
