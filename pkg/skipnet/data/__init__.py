"""Dataset ingestion, patient-level splitting, preprocessing and synthesis."""

from .baseline import NearestCentroid
from .dataset import Dataset, SplitData, load_dataset, load_split
from .images import (
    decode_image,
    encode_png,
    load_image,
    preprocess,
    quantize,
    resize_bilinear,
)
from .labels import (
    CLASS_NAMES,
    REFERENCE_PATIENT_COUNTS,
    REFERENCE_SLICE_COUNTS,
    Split,
    label_id,
    label_name,
)
from .manifest import (
    DatasetManifest,
    ManifestRecord,
    build_manifest,
    load_manifest,
    parse_manifest,
)
from .split import SplitProvenance, split_by_patient
from .synthetic import MANIFEST_NAME, generate_synthetic, render_sample

__all__ = [
    "CLASS_NAMES",
    "MANIFEST_NAME",
    "REFERENCE_PATIENT_COUNTS",
    "REFERENCE_SLICE_COUNTS",
    "Dataset",
    "DatasetManifest",
    "ManifestRecord",
    "NearestCentroid",
    "Split",
    "SplitData",
    "SplitProvenance",
    "build_manifest",
    "decode_image",
    "encode_png",
    "generate_synthetic",
    "label_id",
    "label_name",
    "load_dataset",
    "load_image",
    "load_manifest",
    "load_split",
    "parse_manifest",
    "preprocess",
    "quantize",
    "render_sample",
    "resize_bilinear",
    "split_by_patient",
]
