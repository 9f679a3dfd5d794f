"""Synthetic three-class slices for desk-scale runs.

Every image shows a faint head outline on Gaussian noise (sigma 0.1) plus
one bright lesion whose shape and place encode the class:

- meningioma: an ellipse close to the head's periphery
- glioma: an irregular blob of 3-5 overlapping lobes anywhere inside
- pituitary: a small disc just below the center
"""

import logging
import math
from pathlib import Path

import numpy as np
import numpy.typing as npt

from skipnet.data.images import encode_png, quantize
from skipnet.data.labels import CLASS_NAMES
from skipnet.data.manifest import DatasetManifest, ManifestRecord, build_manifest
from skipnet.errors import ConfigurationError
from skipnet.storage import ArtifactStore

logger = logging.getLogger(__name__)

NOISE_SIGMA = 0.1
SAMPLES_PER_PATIENT = 4
MANIFEST_NAME = "manifest.csv"


def _grid(size: int) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Row (y, downwards) and column (x) coordinates scaled to [-1, 1]."""
    axis = np.linspace(-1.0, 1.0, size)
    return np.meshgrid(axis, axis, indexing="ij")


def _ellipse(
    y: npt.NDArray[np.float64],
    x: npt.NDArray[np.float64],
    cy: float,
    cx: float,
    ry: float,
    rx: float,
    angle: float = 0.0,
) -> npt.NDArray[np.bool_]:
    c, s = math.cos(angle), math.sin(angle)
    u = (x - cx) * c + (y - cy) * s
    v = -(x - cx) * s + (y - cy) * c
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def render_sample(label: int, size: int, rng: np.random.Generator) -> npt.NDArray[np.uint8]:
    """One (size, size) 8-bit slice of class ``label``."""
    y, x = _grid(size)
    image = rng.normal(0.0, NOISE_SIGMA, (size, size))
    image += 0.25 * _ellipse(
        y, x, 0.0, 0.0, 0.85 + rng.uniform(-0.05, 0.05), 0.75 + rng.uniform(-0.05, 0.05)
    )
    intensity = rng.uniform(0.5, 0.75)

    if label == 0:
        theta = rng.uniform(0.0, 2 * math.pi)
        radius = rng.uniform(0.5, 0.6)
        lesion = _ellipse(
            y,
            x,
            radius * math.sin(theta),
            radius * math.cos(theta),
            rng.uniform(0.08, 0.13),
            rng.uniform(0.12, 0.2),
            rng.uniform(0.0, math.pi),
        )
    elif label == 1:
        cy, cx = rng.uniform(-0.4, 0.4, 2)
        lesion = np.zeros((size, size), dtype=bool)
        for _ in range(int(rng.integers(3, 6))):
            dy, dx = rng.normal(0.0, 0.07, 2)
            r = rng.uniform(0.05, 0.11)
            lesion |= _ellipse(y, x, cy + dy, cx + dx, r, r)
    elif label == 2:
        r = rng.uniform(0.06, 0.09)
        lesion = _ellipse(
            y, x, 0.35 + rng.normal(0.0, 0.03), rng.normal(0.0, 0.03), r, r
        )
    else:
        raise ConfigurationError(f"No synthetic renderer for label {label}")

    image += intensity * lesion
    return quantize(np.clip(image, 0.0, 1.0))


def generate_synthetic(
    out_dir: Path, n_per_class: int = 200, size: int = 128, seed: int = 42
) -> DatasetManifest:
    """
    Write ``n_per_class`` PNG slices per class plus ``manifest.csv``.

    Samples are drawn class by class from one seeded generator, so the same
    arguments always produce byte-identical files. Consecutive groups of
    four samples of a class share a synthetic patient id.

    Returns:
        The manifest (without splits) rooted at ``out_dir``

    Raises:
        ConfigurationError: If n_per_class < 1 or size < 16
    """
    if n_per_class < 1:
        raise ConfigurationError(f"n_per_class must be >= 1, got {n_per_class}")
    if size < 16:
        raise ConfigurationError(f"synthetic image size must be >= 16, got {size}")
    store = ArtifactStore(out_dir)
    rng = np.random.default_rng(seed)
    records = []
    for label, name in enumerate(CLASS_NAMES):
        for i in range(n_per_class):
            rel = f"images/{name}_{i:04d}.png"
            store.save(rel, encode_png(render_sample(label, size, rng)))
            records.append(
                ManifestRecord(
                    path=rel,
                    label=label,
                    patient_id=f"synth-{label}-{i // SAMPLES_PER_PATIENT:04d}",
                )
            )
    manifest = build_manifest(out_dir, records)
    store.save_text(MANIFEST_NAME, manifest.to_csv())
    logger.info(
        f"Wrote {len(records)} synthetic slices ({n_per_class} per class, "
        f"{size}x{size}) to {out_dir}"
    )
    return manifest
