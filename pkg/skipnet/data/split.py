"""Patient-level train/val/test assignment."""

import logging
from collections import Counter, defaultdict
from collections.abc import Sequence
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from skipnet.data.labels import CLASS_NAMES, Split
from skipnet.data.manifest import DatasetManifest
from skipnet.errors import ConfigurationError, SplitError

logger = logging.getLogger(__name__)

SPLIT_ORDER = (Split.TRAIN, Split.VAL, Split.TEST)


def _check_fractions(fractions: Sequence[float]) -> tuple[float, float, float]:
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigurationError(
            f"split fractions must be three positive numbers, got {fractions}"
        )
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must sum to 1, got {sum(fractions)}")
    return fractions[0], fractions[1], fractions[2]


def split_by_patient(
    manifest: DatasetManifest,
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 42,
) -> DatasetManifest:
    """
    Assign every patient, with all of their slices, to train, val or test.

    A patient belongs to the class most of its slices carry (lowest label
    on a tie). Within each class the patients are shuffled by ``seed`` and
    handed one by one to the split whose slice count lags its target
    (fraction x class slices) the most; ties favor train, then val, then
    test.

    Returns:
        A copy of the manifest with the split column filled in

    Raises:
        ConfigurationError: If the fractions are not positive or do not sum to 1
        SplitError: If some class ends up with no slice in some split
    """
    targets = _check_fractions(fractions)
    slices: dict[str, list[int]] = defaultdict(list)
    for record in manifest.records:
        slices[record.patient_id].append(record.label)

    by_class: dict[int, list[str]] = defaultdict(list)
    for patient in sorted(slices):
        counts = Counter(slices[patient])
        majority = max(counts, key=lambda label: (counts[label], -label))
        by_class[majority].append(patient)

    rng = np.random.default_rng(seed)
    assignment: dict[str, Split] = {}
    for label in sorted(by_class):
        patients = [by_class[label][i] for i in rng.permutation(len(by_class[label]))]
        total = sum(len(slices[p]) for p in patients)
        wanted = [f * total for f in targets]
        filled = [0, 0, 0]
        for patient in patients:
            deficits = [w - f for w, f in zip(wanted, filled, strict=True)]
            chosen = int(np.argmax(deficits))
            assignment[patient] = SPLIT_ORDER[chosen]
            filled[chosen] += len(slices[patient])

    result = manifest.with_splits(assignment)
    present = Counter((r.label, r.split) for r in result.records)
    for label in range(len(CLASS_NAMES)):
        if not any(r.label == label for r in result.records):
            continue
        for split in SPLIT_ORDER:
            if not present[(label, split)]:
                raise SplitError(
                    f"Class {CLASS_NAMES[label]} has no slices in the {split} split "
                    f"(seed {seed}); change the seed or the fractions"
                )
    for split in SPLIT_ORDER:
        if not result.select(split):
            raise SplitError(f"The {split} split is empty")
    logger.info(
        "Split by patient: "
        + ", ".join(f"{s}={len(result.select(s))}" for s in SPLIT_ORDER)
    )
    return result


class SplitProvenance(BaseModel):
    """How a training run split its manifest, kept with the checkpoint."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(ge=0)
    fractions: tuple[float, float, float]
    train_patients: tuple[str, ...]

    @classmethod
    def of(
        cls, manifest: DatasetManifest, fractions: Sequence[float], seed: int
    ) -> Self:
        patients = sorted({r.patient_id for r in manifest.select(Split.TRAIN)})
        return cls(
            seed=seed, fractions=_check_fractions(fractions), train_patients=tuple(patients)
        )

    def check_disjoint(self, manifest: DatasetManifest, split: Split | str) -> None:
        """
        Raises:
            SplitError: If ``split`` holds a patient the model was trained on
        """
        if Split(split) == Split.TRAIN:
            return
        trained = set(self.train_patients)
        leaked = sorted({r.patient_id for r in manifest.select(split)} & trained)
        if leaked:
            shown = ", ".join(leaked[:5]) + (" ..." if len(leaked) > 5 else "")
            raise SplitError(
                f"{len(leaked)} patient(s) of the {Split(split)} split were used "
                f"for training: {shown}"
            )
