"""In-memory split arrays decoded from a split manifest."""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from skipnet.data.images import load_image
from skipnet.data.labels import Split
from skipnet.data.manifest import DatasetManifest, ManifestRecord
from skipnet.errors import DataError
from skipnet.tensor import Tensor, default_dtype, freeze

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitData:
    """Images (N, 1, H, W), integer labels and patient ids of one split."""

    name: str
    images: Tensor
    labels: npt.NDArray[np.int64]
    patient_ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @classmethod
    def from_arrays(
        cls,
        name: str,
        images: npt.ArrayLike,
        labels: npt.ArrayLike,
        patient_ids: Sequence[str] = (),
    ) -> "SplitData":
        array = np.asarray(images, dtype=default_dtype())
        targets = np.asarray(labels, dtype=np.int64)
        if array.ndim != 4 or array.shape[0] != targets.shape[0]:
            raise DataError(
                f"{name}: images {array.shape} do not match {targets.shape[0]} labels"
            )
        targets.setflags(write=False)
        return cls(name, freeze(array), targets, tuple(patient_ids))


@dataclass(frozen=True)
class Dataset:
    train: SplitData
    val: SplitData
    test: SplitData

    def split(self, name: Split | str) -> SplitData:
        return getattr(self, Split(name).value)


def load_split(
    manifest: DatasetManifest, split: Split | str, size: int, threads: int = 1
) -> SplitData:
    """
    Decode every image of ``split`` in manifest order.

    Decoding may run on ``threads`` workers; the result order never depends
    on the worker count.

    Raises:
        DataError: If the manifest has no split column or an image is unusable
    """
    if not manifest.has_splits:
        raise DataError("Manifest has no split assignment")
    records: list[ManifestRecord] = manifest.select(split)
    paths = [manifest.resolve(r) for r in records]
    if threads > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            images = list(pool.map(lambda p: load_image(p, size), paths))
    else:
        images = [load_image(p, size) for p in paths]
    stacked = (
        np.stack(images) if images else np.zeros((0, 1, size, size), default_dtype())
    )
    logger.info(f"Decoded {len(images)} images for the {Split(split)} split")
    return SplitData.from_arrays(
        str(Split(split)),
        stacked,
        [r.label for r in records],
        [r.patient_id for r in records],
    )


def load_dataset(manifest: DatasetManifest, size: int, threads: int = 1) -> Dataset:
    return Dataset(
        train=load_split(manifest, Split.TRAIN, size, threads),
        val=load_split(manifest, Split.VAL, size, threads),
        test=load_split(manifest, Split.TEST, size, threads),
    )
