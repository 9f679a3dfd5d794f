"""Nearest-centroid reference classifier on raw pixels."""

from dataclasses import dataclass
from typing import Self

import numpy as np
import numpy.typing as npt

from skipnet.data.dataset import SplitData
from skipnet.errors import DataError


@dataclass(frozen=True)
class NearestCentroid:
    """Mean image per class; predicts the class with the closest mean (L2)."""

    centroids: npt.NDArray[np.float64]

    @classmethod
    def fit(cls, split: SplitData, classes: int) -> Self:
        """
        Raises:
            DataError: If some class has no training sample
        """
        flat = split.images.reshape(len(split), -1).astype(np.float64)
        centroids = np.zeros((classes, flat.shape[1]))
        for k in range(classes):
            members = flat[split.labels == k]
            if not len(members):
                raise DataError(f"No training samples of class {k} for the baseline")
            centroids[k] = members.mean(axis=0)
        return cls(centroids)

    def predict(self, images: npt.ArrayLike) -> npt.NDArray[np.int64]:
        flat = np.asarray(images, dtype=np.float64).reshape(
            np.shape(images)[0], -1
        )
        # |x - c|^2 without the |x|^2 term, which is the same for every class
        scores = -2.0 * flat @ self.centroids.T + (self.centroids**2).sum(axis=1)
        return scores.argmin(axis=1).astype(np.int64)

    def accuracy(self, split: SplitData) -> float:
        if not len(split):
            raise DataError(f"{split.name} split is empty")
        return float((self.predict(split.images) == split.labels).mean())
