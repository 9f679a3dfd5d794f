"""Dataset manifest: ``path,label,patient_id[,split]`` CSV plus a root directory."""

import csv
import io
import logging
from collections import Counter
from collections.abc import Iterable
from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, Field

from skipnet.data.labels import (
    CLASS_NAMES,
    REFERENCE_SLICE_COUNTS,
    Split,
    label_id,
)
from skipnet.errors import DataError, SplitError

logger = logging.getLogger(__name__)

HEADER = ("path", "label", "patient_id")
SPLIT_COLUMN = "split"


class ManifestRecord(BaseModel):
    """One image slice."""

    model_config = ConfigDict(frozen=True)

    path: str = Field(min_length=1)
    label: int = Field(ge=0, lt=len(CLASS_NAMES))
    patient_id: str = Field(min_length=1)
    split: Split | None = None


class DatasetManifest(BaseModel):
    """Validated records resolved against ``root``."""

    model_config = ConfigDict(frozen=True)

    root: Path
    records: tuple[ManifestRecord, ...]

    def class_counts(self) -> tuple[int, ...]:
        counts = Counter(r.label for r in self.records)
        return tuple(counts.get(k, 0) for k in range(len(CLASS_NAMES)))

    def patient_counts(self) -> tuple[int, ...]:
        patients = {(r.label, r.patient_id) for r in self.records}
        counts = Counter(label for label, _ in patients)
        return tuple(counts.get(k, 0) for k in range(len(CLASS_NAMES)))

    def resolve(self, record: ManifestRecord) -> Path:
        return self.root / record.path

    @property
    def has_splits(self) -> bool:
        return all(r.split is not None for r in self.records)

    def select(self, split: Split | str) -> list[ManifestRecord]:
        wanted = Split(split)
        return [r for r in self.records if r.split == wanted]

    def with_splits(self, assignment: dict[str, Split]) -> Self:
        """Copy with every record's split set from a patient -> split map."""
        records = tuple(
            r.model_copy(update={"split": assignment[r.patient_id]})
            for r in self.records
        )
        manifest = self.model_copy(update={"records": records})
        manifest.check_patient_isolation()
        return manifest

    def check_patient_isolation(self) -> None:
        """
        Raises:
            SplitError: If a patient's slices sit in more than one split
        """
        seen: dict[str, Split | None] = {}
        for r in self.records:
            previous = seen.setdefault(r.patient_id, r.split)
            if previous != r.split:
                raise SplitError(
                    f"Patient {r.patient_id} appears in both {previous} and {r.split}"
                )

    def check_reference_counts(self) -> None:
        """
        Raises:
            DataError: If per-class slice totals differ from the public export
        """
        counts = self.class_counts()
        if counts != REFERENCE_SLICE_COUNTS:
            raise DataError(
                f"Class counts {'/'.join(map(str, counts))} do not match the "
                f"reference export {'/'.join(map(str, REFERENCE_SLICE_COUNTS))}"
            )

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        with_split = self.has_splits
        writer.writerow([*HEADER, SPLIT_COLUMN] if with_split else HEADER)
        for r in self.records:
            row = [r.path, CLASS_NAMES[r.label], r.patient_id]
            writer.writerow([*row, str(r.split)] if with_split else row)
        return buffer.getvalue()


def _fail(path: Path, line: int, message: str) -> DataError:
    return DataError(f"{path}:{line}: {message}")


def parse_manifest(
    text: str, source: Path, root: Path, check_files: bool = True
) -> DatasetManifest:
    """
    Parse manifest text; errors name ``source`` and the 1-based line number.

    Raises:
        DataError: For a bad header, malformed row, unknown label, empty
            patient id, duplicate or escaping path, dangling image path, or
            an empty manifest
    """
    rows = csv.reader(io.StringIO(text, newline=""))
    header = next(rows, None)
    if header is None:
        raise DataError(f"{source}: no records")
    header = [h.strip() for h in header]
    if header not in (list(HEADER), [*HEADER, SPLIT_COLUMN]):
        raise _fail(
            source, 1, f"header must be {','.join(HEADER)}[,{SPLIT_COLUMN}]"
        )
    width = len(header)
    resolved_root = root.resolve()

    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for row in rows:
        line = rows.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != width:
            raise _fail(source, line, f"expected {width} fields, got {len(row)}")
        rel, label_text, patient = (cell.strip() for cell in row[:3])
        if not rel:
            raise _fail(source, line, "empty image path")
        try:
            label = label_id(label_text)
        except DataError as e:
            raise _fail(source, line, str(e)) from None
        if not patient:
            raise _fail(source, line, "empty patient_id")
        split = None
        if width == 4:
            try:
                split = Split(row[3].strip())
            except ValueError:
                raise _fail(source, line, f"unknown split {row[3]!r}") from None
        if rel in seen:
            raise _fail(source, line, f"duplicate path {rel}")
        seen.add(rel)
        image = root / rel
        if not image.resolve().is_relative_to(resolved_root):
            raise _fail(source, line, f"path escapes dataset root: {rel}")
        if check_files and not image.is_file():
            raise _fail(source, line, f"image not found: {image}")
        records.append(
            ManifestRecord(path=rel, label=label, patient_id=patient, split=split)
        )

    if not records:
        raise DataError(f"{source}: no records")
    manifest = DatasetManifest(root=root, records=tuple(records))
    if width == 4:
        manifest.check_patient_isolation()
    return manifest


def load_manifest(
    path: Path,
    root: Path | None = None,
    expect_reference_counts: bool = False,
) -> DatasetManifest:
    """
    Read and validate a manifest file.

    Args:
        path: UTF-8 CSV with header ``path,label,patient_id`` (optionally
            followed by ``split``)
        root: Directory image paths are relative to; defaults to the
            manifest's directory
        expect_reference_counts: Require the 708/1426/930 class totals

    Raises:
        DataError: If the file is missing or any row is invalid
    """
    if not path.is_file():
        raise DataError(f"Manifest not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not UTF-8 ({e})") from e
    manifest = parse_manifest(text, path, root if root is not None else path.parent)
    if expect_reference_counts:
        manifest.check_reference_counts()
    logger.info(
        f"Loaded manifest {path}: {len(manifest.records)} records, class counts "
        f"{'/'.join(map(str, manifest.class_counts()))}"
    )
    return manifest


def build_manifest(root: Path, records: Iterable[ManifestRecord]) -> DatasetManifest:
    return DatasetManifest(root=root, records=tuple(records))
