"""Fixed label table and the public dataset's reference totals."""

from enum import StrEnum

from skipnet.errors import DataError

CLASS_NAMES: tuple[str, ...] = ("meningioma", "glioma", "pituitary")

# Slices and patients per class in the public three-class export
REFERENCE_SLICE_COUNTS: tuple[int, ...] = (708, 1426, 930)
REFERENCE_PATIENT_COUNTS: tuple[int, ...] = (82, 91, 60)


class Split(StrEnum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def label_id(name: str) -> int:
    """
    Map a class name to its integer label.

    Raises:
        DataError: For a name outside the label table
    """
    try:
        return CLASS_NAMES.index(name.strip().lower())
    except ValueError:
        raise DataError(
            f"Unknown label {name!r}; expected one of {', '.join(CLASS_NAMES)}"
        ) from None


def label_name(label: int) -> str:
    if not 0 <= label < len(CLASS_NAMES):
        raise DataError(f"Label id {label} outside [0, {len(CLASS_NAMES)})")
    return CLASS_NAMES[label]
