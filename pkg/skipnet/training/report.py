"""Text renderings of training results: metrics CSV and key=value summaries."""

from collections.abc import Iterable, Mapping, Sequence
from typing import Any

from skipnet.training.metrics import ConfusionMatrix
from skipnet.training.trainer import EpochRecord

METRICS_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,seconds"


def metrics_csv(
    history: Iterable[EpochRecord],
    confusion: ConfusionMatrix | None = None,
    class_names: Sequence[str] | None = None,
) -> str:
    """
    One line per epoch under ``METRICS_HEADER``, then an optional confusion block.

    The block is introduced by a blank line and a ``confusion,<pred...>`` row;
    each following row is ``<true class>,<counts...>``. Numbers use fixed
    precision so identical runs give identical bytes.
    """
    lines = [METRICS_HEADER]
    for r in history:
        lines.append(
            f"{r.epoch},{r.train_loss:.6f},{r.train_acc:.6f},"
            f"{r.val_loss:.6f},{r.val_acc:.6f},{r.seconds:.3f}"
        )
    if confusion is not None:
        names = list(class_names or (str(k) for k in range(confusion.classes)))
        lines.append("")
        lines.append(",".join(["confusion", *names]))
        for name, row in zip(names, confusion.counts, strict=True):
            lines.append(",".join([name, *(str(int(c)) for c in row)]))
    return "\n".join(lines) + "\n"


def confusion_entries(
    confusion: ConfusionMatrix, class_names: Sequence[str]
) -> dict[str, Any]:
    """Flatten a confusion matrix and its one-vs-rest accuracies into summary keys."""
    entries: dict[str, Any] = {}
    for name, value in zip(class_names, confusion.one_vs_rest_accuracy(), strict=True):
        entries[f"ovr_accuracy.{name}"] = f"{value:.6f}"
    entries["confusion"] = ";".join(
        ",".join(str(int(c)) for c in row) for row in confusion.counts
    )
    return entries


def format_summary(values: Mapping[str, Any]) -> str:
    """``key=value`` lines in insertion order; floats with 6 decimals."""
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.6f}"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
