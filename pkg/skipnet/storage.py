"""Run-artifact storage on the local filesystem."""

import logging
import os
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


class ArtifactStore:
    """Writes files beneath one base directory, atomically."""

    def __init__(self, base_path: Path):
        self.base_path = Path(base_path)

    def path(self, name: str | Path) -> Path:
        """
        Resolve ``name`` inside the store.

        Raises:
            ValueError: If the path would escape the base directory
        """
        file_path = self.base_path / name

        # Ensure we're not writing outside the base directory
        if not file_path.resolve().is_relative_to(self.base_path.resolve()):
            raise ValueError(f"Invalid artifact name: {name}")

        return file_path

    def save(self, name: str | Path, data: bytes) -> Path:
        """
        Write ``data`` to ``name`` via a temp file and rename.

        Readers never observe a partial file; on failure the temp file is
        removed and the previous content (if any) is kept.

        Returns:
            Path of the written file

        Raises:
            OSError: If the directory or file cannot be written
        """
        file_path = self.path(name)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(
            dir=file_path.parent, prefix=f".{file_path.name}.", suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "wb") as tmp:
                tmp.write(data)
                tmp.flush()
                os.fsync(tmp.fileno())
            os.replace(tmp_name, file_path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
        logger.debug(f"Saved artifact: {file_path}")
        return file_path

    def save_text(self, name: str | Path, text: str) -> Path:
        """UTF-8 text with the newlines given (no platform translation)."""
        return self.save(name, text.encode("utf-8"))

    def exists(self, name: str | Path) -> bool:
        try:
            return self.path(name).exists()
        except ValueError:
            return False
