import json
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ValidationError

from fcmvc.errors import CheckpointError, ConfigurationError, DataValidationError
from fcmvc.models import CheckpointDocument
from fcmvc.services.labeling import Partition
from fcmvc.services.registry import ViewBatch
from fcmvc.services.solver import ConsensusState, state_from_document, state_to_document


class Storage:
    """An output directory whose files are only ever replaced whole."""

    def __init__(self, storage_path: str):
        self.storage_path = storage_path
        os.makedirs(self.storage_path, exist_ok=True)

    def _get_safe_file_path(self, filename: str) -> str:
        """
        Resolve a file name inside the storage directory.

        Args:
            filename (str): Bare file name, e.g. 'view_1.csv'.

        Returns:
            str: Path of the file inside the storage directory.

        Raises:
            ConfigurationError: If the name is empty or escapes the directory.
        """
        if not filename or len(filename) > 255:
            raise ConfigurationError("Invalid filename")
        if ".." in filename or "/" in filename or "\\" in filename:
            raise ConfigurationError("Filename contains invalid characters or path traversal attempt")

        file_path = os.path.join(self.storage_path, filename)
        if not os.path.abspath(file_path).startswith(os.path.abspath(self.storage_path)):
            raise ConfigurationError("Path traversal attempt detected")
        return file_path

    def path(self, filename: str) -> str:
        return self._get_safe_file_path(filename)

    def write_view(self, batch: ViewBatch, filename: str | None = None) -> str:
        path = self._get_safe_file_path(filename or f"view_{batch.view_index}.csv")
        write_view(batch, path)
        return path

    def write_labels(self, partition: Partition, filename: str = "labels.csv") -> str:
        path = self._get_safe_file_path(filename)
        write_labels(partition, path)
        return path

    def write_json(self, document, filename: str) -> str:
        path = self._get_safe_file_path(filename)
        write_json(document, path)
        return path

    def write_table(self, rows: Sequence[BaseModel], filename: str) -> str:
        path = self._get_safe_file_path(filename)
        write_table(rows, path)
        return path


def atomic_write(path: str, text: str) -> None:
    """
    Write `text` to a temporary file next to `path`, then rename it over `path`.

    Readers see either the old file or the complete new one.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def _read_csv(path: str, what: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype={"id": str}, keep_default_na=False, na_values=[""], float_precision="round_trip")
    except FileNotFoundError:
        raise DataValidationError(f"{what} file {path} not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(f"{what} file {path} is not a readable table: {e}") from None


def _ids(df: pd.DataFrame, path: str) -> list:
    if len(df.columns) == 0 or df.columns[0] != "id":
        raise DataValidationError(f"{path}: first column must be 'id'")
    ids = df["id"]
    if ids.isna().any():
        rows = [int(i) + 2 for i in np.flatnonzero(ids.isna().to_numpy())]
        raise DataValidationError(f"{path}: empty id on lines {rows[:10]}")
    return ids.tolist()


def read_view(path: str, view_index: int = 1) -> ViewBatch:
    """Load a view file: an `id` column followed by one numeric column per feature."""
    df = _read_csv(path, "view")
    ids = _ids(df, path)
    features = df.iloc[:, 1:]
    if features.shape[1] == 0:
        raise DataValidationError(f"{path}: no feature columns")
    values = features.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataValidationError(
            f"{path}: non-numeric or non-finite value in column {features.columns[col]!r} for id {ids[row]!r}"
        )
    name = os.path.splitext(os.path.basename(path))[0]
    batch = ViewBatch(view_index, values.T, tuple(ids), name=name)
    logger.bind(path=path, view_index=view_index, n=batch.n_samples, d=batch.n_features).debug("view loaded")
    return batch


def read_views(paths: Iterable[str]) -> list[ViewBatch]:
    return [read_view(p, t) for t, p in enumerate(paths, start=1)]


def write_view(batch: ViewBatch, path: str) -> None:
    df = pd.DataFrame(batch.data.T, columns=[f"f{j}" for j in range(batch.n_features)])
    df.insert(0, "id", [str(i) for i in batch.ids])
    atomic_write(path, df.to_csv(index=False))


def read_labels(path: str) -> Partition:
    """Load an `id,label` file; labels are compacted to 0..k-1."""
    df = _read_csv(path, "labels")
    ids = _ids(df, path)
    if "label" not in df.columns:
        raise DataValidationError(f"{path}: missing 'label' column")
    labels = pd.to_numeric(df["label"], errors="coerce")
    if labels.isna().any() or not np.all(np.mod(labels.to_numpy(), 1) == 0):
        raise DataValidationError(f"{path}: labels must be integers")
    if len(set(ids)) != len(ids):
        raise DataValidationError(f"{path}: duplicate ids")
    return Partition.from_labels(labels.to_numpy(dtype=np.int64), ids)


def write_labels(partition: Partition, path: str) -> None:
    if partition.ids is None:
        raise DataValidationError("cannot write labels without sample ids")
    df = pd.DataFrame({"id": [str(i) for i in partition.ids], "label": partition.labels})
    atomic_write(path, df.to_csv(index=False))


def write_json(document, path: str) -> None:
    if isinstance(document, BaseModel):
        text = document.model_dump_json(indent=2)
    else:
        text = json.dumps(document, indent=2)
    atomic_write(path, text + "\n")


def write_table(rows: Sequence[BaseModel], path: str) -> None:
    df = pd.DataFrame([r.model_dump() for r in rows])
    atomic_write(path, df.to_csv(index=False))


def write_checkpoint(state: ConsensusState, path: str) -> None:
    atomic_write(path, state_to_document(state).model_dump_json() + "\n")
    logger.bind(path=path, views_seen=state.views_seen, n_union=state.n_union).info("checkpoint written")


def read_checkpoint(path: str) -> ConsensusState:
    """
    Load and verify a checkpoint.

    Raises:
        CheckpointError: missing, truncated, corrupt or unsupported document.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} not found") from None
    except (OSError, UnicodeDecodeError) as e:
        raise CheckpointError(f"checkpoint {path} is unreadable: {e}") from None
    try:
        doc = CheckpointDocument.model_validate_json(text)
    except ValidationError as e:
        raise CheckpointError(f"checkpoint {path} is not a valid document: {e.errors()[0]['msg']}") from None
    state = state_from_document(doc)
    logger.bind(path=path, views_seen=state.views_seen, n_union=state.n_union).debug("checkpoint loaded")
    return state
