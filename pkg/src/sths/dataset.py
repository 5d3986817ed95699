"""ZSL data model, validation and on-disk interchange.

A dataset directory holds ``meta.json``, ``attributes.csv`` and one file per
sample set (``train_seen``, ``test_unseen`` and optionally ``test_seen``).
Sample sets are either CSV (label column followed by feature columns) or a
subdirectory with ``features.f32`` (row-major little-endian float32) and a
``header.json`` sidecar.

Ground-truth labels of the two test pools are kept out of the public
:class:`SampleSet` objects. They are reachable only through :class:`Oracle`,
which evaluation code constructs explicitly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1
POOLS = ("train_seen", "test_unseen", "test_seen")
EVALUATION_ONLY = ("test_unseen", "test_seen")


class DatasetError(ValueError):
    """Base class for dataset problems. ``code`` names the violated rule."""

    code = "dataset"


class MissingFileError(DatasetError, FileNotFoundError):
    code = "missing_file"


class DimensionMismatchError(DatasetError):
    code = "dimension_mismatch"


class SplitOverlapError(DatasetError):
    code = "split_overlap"


class LabelRangeError(DatasetError):
    code = "label_out_of_range"


class DegenerateAttributeError(DatasetError):
    code = "zero_attribute_row"


class CoverageError(DatasetError):
    code = "coverage"


_ERRORS = {
    cls.code: cls
    for cls in (
        MissingFileError,
        DimensionMismatchError,
        SplitOverlapError,
        LabelRangeError,
        DegenerateAttributeError,
        CoverageError,
    )
}


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    pool: Optional[str] = None
    index: Optional[int] = None

    def to_error(self) -> DatasetError:
        return _ERRORS.get(self.code, DatasetError)(self.message)


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ClassSplit:
    """Ordered seen and unseen class ids."""

    seen: tuple
    unseen: tuple

    def __post_init__(self):
        object.__setattr__(self, "seen", tuple(int(c) for c in self.seen))
        object.__setattr__(self, "unseen", tuple(int(c) for c in self.unseen))

    @property
    def all(self) -> tuple:
        return tuple(sorted(set(self.seen) | set(self.unseen)))

    def overlap(self) -> list:
        return sorted(set(self.seen) & set(self.unseen))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N x V feature matrix with optional labels.

    Unlabeled pools carry ``labels=None``. Arrays are read-only.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        feats = np.asarray(self.features)
        if feats.ndim == 1 and feats.size == 0:
            feats = feats.reshape(0, 0)
        if feats.ndim != 2:
            raise DimensionMismatchError(f"features must be 2-D, got shape {feats.shape}")
        if not np.issubdtype(feats.dtype, np.floating):
            feats = feats.astype(np.float64)
        object.__setattr__(self, "features", _frozen(feats))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (feats.shape[0],):
                raise DimensionMismatchError(
                    f"{labels.shape[0] if labels.ndim else 0} labels for {feats.shape[0]} samples"
                )
            object.__setattr__(self, "labels", _frozen(labels, dtype=np.int64))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def unlabeled(self) -> "SampleSet":
        return SampleSet(self.features)


@dataclass(frozen=True, eq=False)
class ZslDataset:
    """Seen-class training data, unlabeled test pools and class semantics.

    ``attributes`` row ``c`` is the semantic vector of class id ``c``.
    """

    split: ClassSplit
    attributes: np.ndarray
    train_seen: SampleSet
    test_unseen: SampleSet
    test_seen: Optional[SampleSet] = None
    name: str = "dataset"
    class_names: tuple = ()
    _hidden: Mapping[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "attributes", _frozen(np.asarray(self.attributes, dtype=np.float64)))
        if not self.class_names:
            names = tuple(f"class_{c}" for c in range(self.attributes.shape[0]))
            object.__setattr__(self, "class_names", names)
        else:
            object.__setattr__(self, "class_names", tuple(self.class_names))
        hidden = {k: _frozen(v, dtype=np.int64) for k, v in dict(self._hidden).items() if v is not None}
        object.__setattr__(self, "_hidden", hidden)
        for pool in ("test_unseen", "test_seen"):
            ss = getattr(self, pool)
            if ss is not None and ss.labels is not None:
                raise ValueError(f"{pool} must be unlabeled; pass its labels as hidden labels")

    @classmethod
    def from_arrays(
        cls,
        split: ClassSplit,
        attributes,
        train_features,
        train_labels,
        unseen_features,
        unseen_labels=None,
        seen_features=None,
        seen_labels=None,
        name: str = "dataset",
        class_names: Sequence[str] = (),
    ) -> "ZslDataset":
        hidden = {}
        if unseen_labels is not None:
            hidden["test_unseen"] = unseen_labels
        if seen_labels is not None:
            hidden["test_seen"] = seen_labels
        return cls(
            split=split,
            attributes=attributes,
            train_seen=SampleSet(train_features, train_labels),
            test_unseen=SampleSet(unseen_features),
            test_seen=None if seen_features is None else SampleSet(seen_features),
            name=name,
            class_names=tuple(class_names),
            _hidden=hidden,
        )

    @property
    def n_classes(self) -> int:
        return self.attributes.shape[0]

    @property
    def V(self) -> int:
        return self.train_seen.dim

    @property
    def S(self) -> int:
        return self.attributes.shape[1]

    @property
    def seen(self) -> np.ndarray:
        return np.array(sorted(self.split.seen), dtype=np.int64)

    @property
    def unseen(self) -> np.ndarray:
        return np.array(sorted(self.split.unseen), dtype=np.int64)

    def pool(self, name: str) -> Optional[SampleSet]:
        if name not in POOLS:
            raise KeyError(name)
        return getattr(self, name)

    def has_hidden(self, pool: str) -> bool:
        return pool in self._hidden


class Oracle:
    """Evaluation-only access to the hidden labels of a dataset's test pools.

    Training, sampling and prior-estimation code never receives an Oracle.
    """

    def __init__(self, ds: ZslDataset):
        self._ds = ds

    @property
    def dataset(self) -> ZslDataset:
        return self._ds

    def labels(self, pool: str) -> np.ndarray:
        if pool == "train_seen":
            return self._ds.train_seen.labels
        try:
            return self._ds._hidden[pool]
        except KeyError:
            raise LookupError(f"no ground-truth labels recorded for {pool!r}") from None

    def labeled(self, pool: str) -> SampleSet:
        ss = self._ds.pool(pool)
        return SampleSet(ss.features, self.labels(pool))


def with_hidden_labels(ds: ZslDataset, **pools) -> ZslDataset:
    """Copy of ``ds`` whose hidden labels are replaced (``pool=labels``)."""
    hidden = dict(ds._hidden)
    hidden.update(pools)
    return replace(ds, _hidden=hidden)


def true_class_counts(oracle: Oracle, pool: str, classes: Optional[Iterable[int]] = None) -> np.ndarray:
    """Per-class ground-truth counts of a pool, ordered like ``classes``.

    ``classes`` defaults to the split side the pool belongs to.
    """
    ds = oracle.dataset
    labels = oracle.labels(pool)
    if classes is None:
        classes = ds.unseen if pool == "test_unseen" else ds.seen
    classes = np.asarray(list(classes), dtype=np.int64)
    return np.array([np.count_nonzero(labels == c) for c in classes], dtype=np.int64)


def class_counts(labels, classes) -> np.ndarray:
    """Tally of explicit ``labels`` over ``classes``."""
    labels = np.asarray(labels, dtype=np.int64)
    return np.array([np.count_nonzero(labels == c) for c in classes], dtype=np.int64)


# -- validation ---------------------------------------------------------------


def _label_violations(pool: str, labels, allowed: set, n_classes: int) -> list:
    out = []
    for i, y in enumerate(np.asarray(labels).tolist()):
        if not 0 <= y < n_classes:
            out.append(Violation("label_out_of_range", f"{pool}[{i}]: label {y} outside [0, {n_classes})", pool, i))
        elif y not in allowed:
            out.append(Violation("label_out_of_range", f"{pool}[{i}]: label {y} is not on the expected split side", pool, i))
    return out


def validate_dataset(ds: ZslDataset) -> list:
    """Every invariant violation of ``ds``; an empty list means valid."""
    out = []
    n_classes, S = ds.attributes.shape if ds.attributes.ndim == 2 else (0, 0)
    overlap = ds.split.overlap()
    if overlap:
        out.append(Violation("split_overlap", f"classes {overlap} are both seen and unseen"))
    for c in ds.split.all:
        if not 0 <= c < n_classes:
            out.append(Violation("label_out_of_range", f"split class {c} has no attribute row"))
    covered = set(ds.split.all)
    for c in range(n_classes):
        if c not in covered:
            out.append(Violation("coverage", f"attribute row {c} belongs to no split", "attributes", c))
    for c in range(n_classes):
        if not np.any(ds.attributes[c]):
            out.append(Violation("zero_attribute_row", f"attribute row {c} is all zero", "attributes", c))
    if not np.all(np.isfinite(ds.attributes)):
        out.append(Violation("dimension_mismatch", "attribute matrix has non-finite entries", "attributes"))

    V = ds.train_seen.dim
    for pool in POOLS:
        ss = ds.pool(pool)
        if ss is None:
            continue
        if len(ss) and ss.dim != V:
            out.append(Violation("dimension_mismatch", f"{pool} has {ss.dim} feature columns, expected {V}", pool))

    seen, unseen = set(ds.split.seen), set(ds.split.unseen)
    if ds.train_seen.labels is None:
        out.append(Violation("label_out_of_range", "train_seen has no labels", "train_seen"))
    else:
        out += _label_violations("train_seen", ds.train_seen.labels, seen, n_classes)
    for pool, allowed in (("test_unseen", unseen), ("test_seen", seen)):
        labels = ds._hidden.get(pool)
        if labels is None:
            continue
        ss = ds.pool(pool)
        if ss is None or len(labels) != len(ss):
            out.append(Violation("dimension_mismatch", f"{pool}: hidden label count does not match samples", pool))
            continue
        out += _label_violations(pool, labels, allowed, n_classes)
    return out


def check_dataset(ds: ZslDataset) -> ZslDataset:
    violations = validate_dataset(ds)
    if violations:
        raise violations[0].to_error()
    return ds


# -- file IO ------------------------------------------------------------------


def _read_csv_matrix(path: Path, expect_cols: Optional[int], label_col: bool):
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    labels, rows = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DimensionMismatchError(f"{path.name}: empty file (header row required)")
        width = len(header)
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != width:
                raise DimensionMismatchError(
                    f"{path.name}: row {i} has {len(row) - label_col} feature columns, expected {width - label_col}"
                )
            if label_col:
                labels.append(row[0])
                row = row[1:]
            rows.append([float(v) for v in row])
    ncols = width - label_col
    if expect_cols is not None and ncols != expect_cols:
        raise DimensionMismatchError(f"{path.name}: {ncols} feature columns, meta declares {expect_cols}")
    feats = np.array(rows, dtype=np.float64).reshape(len(rows), ncols)
    if not label_col:
        return feats, None
    if all(v == "" for v in labels):
        return feats, None
    try:
        return feats, np.array([int(v) for v in labels], dtype=np.int64)
    except ValueError as exc:
        raise LabelRangeError(f"{path.name}: non-integer label ({exc})") from None


def _write_csv_matrix(path: Path, feats: np.ndarray, labels=None, prefix="f", label_col=True):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = (["label"] if label_col else []) + [f"{prefix}{j}" for j in range(feats.shape[1])]
        w.writerow(header)
        for i, row in enumerate(feats):
            cells = [repr(float(v)) for v in row]
            if label_col:
                cells.insert(0, "" if labels is None else str(int(labels[i])))
            w.writerow(cells)


def _read_binary(dirpath: Path, expect_cols: Optional[int]):
    header_path, blob_path = dirpath / "header.json", dirpath / "features.f32"
    for p in (header_path, blob_path):
        if not p.exists():
            raise MissingFileError(f"missing file: {p}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    rows, cols = int(header["rows"]), int(header["cols"])
    if expect_cols is not None and cols != expect_cols:
        raise DimensionMismatchError(f"{dirpath.name}: {cols} feature columns, meta declares {expect_cols}")
    raw = np.fromfile(blob_path, dtype="<f4")
    if raw.size != rows * cols:
        raise DimensionMismatchError(f"{blob_path}: {raw.size} values, header declares {rows}x{cols}")
    labels = header.get("labels")
    return raw.reshape(rows, cols), None if labels is None else np.array(labels, dtype=np.int64)


def _write_binary(dirpath: Path, feats: np.ndarray, labels=None):
    dirpath.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(feats, dtype="<f4").tofile(dirpath / "features.f32")
    header = {
        "schema_version": SCHEMA_VERSION,
        "rows": int(feats.shape[0]),
        "cols": int(feats.shape[1]),
        "dtype": "float32",
        "byteorder": "little",
        "order": "row-major",
        "labels": None if labels is None else [int(v) for v in labels],
    }
    (dirpath / "header.json").write_text(json.dumps(header, indent=1) + "\n", encoding="utf-8")


def save_dataset(ds: ZslDataset, path, fmt: str = "csv") -> Path:
    """Write ``ds`` in the interchange layout. ``fmt`` is ``csv`` or ``f32``."""
    if fmt not in ("csv", "f32"):
        raise ValueError(f"unknown format {fmt!r}")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    oracle = Oracle(ds)
    pools = [p for p in POOLS if ds.pool(p) is not None]
    meta = {
        "schema_version": SCHEMA_VERSION,
        "name": ds.name,
        "V": int(ds.V),
        "S": int(ds.S),
        "class_names": list(ds.class_names),
        "seen": list(ds.split.seen),
        "unseen": list(ds.split.unseen),
        "pools": pools,
        "evaluation_only": [p for p in EVALUATION_ONLY if p in pools],
        "format": fmt,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    _write_csv_matrix(root / "attributes.csv", ds.attributes, prefix="a", label_col=False)
    for pool in pools:
        feats = ds.pool(pool).features
        labels = oracle.labels(pool) if (pool == "train_seen" or ds.has_hidden(pool)) else None
        if fmt == "csv":
            _write_csv_matrix(root / f"{pool}.csv", feats, labels)
        else:
            _write_binary(root / pool, feats, labels)
    return root


def load_dataset(path, validate: bool = True) -> ZslDataset:
    """Read and validate a dataset directory.

    Raises a :class:`DatasetError` subclass naming the first problem found.
    With ``validate=False`` only parse errors raise; call
    :func:`validate_dataset` to list the remaining violations.
    """
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise MissingFileError(f"missing file: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    V, S = int(meta["V"]), int(meta["S"])
    fmt = meta.get("format", "csv")
    attrs, _ = _read_csv_matrix(root / "attributes.csv", S, label_col=False)
    split = ClassSplit(meta["seen"], meta["unseen"])
    if split.overlap():
        raise SplitOverlapError(f"classes {split.overlap()} are both seen and unseen")

    loaded = {}
    for pool in meta.get("pools", ["train_seen", "test_unseen"] + (["test_seen"] if (root / "test_seen.csv").exists() else [])):
        if fmt == "csv":
            loaded[pool] = _read_csv_matrix(root / f"{pool}.csv", V, label_col=True)
        elif fmt == "f32":
            loaded[pool] = _read_binary(root / pool, V)
        else:
            raise DatasetError(f"unknown format {fmt!r} in meta.json")
    for required in ("train_seen", "test_unseen"):
        if required not in loaded:
            raise MissingFileError(f"meta.json lists no {required} pool")

    ts_feats, ts_labels = loaded["train_seen"]
    if ts_labels is None:
        raise LabelRangeError("train_seen.csv has no labels")
    tu_feats, tu_labels = loaded["test_unseen"]
    sf, sl = loaded.get("test_seen", (None, None))
    ds = ZslDataset.from_arrays(
        split,
        attrs,
        ts_feats,
        ts_labels,
        tu_feats,
        tu_labels,
        sf,
        sl,
        name=meta.get("name", root.name),
        class_names=meta.get("class_names", ()),
    )
    return check_dataset(ds) if validate else ds


def dataset_fingerprint(ds: ZslDataset) -> str:
    """Content hash over every matrix, label vector and split list."""
    h = hashlib.sha256()
    h.update(json.dumps([list(ds.split.seen), list(ds.split.unseen), ds.name, list(ds.class_names)]).encode())
    arrays = [ds.attributes, ds.train_seen.features, ds.train_seen.labels, ds.test_unseen.features]
    if ds.test_seen is not None:
        arrays.append(ds.test_seen.features)
    arrays += [ds._hidden[k] for k in sorted(ds._hidden)]
    for a in arrays:
        h.update(str(a.dtype).encode())
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()
