"""Observation storage, CSV ingestion and train/estimation splitting.

A :class:`Dataset` holds the outcome ``y``, treatments ``x``, controls
``z1`` (callers include an explicit ones column if they want an
intercept moment), instruments ``z2`` and, optionally, integer cluster
ids for clustered longitudinal data.  Datasets are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, IdentificationError, ParseError, SchemaError


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DataError(f"{name} must be a vector or matrix, got ndim={m.ndim}")
    return m


@dataclass(frozen=True)
class Dataset:
    """Immutable container for (y, x, z1, z2) observations.

    If ``cluster_ids`` is given, rows are stored sorted by cluster id
    (stable sort) so every cluster occupies a contiguous block.
    """

    y: np.ndarray
    x: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    cluster_ids: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = _as_matrix(self.x, "x")
        z1 = _as_matrix(self.z1, "z1")
        z2 = _as_matrix(self.z2, "z2")
        n = y.shape[0]
        for name, m in (("x", x), ("z1", z1), ("z2", z2)):
            if m.shape[0] != n:
                raise DataError(f"{name} has {m.shape[0]} rows, expected {n}")
            if m.shape[1] < 1:
                raise DataError(f"{name} must have at least one column")
        if z2.shape[1] < x.shape[1]:
            raise IdentificationError(
                f"order condition violated: {z2.shape[1]} instruments for "
                f"{x.shape[1]} treatments"
            )
        for name, m in (("y", y), ("x", x), ("z1", z1), ("z2", z2)):
            if not np.all(np.isfinite(m)):
                raise DataError(f"non-finite values in {name}")
        cid = self.cluster_ids
        if cid is not None:
            cid = np.asarray(cid, dtype=np.int64).reshape(-1)
            if cid.shape[0] != n:
                raise DataError("cluster_ids length does not match n")
            order = np.argsort(cid, kind="stable")
            y, x, z1, z2 = y[order], x[order], z1[order], z2[order]
            cid = cid[order]
        for name, val in (("y", y), ("x", x), ("z1", z1), ("z2", z2),
                          ("cluster_ids", cid)):
            object.__setattr__(self, name, val)
        self.y.setflags(write=False)
        self.x.setflags(write=False)
        self.z1.setflags(write=False)
        self.z2.setflags(write=False)
        if cid is not None:
            cid.setflags(write=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def d_z1(self) -> int:
        return self.z1.shape[1]

    @property
    def d_z2(self) -> int:
        return self.z2.shape[1]

    @property
    def clustered(self) -> bool:
        return self.cluster_ids is not None

    def cluster_slices(self) -> list[slice]:
        """Contiguous row slices, one per cluster (or per row if flat)."""
        if self.cluster_ids is None:
            return [slice(i, i + 1) for i in range(self.n)]
        ids = self.cluster_ids
        starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
        ends = np.r_[starts[1:], ids.shape[0]]
        return [slice(int(s), int(e)) for s, e in zip(starts, ends)]

    def n_blocks(self) -> int:
        if self.cluster_ids is None:
            return self.n
        return int(np.unique(self.cluster_ids).shape[0])

    def take(self, idx: np.ndarray) -> "Dataset":
        """New Dataset restricted to the given row indices."""
        cid = None if self.cluster_ids is None else self.cluster_ids[idx]
        return Dataset(self.y[idx], self.x[idx], self.z1[idx], self.z2[idx], cid)


@dataclass(frozen=True)
class SplitSpec:
    """Training/estimation split: fraction of rows (or clusters) and seed."""

    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class CsvSchema:
    """Column-name mapping for :func:`load_csv`."""

    y: str
    x: list[str]
    z1: list[str]
    z2: list[str]
    cluster: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        return cls(y=d["y"], x=list(d["x"]), z1=list(d["z1"]),
                   z2=list(d["z2"]), cluster=d.get("cluster"))


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a comma-delimited, headered CSV into a Dataset.

    Raises :class:`SchemaError` for missing columns, :class:`ParseError`
    (naming the offending row and column) for non-numeric cells, and
    :class:`IdentificationError` when ``len(z2) < len(x)``.
    """
    if isinstance(schema, dict):
        schema = CsvSchema.from_dict(schema)
    if len(schema.z2) < len(schema.x):
        raise IdentificationError(
            f"order condition violated: {len(schema.z2)} instruments for "
            f"{len(schema.x)} treatments"
        )
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        col_idx = {name: i for i, name in enumerate(header)}
        wanted = [schema.y, *schema.x, *schema.z1, *schema.z2]
        if schema.cluster is not None:
            wanted.append(schema.cluster)
        for name in wanted:
            if name not in col_idx:
                raise SchemaError(f"column {name!r} not found in {path}")
        rows = []
        for r, rec in enumerate(reader, start=1):
            vals = []
            for name in wanted:
                cell = rec[col_idx[name]]
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric value {cell!r} at row {r}, "
                        f"column {name!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    nx, nz1, nz2 = len(schema.x), len(schema.z1), len(schema.z2)
    y = data[:, 0]
    x = data[:, 1:1 + nx]
    z1 = data[:, 1 + nx:1 + nx + nz1]
    z2 = data[:, 1 + nx + nz1:1 + nx + nz1 + nz2]
    cid = None
    if schema.cluster is not None:
        cid = data[:, -1].astype(np.int64)
    return Dataset(y, x, z1, z2, cid)


def save_csv(ds: Dataset, path, schema: CsvSchema | None = None) -> None:
    """Write a Dataset back to CSV with round-trip-safe decimal rendering."""
    if schema is None:
        names = (["y"]
                 + [f"x{j}" for j in range(ds.d_x)]
                 + [f"z1_{j}" for j in range(ds.d_z1)]
                 + [f"z2_{j}" for j in range(ds.d_z2)])
        if ds.clustered:
            names.append("cluster")
    else:
        if isinstance(schema, dict):
            schema = CsvSchema.from_dict(schema)
        names = [schema.y, *schema.x, *schema.z1, *schema.z2]
        if schema.cluster is not None:
            names.append(schema.cluster)
    cols = [ds.y] + [ds.x[:, j] for j in range(ds.d_x)] \
        + [ds.z1[:, j] for j in range(ds.d_z1)] \
        + [ds.z2[:, j] for j in range(ds.d_z2)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(ds.n):
            row = [repr(float(c[i])) for c in cols]
            if ds.clustered:
                row.append(str(int(ds.cluster_ids[i])))
            writer.writerow(row)


def split_train(ds: Dataset, spec: SplitSpec,
                min_rows: int = 10) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint split into (train, estimation) sets.

    Clustered datasets are split by whole clusters.  The training set
    must have at least ``min_rows`` rows.
    """
    rng = np.random.default_rng(spec.seed)
    if ds.clustered:
        uniq = np.unique(ds.cluster_ids)
        n_train = int(round(len(uniq) * spec.train_fraction))
        if n_train < 1:
            raise DataError("training split selects zero clusters")
        chosen = rng.permutation(len(uniq))[:n_train]
        train_ids = set(uniq[chosen].tolist())
        mask = np.array([c in train_ids for c in ds.cluster_ids])
    else:
        n_train = int(round(ds.n * spec.train_fraction))
        mask = np.zeros(ds.n, dtype=bool)
        mask[rng.permutation(ds.n)[:n_train]] = True
    if int(mask.sum()) < min_rows:
        raise DataError(
            f"training set has {int(mask.sum())} rows, need >= {min_rows}"
        )
    return ds.take(np.flatnonzero(mask)), ds.take(np.flatnonzero(~mask))
