"""Dataset container, CSV ingestion, and partialling-out of exogenous controls.

Downstream estimators and tests operate on :class:`PartialledData`, i.e. on the
model with all included exogenous controls (intercept included by the caller)
residualized away from the outcome, the endogenous regressor, and the
instruments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = ["Dataset", "PartialledData", "load_csv", "partial_out"]

_RANK_RTOL = 1e-10


def _as_matrix(a, name):
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise InputError(f"{name} must be a vector or matrix, got ndim={m.ndim}")
    return m


def _dense_cluster_codes(labels):
    """Dense 0..G-1 codes in sorted label order, so integer labels that are
    already dense codes map to themselves."""
    _, codes = np.unique(labels, return_inverse=True)
    return codes.astype(np.int64)


def _first_dependent_column(m):
    """Index of the first column linearly dependent on its predecessors."""
    n, k = m.shape
    basis = np.zeros((n, 0))
    for j in range(k):
        col = m[:, j]
        resid = col - basis @ (basis.T @ col)
        norm = np.linalg.norm(col)
        if np.linalg.norm(resid) <= max(_RANK_RTOL * norm, 1e-300):
            return j
        basis = np.column_stack([basis, resid / np.linalg.norm(resid)])
    return None


def _check_full_rank(m, what):
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.size == 0 or sv[-1] <= _RANK_RTOL * sv[0]:
        j = _first_dependent_column(m)
        where = f" (column index {j})" if j is not None else ""
        raise InputError(f"{what} is rank deficient: collinear column{where}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw single-endogenous-regressor IV data.

    y: outcome (n,); x: endogenous regressor (n,); z: excluded instruments
    (n, k_z); controls: optional included exogenous columns (n, k_c), intercept
    included by the user; cluster: optional labels, stored as dense integer
    codes in sorted label order.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    controls: np.ndarray | None = None
    cluster: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float).ravel()
        z = _as_matrix(self.z, "z")
        controls = None if self.controls is None else _as_matrix(self.controls, "controls")
        n = y.size
        if x.size != n or z.shape[0] != n:
            raise InputError("y, x, z must share the same number of rows")
        if controls is not None and controls.shape[0] != n:
            raise InputError("controls must have the same number of rows as y")
        for name, arr in (("y", y), ("x", x), ("z", z)) + (
            () if controls is None else (("controls", controls),)
        ):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite value in {name}")
        k_z = z.shape[1]
        k_c = 0 if controls is None else controls.shape[1]
        if k_z < 1:
            raise InputError("at least one instrument column is required")
        if n < k_z + k_c + 2:
            raise InputError(
                f"need at least k_z + k_c + 2 = {k_z + k_c + 2} rows, got {n}"
            )
        cluster = self.cluster
        if cluster is not None:
            cluster = np.asarray(cluster).ravel()
            if cluster.size != n:
                raise InputError("cluster labels must have the same length as y")
            cluster = _dense_cluster_codes(cluster)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "cluster", cluster)

    @property
    def n(self):
        return self.y.size

    @property
    def k_z(self):
        return self.z.shape[1]


@dataclass(frozen=True, eq=False)
class PartialledData:
    """y, x, z with controls residualized away (orthogonal to the controls)."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    cluster: np.ndarray | None = None

    @property
    def n(self):
        return self.y.size

    @property
    def k_z(self):
        return self.z.shape[1]


def partial_out(data):
    """Residualize y, x, and each instrument column on the controls.

    Uses a QR factorization of the control matrix. With no controls this is an
    identity pass-through. The instruments must keep full column rank after
    partialling.
    """
    if data.controls is None:
        _check_full_rank(data.z, "instrument matrix")
        return PartialledData(y=data.y, x=data.x, z=data.z, cluster=data.cluster)
    _check_full_rank(data.controls, "control matrix")
    q, _ = np.linalg.qr(data.controls, mode="reduced")

    def resid(m):
        return m - q @ (q.T @ m)

    z = resid(data.z)
    _check_full_rank(z, "instrument matrix after partialling")
    return PartialledData(y=resid(data.y), x=resid(data.x), z=z, cluster=data.cluster)


def load_csv(path, y, x, z, controls=(), cluster=None):
    """Load a header CSV binding columns to model roles.

    `y`, `x` name single columns; `z` and `controls` are sequences of column
    names; `cluster` optionally names a label column (values kept as opaque
    strings). Empty cells and non-numeric cells are errors reported with their
    data row (1-based, header excluded) and column.
    """
    z = list(z)
    controls = list(controls)
    if not z:
        raise InputError("at least one instrument column must be given")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        index = {}
        for i, name in enumerate(header):
            index.setdefault(name, i)
        needed = [y, x, *z, *controls] + ([cluster] if cluster is not None else [])
        for name in needed:
            if name not in index:
                raise InputError(f"{path}: missing column {name!r}")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")

    def numeric(colname):
        ci = index[colname]
        out = np.empty(len(rows))
        for r, row in enumerate(rows):
            cell = row[ci].strip() if ci < len(row) else ""
            if cell == "":
                raise InputError(
                    f"{path}: empty cell at row {r + 1}, column {colname!r}"
                )
            try:
                out[r] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric cell {cell!r} at row {r + 1}, "
                    f"column {colname!r}"
                ) from None
        return out

    y_col = numeric(y)
    x_col = numeric(x)
    z_mat = np.column_stack([numeric(name) for name in z])
    c_mat = np.column_stack([numeric(name) for name in controls]) if controls else None
    cl = None
    if cluster is not None:
        ci = index[cluster]
        cl = np.array(
            [row[ci].strip() if ci < len(row) else "" for row in rows], dtype=object
        )
        if any(v == "" for v in cl):
            r = next(r for r, v in enumerate(cl) if v == "")
            raise InputError(
                f"{path}: empty cell at row {r + 1}, column {cluster!r}"
            )
    ds = Dataset(y=y_col, x=x_col, z=z_mat, controls=c_mat, cluster=cl)
    try:
        partial_out(ds)
    except InputError as exc:
        # map a bare column index from the rank check back to the column name
        msg = str(exc)
        for j, name in enumerate(z):
            if f"column index {j}" in msg and "instrument" in msg:
                raise InputError(
                    f"{path}: instrument column {name!r} is collinear with the "
                    "other instruments/controls"
                ) from None
        raise
    return ds
