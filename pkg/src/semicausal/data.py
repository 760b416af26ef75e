"""Observed semi-competing-risks data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class SubjectRecord:
    """One observed subject ``(X, Y, delta1, delta2, A, Z)``."""

    x: float
    y: float
    d1: int
    d2: int
    a: int
    z: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented container for ``n`` subjects.

    ``x = min(T1, T2, C)`` and ``y = min(T2, C)`` with event indicators
    ``d1``/``d2``, binary treatment ``a`` and an ``(n, p)`` covariate matrix.
    """

    x: np.ndarray
    y: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    a: np.ndarray
    z: np.ndarray
    covariate_names: tuple = field(default=())

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        n = x.shape[0]
        if z.ndim == 1:
            z = z.reshape(n, -1)
        arrays = dict(
            x=x,
            y=y,
            d1=np.asarray(self.d1).astype(np.int64),
            d2=np.asarray(self.d2).astype(np.int64),
            a=np.asarray(self.a).astype(np.int64),
            z=z,
        )
        for name, arr in arrays.items():
            if arr.shape[0] != n:
                raise ValidationError(f"column {name} has {arr.shape[0]} rows, expected {n}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise ValidationError("non-finite values in data")
        if np.any(x < 0) or np.any(y < 0):
            raise ValidationError("negative times in data")
        bad = np.flatnonzero(x > y)
        if bad.size:
            raise ValidationError(f"x > y for subject(s) {bad[:5].tolist()}")
        for name in ("d1", "d2", "a"):
            if not np.isin(arrays[name], (0, 1)).all():
                raise ValidationError(f"{name} must be binary")
        names = tuple(self.covariate_names) or tuple(f"z{j + 1}" for j in range(z.shape[1]))
        if len(names) != z.shape[1]:
            raise ValidationError("covariate_names does not match the number of columns of z")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def __len__(self):
        return self.n

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.x[idx], self.y[idx], self.d1[idx], self.d2[idx],
            self.a[idx], self.z[idx], self.covariate_names,
        )

    def arm(self, a: int) -> "Dataset":
        return self.subset(np.flatnonzero(self.a == a))

    def record(self, i: int) -> SubjectRecord:
        return SubjectRecord(
            float(self.x[i]), float(self.y[i]), int(self.d1[i]),
            int(self.d2[i]), int(self.a[i]), self.z[i].copy(),
        )

    def censoring_rates(self):
        """Fraction of subjects with ``d1 == 0`` and with ``d2 == 0``."""
        return 1.0 - self.d1.mean(), 1.0 - self.d2.mean()

    def equals(self, other: "Dataset") -> bool:
        return (
            self.covariate_names == other.covariate_names
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("x", "y", "d1", "d2", "a", "z")
            )
        )
