"""
Integer-lattice geometry: points, neighborhood templates, sampling windows,
interior sites, and the shifted-array kernel used for neighbor sums.
"""
import itertools
from typing import FrozenSet, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import DataError

LatticePoint = Tuple[int, ...]


class NeighborhoodTemplate(BaseModel):
    """Finite set M of nonzero offsets; the neighbors of s are s + M."""

    model_config = ConfigDict(frozen=True)

    dim: int
    offsets: Tuple[Tuple[int, ...], ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _normalize(cls, data):
        if not isinstance(data, dict):
            return data
        offsets = [tuple(int(c) for c in o) for o in data.get("offsets", ())]
        if len(set(offsets)) != len(offsets):
            raise ValueError("template offsets must be distinct")
        if "dim" not in data:
            if not offsets:
                raise ValueError("an empty template needs an explicit dim")
            data = {**data, "dim": len(offsets[0])}
        return {**data, "offsets": tuple(sorted(offsets))}

    @model_validator(mode="after")
    def _check(self):
        if self.dim < 1:
            raise ValueError("template dimension must be >= 1")
        for offset in self.offsets:
            if len(offset) != self.dim:
                raise ValueError(f"offset {offset} does not have dimension {self.dim}")
            if not any(offset):
                raise ValueError("the zero offset cannot be part of a neighborhood template")
        return self

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def m(self) -> Tuple[int, ...]:
        """Maximal absolute value of each offset component."""
        if not self.offsets:
            return (0,) * self.dim
        return tuple(int(v) for v in np.abs(np.array(self.offsets)).max(axis=0))

    @property
    def delta(self) -> Tuple[int, ...]:
        """Diagonal of Delta = diag(m_1 + 1, ..., m_d + 1)."""
        return tuple(mi + 1 for mi in self.m)

    @property
    def delta_matrix(self) -> np.ndarray:
        return np.diag(self.delta)

    @property
    def symmetric_offsets(self) -> FrozenSet[LatticePoint]:
        """The set +-M."""
        return frozenset(self.offsets) | frozenset(tuple(-c for c in o) for o in self.offsets)


def named_template(name: str, dim: int = 2) -> NeighborhoodTemplate:
    """Standard templates: four_nearest/nearest, eight_nearest/queen, unilateral."""
    key = name.lower().replace("-", "_")
    units = [tuple(1 if i == axis else 0 for i in range(dim)) for axis in range(dim)]
    if key in ("four_nearest", "nearest", "4nn", "rook"):
        offsets = units + [tuple(-c for c in u) for u in units]
    elif key in ("eight_nearest", "queen", "8nn"):
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=dim) if any(o)]
    elif key == "unilateral":
        offsets = [tuple(-c for c in u) for u in units]
    else:
        raise ValueError(f"unknown template name: {name}")
    return NeighborhoodTemplate(dim=dim, offsets=offsets)


def neighbors(s: LatticePoint, template: NeighborhoodTemplate) -> FrozenSet[LatticePoint]:
    """N(s) = s + M."""
    if len(s) != template.dim:
        raise ValueError(f"point {s} has dimension {len(s)}, template has {template.dim}")
    return frozenset(tuple(a + b for a, b in zip(s, offset)) for offset in template.offsets)


class SamplingWindow(BaseModel):
    """Axis-aligned box [lower, upper] with an optional observation mask."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lower: Tuple[int, ...]
    upper: Tuple[int, ...]
    mask: Optional[np.ndarray] = None

    @field_validator("mask", mode="before")
    @classmethod
    def _as_bool(cls, value):
        if value is None:
            return None
        mask = np.array(value, dtype=bool)
        mask.setflags(write=False)
        return mask

    @model_validator(mode="after")
    def _check(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("window bounds must share a dimension >= 1")
        if any(lo > up for lo, up in zip(self.lower, self.upper)):
            raise ValueError(f"window lower {self.lower} exceeds upper {self.upper}")
        if self.mask is not None and self.mask.shape != self.shape:
            raise ValueError(f"mask shape {self.mask.shape} does not match window {self.shape}")
        if self.n_observed == 0:
            raise ValueError("sampling window has no observed sites")
        return self

    @classmethod
    def full(cls, shape: Tuple[int, ...], lower: Optional[Tuple[int, ...]] = None) -> "SamplingWindow":
        lower = tuple(lower) if lower is not None else (0,) * len(shape)
        return cls(lower=lower, upper=tuple(lo + n - 1 for lo, n in zip(lower, shape)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(up - lo + 1 for lo, up in zip(self.lower, self.upper))

    @property
    def observed(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def coordinates(self) -> List[np.ndarray]:
        """Absolute lattice coordinates of every window cell, one array per axis."""
        return [idx + lo for idx, lo in zip(np.indices(self.shape), self.lower)]

    def to_point(self, index: Tuple[int, ...]) -> LatticePoint:
        return tuple(int(i) + lo for i, lo in zip(index, self.lower))

    def points(self, selection: np.ndarray) -> List[LatticePoint]:
        """Lattice points of the cells selected by a boolean array, in lexicographic order."""
        return [self.to_point(index) for index in zip(*np.nonzero(selection))]

    def sites(self) -> List[LatticePoint]:
        return self.points(self.observed)

    def is_observed(self, point: LatticePoint) -> bool:
        index = tuple(p - lo for p, lo in zip(point, self.lower))
        if any(i < 0 or i >= n for i, n in zip(index, self.shape)):
            return False
        return bool(self.observed[index])


def shifted(arr: np.ndarray, offset: Tuple[int, ...], fill, periodic: bool = False) -> np.ndarray:
    """Array whose cell s holds arr[s + offset] over the trailing len(offset) axes.

    Cells whose source falls outside the array get ``fill`` unless ``periodic``.
    """
    d = len(offset)
    axes = tuple(range(arr.ndim - d, arr.ndim))
    if periodic:
        return np.roll(arr, shift=[-o for o in offset], axis=axes)
    out = np.full_like(arr, fill)
    src, dst = [], []
    for o, n in zip(offset, arr.shape[arr.ndim - d:]):
        if abs(o) >= n:
            return out
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[(Ellipsis, *dst)] = arr[(Ellipsis, *src)]
    return out


def neighbor_sums(
    values: np.ndarray,
    observed: np.ndarray,
    template: NeighborhoodTemplate,
    periodic: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Sum and count of observed neighbor values at every cell."""
    filled = np.where(observed, values, 0.0)
    total = np.zeros(filled.shape, dtype=float)
    count = np.zeros(filled.shape, dtype=int)
    for offset in template.offsets:
        total += shifted(filled, offset, 0.0, periodic)
        count += shifted(observed, offset, False, periodic)
    return total, count


def interior_mask(window: SamplingWindow, template: NeighborhoodTemplate) -> np.ndarray:
    """Observed cells all of whose neighbors are observed."""
    if window.dim != template.dim:
        raise ValueError(f"window dimension {window.dim} does not match template dimension {template.dim}")
    observed = window.observed
    inside = observed.copy()
    for offset in template.offsets:
        inside &= shifted(observed, offset, False)
    return inside


def interior_set(window: SamplingWindow, template: NeighborhoodTemplate) -> FrozenSet[LatticePoint]:
    """S_N^int: observed sites with every neighbor observed."""
    return frozenset(window.points(interior_mask(window, template)))


def _checked_values(value) -> np.ndarray:
    values = np.array(value, dtype=float)
    if values.ndim < 1 or values.size == 0:
        raise DataError("grid data must be a non-empty array")
    if np.isinf(values).any():
        raise DataError("grid data contains infinite values")
    return values


class GridData(BaseModel):
    """Observed values on a rectangular window; NaN marks masked cells."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    lower: Optional[Tuple[int, ...]] = None

    @field_validator("values", mode="before")
    @classmethod
    def _as_float(cls, value):
        values = _checked_values(value)
        values.setflags(write=False)
        return values

    @classmethod
    def from_array(cls, values, lower: Optional[Tuple[int, ...]] = None) -> "GridData":
        """Build from raw values, raising DataError for empty or infinite input."""
        return cls(values=_checked_values(values), lower=lower)

    @property
    def origin(self) -> Tuple[int, ...]:
        return self.lower if self.lower is not None else (0,) * self.values.ndim

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def window(self) -> SamplingWindow:
        shape = self.values.shape
        mask = self.observed
        return SamplingWindow(
            lower=self.origin,
            upper=tuple(lo + n - 1 for lo, n in zip(self.origin, shape)),
            mask=None if mask.all() else mask,
        )

    def observed_values(self) -> np.ndarray:
        """Observed values in lexicographic site order."""
        return self.values[self.observed]
