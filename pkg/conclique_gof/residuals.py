"""
Generalized spatial residuals, per-conclique empirical processes, and the
four pooled goodness-of-fit statistics.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import trapezoid

from .conclique import ConcliqueCover, label_grid
from .lattice import GridData, interior_mask, neighbor_sums
from .models import EdgeRule, MrfModel

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 1024
DEFAULT_R = 2.0


def default_u_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


class ResidualSet(BaseModel):
    """Residuals grouped by conclique, with the lattice sites they came from."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    per_conclique: List[np.ndarray]
    sites: List[np.ndarray]
    n_total: int
    u_grid: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        if sum(v.size for v in self.per_conclique) != self.n_total:
            raise ValueError("n_total must equal the number of residuals")
        for v in self.per_conclique:
            if v.size and (v.min() < 0.0 or v.max() > 1.0):
                raise ValueError("residuals must lie in [0, 1]")
        grid = self.u_grid
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
            raise ValueError("u_grid must be strictly increasing inside [0, 1]")
        return self

    @property
    def q(self) -> int:
        return len(self.per_conclique)

    @property
    def conclique_sizes(self) -> Tuple[int, ...]:
        return tuple(v.size for v in self.per_conclique)


class EmpiricalProcessSet(BaseModel):
    """W_jN(u) = sqrt(N) (G_jN(u) - u) on the u grid, one row per conclique."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u_grid: np.ndarray
    values: List[np.ndarray]
    n_total: int
    sorted_residuals: Optional[List[np.ndarray]] = None

    @property
    def q(self) -> int:
        return len(self.values)

    def sup_norms(self) -> np.ndarray:
        """sup_u |W_jN(u)|, exact at the ECDF jumps when residuals are available."""
        if self.sorted_residuals is None:
            return np.array([np.abs(v).max() for v in self.values])
        scale = np.sqrt(self.n_total)
        sups = []
        for s in self.sorted_residuals:
            n = s.size
            i = np.arange(1, n + 1)
            sups.append(scale * max(np.max(i / n - s), np.max(s - (i - 1) / n)))
        return np.array(sups)


class GofStatistics(BaseModel):
    model_config = ConfigDict(frozen=True)

    t1: float
    t2: float
    t3: float
    t4: float
    r: float = DEFAULT_R

    def as_array(self) -> np.ndarray:
        return np.array([self.t1, self.t2, self.t3, self.t4])

    @classmethod
    def from_array(cls, values, r: float = DEFAULT_R) -> "GofStatistics":
        t1, t2, t3, t4 = (float(v) for v in values)
        return cls(t1=t1, t2=t2, t3=t3, t4=t4, r=r)


def generalized_residuals(
    data: GridData,
    model: MrfModel,
    cover: ConcliqueCover,
    rng: Optional[np.random.Generator],
    edge_rule: Optional[EdgeRule] = None,
    a_field: Optional[np.ndarray] = None,
    u_grid: Optional[np.ndarray] = None,
) -> ResidualSet:
    """U(s) = (1 - A(s)) F(y(s) | nbrs) + A(s) F^-(y(s) | nbrs) at every eligible site.

    A(s) ~ Uniform(0, 1) is drawn in lexicographic site order from ``rng``
    unless a fixed ``a_field`` (one value per window cell) is supplied.
    Under ``interior_only`` sites with a missing neighbor are skipped; under
    ``truncated_neighbors`` only the observed neighbors enter the conditional.
    """
    if cover.template != model.template:
        raise ValueError("conclique cover and model use different templates")
    edge_rule = EdgeRule(edge_rule or model.edge_rule)
    window = data.window
    labels = label_grid(window, cover, interior_only=edge_rule == EdgeRule.INTERIOR_ONLY)
    field = residual_field(data, model, rng, edge_rule, a_field)

    eligible = labels >= 0
    u = field[eligible]
    site_labels = labels[eligible]
    coords = np.stack([c[eligible] for c in window.coordinates()], axis=1)
    per_conclique = [u[site_labels == j] for j in range(cover.q)]
    sites = [coords[site_labels == j] for j in range(cover.q)]
    return ResidualSet(
        per_conclique=per_conclique,
        sites=sites,
        n_total=int(u.size),
        u_grid=default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float),
    )


def residual_field(
    data: GridData,
    model: MrfModel,
    rng: Optional[np.random.Generator],
    edge_rule: Optional[EdgeRule] = None,
    a_field: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Generalized residual of every eligible window cell; NaN elsewhere."""
    edge_rule = EdgeRule(edge_rule or model.edge_rule)
    window = data.window
    observed = window.observed
    eligible = interior_mask(window, model.template) if edge_rule == EdgeRule.INTERIOR_ONLY else observed

    total, count = neighbor_sums(data.values, observed, model.template)
    y = data.values[eligible]
    if a_field is not None:
        a_field = np.asarray(a_field, dtype=float)
        if a_field.shape != window.shape:
            raise ValueError(f"a_field shape {a_field.shape} does not match window {window.shape}")
        a = a_field[eligible]
    elif rng is None:
        raise ValueError("an rng or a fixed a_field is required")
    else:
        a = rng.random(y.size)

    upper = model.cdf(y, total[eligible], count[eligible])
    lower = model.cdf_left(y, total[eligible], count[eligible])
    field = np.full(window.shape, np.nan)
    field[eligible] = np.clip((1.0 - a) * upper + a * lower, 0.0, 1.0)
    return field


def residual_lag_correlation(residuals: ResidualSet, lag: Tuple[int, ...]) -> Tuple[float, int]:
    """Sample correlation of residual pairs (U(s), U(s + lag)) lying in the same conclique."""
    first, second = [], []
    for values, sites in zip(residuals.per_conclique, residuals.sites):
        lookup = {tuple(int(c) for c in site): value for site, value in zip(sites, values)}
        for site, value in lookup.items():
            other = lookup.get(tuple(c + l for c, l in zip(site, lag)))
            if other is not None:
                first.append(value)
                second.append(other)
    if len(first) < 3:
        raise ValueError(f"too few residual pairs at lag {lag}")
    return float(np.corrcoef(first, second)[0, 1]), len(first)


def empirical_process(residuals: ResidualSet) -> EmpiricalProcessSet:
    u = residuals.u_grid
    scale = np.sqrt(residuals.n_total)
    values, sorted_residuals = [], []
    for j, r in enumerate(residuals.per_conclique):
        if r.size == 0:
            raise ValueError(f"conclique {j} has no residuals")
        s = np.sort(r)
        ecdf = np.searchsorted(s, u, side="right") / s.size
        values.append(scale * (ecdf - u))
        sorted_residuals.append(s)
    return EmpiricalProcessSet(
        u_grid=u, values=values, n_total=residuals.n_total, sorted_residuals=sorted_residuals
    )


def evaluate_functionals(paths: np.ndarray, u_grid: np.ndarray, r: float, sup_norms: np.ndarray) -> np.ndarray:
    """The four combining functionals of a batch of q-vector paths.

    ``paths`` has shape (..., q, G) on ``u_grid``; ``sup_norms`` has shape
    (..., q). Returns (..., 4): max and root-mean-square of the sups, max and
    mean of the L_r norms.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    norms = trapezoid(np.abs(paths) ** r, u_grid, axis=-1) ** (1.0 / r)
    return np.stack(
        [
            sup_norms.max(axis=-1),
            np.sqrt(np.mean(sup_norms ** 2, axis=-1)),
            norms.max(axis=-1),
            norms.mean(axis=-1),
        ],
        axis=-1,
    )


def compute_statistics(processes: EmpiricalProcessSet, r: float = DEFAULT_R) -> GofStatistics:
    paths = np.stack(processes.values)
    values = evaluate_functionals(paths, processes.u_grid, r, processes.sup_norms())
    return GofStatistics.from_array(values, r=r)


def gof_statistics(
    data: GridData,
    model: MrfModel,
    cover: ConcliqueCover,
    rng: Optional[np.random.Generator],
    r: float = DEFAULT_R,
    edge_rule: Optional[EdgeRule] = None,
    a_field: Optional[np.ndarray] = None,
    u_grid: Optional[np.ndarray] = None,
) -> GofStatistics:
    """Residuals, empirical processes and statistics in one call."""
    residuals = generalized_residuals(data, model, cover, rng, edge_rule, a_field, u_grid)
    return compute_statistics(empirical_process(residuals), r)
