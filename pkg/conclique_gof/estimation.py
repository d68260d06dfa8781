"""
Fitting the conditional Gaussian MRF: maximum likelihood through the joint
Gaussian form N(alpha 1, (I - eta H)^-1 tau2), pseudolikelihood as the
fallback, and the eta parameter space from the eigenvalues of H.
"""
import logging
import math
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sparse
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import eigvalsh
from scipy.optimize import minimize_scalar

from .errors import DataError, NumericalError
from .lattice import GridData, NeighborhoodTemplate, SamplingWindow, interior_mask, neighbor_sums, shifted
from .models import EdgeRule, GaussianMrfSpec

logger = logging.getLogger(__name__)

DEFAULT_MAX_ML_SITES = 5000
UNBOUNDED_ETA = 1e6
BOUNDARY_SHRINK = 1e-9
ETA_TOL = 1e-6
PRESCAN_POINTS = 50


class FitMethod(str, Enum):
    ML = "ml"
    PSEUDOLIKELIHOOD = "pseudolikelihood"


class NeighborIncidence(BaseModel):
    """Symmetric 0/1 neighbor matrix over the observed sites, in lexicographic order."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: sparse.csr_matrix
    eigenvalues: Optional[np.ndarray] = None
    periodic: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_edges(self) -> int:
        return self.matrix.nnz // 2

    @property
    def max_degree(self) -> int:
        return int(self.matrix.sum(axis=1).max()) if self.n else 0

    def with_eigenvalues(self) -> "NeighborIncidence":
        if self.eigenvalues is not None:
            return self
        values = eigvalsh(self.matrix.toarray())
        return NeighborIncidence(matrix=self.matrix, eigenvalues=values, periodic=self.periodic)


class EtaBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    unbounded: bool = False

    def contains(self, eta: float) -> bool:
        return self.lower < eta < self.upper

    def shrunk(self, by: float = BOUNDARY_SHRINK) -> Tuple[float, float]:
        return self.lower + by, self.upper - by


class FitResult(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    alpha_hat: float = Field(alias="alpha")
    eta_hat: float = Field(alias="eta")
    tau2_hat: float = Field(alias="tau2")
    log_likelihood: float = Field(alias="logLik")
    eta_bounds: Tuple[float, float] = Field(alias="etaBounds")
    method: FitMethod
    boundary: bool = Field(default=False, alias="boundaryFlag")
    n_sites: int = 0

    @model_validator(mode="after")
    def _check(self):
        if not self.tau2_hat > 0:
            raise ValueError(f"fitted tau2 must be positive, got {self.tau2_hat}")
        lower, upper = self.eta_bounds
        if not lower < self.eta_hat < upper:
            raise ValueError(f"fitted eta {self.eta_hat} is outside ({lower}, {upper})")
        return self

    def to_model(self, template: NeighborhoodTemplate, edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS) -> GaussianMrfSpec:
        return GaussianMrfSpec(
            alpha=self.alpha_hat, eta=self.eta_hat, tau2=self.tau2_hat, template=template, edge_rule=edge_rule
        )


def neighbor_incidence(
    window: SamplingWindow,
    template: NeighborhoodTemplate,
    periodic: bool = False,
    eigen: bool = True,
) -> NeighborIncidence:
    """H over the observed sites of ``window``; neighbors are s +- M.

    ``periodic`` wraps the window into a torus. The matrix does not depend on
    the edge rule: masked and out-of-window neighbors never enter the joint law.
    """
    if window.dim != template.dim:
        raise ValueError("window and template dimensions differ")
    observed = window.observed
    index = np.full(window.shape, -1, dtype=int)
    index[observed] = np.arange(window.n_observed)
    rows, cols = [], []
    for offset in sorted(template.symmetric_offsets):
        partner = shifted(index, offset, -1, periodic)
        keep = (index >= 0) & (partner >= 0) & (index != partner)
        rows.append(index[keep])
        cols.append(partner[keep])
    n = window.n_observed
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    matrix = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    # Wrapping on a small torus can hit the same pair twice.
    matrix.data[:] = 1.0
    incidence = NeighborIncidence(matrix=matrix, periodic=periodic)
    return incidence.with_eigenvalues() if eigen else incidence


def eta_parameter_space(incidence: NeighborIncidence) -> EtaBounds:
    """(1/lambda_min, 1/lambda_max), where I - eta H is positive definite.

    Without eigenvalues the Gershgorin-safe interval (-1/deg, 1/deg) is used;
    an H without edges is unbounded and gets the sentinel interval.
    """
    if incidence.n_edges == 0:
        return EtaBounds(lower=-UNBOUNDED_ETA, upper=UNBOUNDED_ETA, unbounded=True)
    if incidence.eigenvalues is None:
        degree = incidence.max_degree
        return EtaBounds(lower=-1.0 / degree, upper=1.0 / degree)
    values = incidence.eigenvalues
    return EtaBounds(lower=1.0 / float(values.min()), upper=1.0 / float(values.max()))


def _observed_vector(data: Union[GridData, np.ndarray]) -> np.ndarray:
    y = data.observed_values() if isinstance(data, GridData) else np.asarray(data, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise DataError("data must be finite at every observed site")
    return y


def log_likelihood_gaussian(
    data: Union[GridData, np.ndarray],
    alpha: float,
    eta: float,
    tau2: float,
    incidence: NeighborIncidence,
) -> float:
    """Log-density of the observed vector under N(alpha 1, (I - eta H)^-1 tau2)."""
    y = _observed_vector(data)
    if y.size != incidence.n:
        raise ValueError(f"data has {y.size} sites, incidence matrix has {incidence.n}")
    if tau2 <= 0:
        raise ValueError("tau2 must be positive")
    incidence = incidence.with_eigenvalues()
    if not eta_parameter_space(incidence).contains(eta):
        raise ValueError(f"eta={eta} is outside the parameter space")
    r = y - alpha
    quad = float(r @ r - eta * (r @ (incidence.matrix @ r)))
    log_det = float(np.sum(np.log1p(-eta * incidence.eigenvalues)))
    n = y.size
    return -0.5 * n * math.log(2.0 * math.pi * tau2) + 0.5 * log_det - quad / (2.0 * tau2)


def _gls(y: np.ndarray, h: sparse.csr_matrix, eta: float) -> Tuple[float, float]:
    """alpha_hat(eta) and tau2_hat(eta) under precision (I - eta H) / tau2."""
    ones = np.ones_like(y)
    a_ones = ones - eta * (h @ ones)
    alpha = float(a_ones @ y / (a_ones @ ones))
    r = y - alpha
    tau2 = float((r @ r - eta * (r @ (h @ r))) / y.size)
    return alpha, tau2


def _minimize_on(objective: Callable[[float], float], lower: float, upper: float) -> Tuple[float, float]:
    """Grid pre-scan, then golden-section search on the best grid cell and its neighbors.

    A best point on the edge of the grid has no bracket; the edge cell is
    searched with bounded Brent instead.
    """
    grid = np.linspace(lower, upper, PRESCAN_POINTS)
    values = np.array([objective(x) for x in grid])
    if not np.isfinite(values).any():
        raise NumericalError("objective is not finite anywhere on the eta interval")
    best = int(np.nanargmin(np.where(np.isfinite(values), values, np.nan)))
    left = grid[max(best - 1, 0)]
    right = grid[min(best + 1, PRESCAN_POINTS - 1)]
    bracketed = 0 < best < PRESCAN_POINTS - 1 and values[best] < min(values[best - 1], values[best + 1])
    if bracketed:
        bracket = (left, grid[best], right)
        result = minimize_scalar(objective, bracket=bracket, method="golden", options={"xtol": ETA_TOL})
    else:
        result = minimize_scalar(objective, bounds=(left, right), method="bounded", options={"xatol": ETA_TOL})
    if result.success and left <= result.x <= right and result.fun <= values[best]:
        return float(result.x), float(result.fun)
    return float(grid[best]), float(values[best])


def _at_boundary(eta: float, lower: float, upper: float) -> bool:
    return eta - lower < 10 * ETA_TOL or upper - eta < 10 * ETA_TOL


def likelihood_data(data: GridData, template: NeighborhoodTemplate, edge_rule: EdgeRule) -> GridData:
    """The sites entering the joint likelihood: every observed site, or under
    ``interior_only`` the interior sites alone, treated as their own window."""
    if EdgeRule(edge_rule) != EdgeRule.INTERIOR_ONLY:
        return data
    inside = interior_mask(data.window, template)
    if not inside.any():
        raise DataError("no interior sites to fit under interior_only")
    return GridData(values=np.where(inside, data.values, np.nan), lower=data.lower)


def fit_ml(
    data: GridData,
    template: NeighborhoodTemplate,
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS,
    incidence: Optional[NeighborIncidence] = None,
    max_sites: int = DEFAULT_MAX_ML_SITES,
) -> FitResult:
    """Maximum likelihood by profiling alpha and tau2 out and searching over eta.

    ``incidence`` must cover the sites chosen by ``likelihood_data``.
    """
    sites = likelihood_data(data, template, edge_rule)
    y = _observed_vector(sites)
    n = y.size
    if n < 2:
        raise DataError("fitting needs at least two observed sites")
    if n > max_sites:
        logger.warning(f"{n} sites exceed the ML limit of {max_sites}; falling back to pseudolikelihood")
        return fit_pseudolikelihood(data, template, edge_rule)
    if incidence is None:
        incidence = neighbor_incidence(sites.window, template)
    incidence = incidence.with_eigenvalues()
    if incidence.n != n:
        raise ValueError(f"data has {n} sites, incidence matrix has {incidence.n}")
    bounds = eta_parameter_space(incidence)
    if bounds.unbounded:
        raise DataError("no pair of observed sites are neighbors; eta is not identifiable")
    h, eigenvalues = incidence.matrix, incidence.eigenvalues
    lower, upper = bounds.shrunk()

    def negative_profile(eta: float) -> float:
        _, tau2 = _gls(y, h, eta)
        if tau2 <= 0:
            return np.inf
        return 0.5 * n * math.log(tau2) - 0.5 * float(np.sum(np.log1p(-eta * eigenvalues)))

    eta, _ = _minimize_on(negative_profile, lower, upper)
    alpha, tau2 = _gls(y, h, eta)
    if tau2 <= 0:
        raise NumericalError("fitted conditional variance is not positive")
    boundary = _at_boundary(eta, lower, upper)
    if boundary:
        logger.warning(f"ML estimate eta={eta:.6f} is at the edge of ({bounds.lower:.6f}, {bounds.upper:.6f})")
    return FitResult(
        alpha=alpha,
        eta=eta,
        tau2=tau2,
        logLik=log_likelihood_gaussian(y, alpha, eta, tau2, incidence),
        etaBounds=(bounds.lower, bounds.upper),
        method=FitMethod.ML,
        boundaryFlag=boundary,
        n_sites=n,
    )


def fit_pseudolikelihood(
    data: GridData,
    template: NeighborhoodTemplate,
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS,
    incidence: Optional[NeighborIncidence] = None,
) -> FitResult:
    """Maximum of sum_s log f(y(s) | neighbors): least squares in (alpha, eta), then tau2 = RSS / n.

    Under ``interior_only`` only sites with a full neighborhood contribute.
    """
    _observed_vector(data)
    window = data.window
    observed = window.observed
    total, count = neighbor_sums(data.values, observed, template)
    if EdgeRule(edge_rule) == EdgeRule.INTERIOR_ONLY:
        use = interior_mask(window, template)
    else:
        use = observed
    y, s, c = data.values[use], total[use], count[use].astype(float)
    n = y.size
    if n < 2:
        raise DataError("pseudolikelihood needs at least two contributing sites")
    if np.ptp(y) == 0 or np.linalg.matrix_rank(np.column_stack([np.ones(n), s])) < 2:
        raise DataError("singular pseudolikelihood design (constant field or constant neighbor sums)")

    if incidence is None:
        incidence = neighbor_incidence(window, template, eigen=window.n_observed <= DEFAULT_MAX_ML_SITES)
    bounds = eta_parameter_space(incidence)
    lower, upper = bounds.shrunk() if not bounds.unbounded else (-UNBOUNDED_ETA, UNBOUNDED_ETA)

    def profile(eta: float) -> Tuple[float, float]:
        weight = 1.0 - eta * c
        denom = float(weight @ weight)
        if denom == 0:
            return math.nan, math.inf
        alpha = float((y - eta * s) @ weight / denom)
        resid = y - eta * s - alpha * weight
        return alpha, float(resid @ resid)

    eta, rss = _minimize_on(lambda e: profile(e)[1], lower, upper)
    alpha, rss = profile(eta)
    if not rss > 1e-12 * float(y @ y):
        raise NumericalError("pseudolikelihood residual variance is zero; the fit is degenerate")
    tau2 = rss / n
    boundary = _at_boundary(eta, lower, upper)
    if boundary:
        logger.warning(f"pseudolikelihood estimate eta={eta:.6f} is at the edge of the parameter space")
    log_pl = -0.5 * n * (math.log(2.0 * math.pi * tau2) + 1.0)
    return FitResult(
        alpha=alpha,
        eta=eta,
        tau2=tau2,
        logLik=log_pl,
        etaBounds=(bounds.lower, bounds.upper),
        method=FitMethod.PSEUDOLIKELIHOOD,
        boundaryFlag=boundary,
        n_sites=n,
    )


def fit(
    data: GridData,
    template: NeighborhoodTemplate,
    method: FitMethod = FitMethod.ML,
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS,
    incidence: Optional[NeighborIncidence] = None,
    max_sites: int = DEFAULT_MAX_ML_SITES,
) -> FitResult:
    if FitMethod(method) == FitMethod.ML:
        return fit_ml(data, template, edge_rule, incidence, max_sites)
    return fit_pseudolikelihood(data, template, edge_rule, incidence)
