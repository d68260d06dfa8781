"""
Simple-null reference distributions: the limit covariance of the vector of
conclique empirical processes (closed form for the Gaussian four-nearest
model, Monte Carlo otherwise), simulation of the limit process, quantiles,
p-values, and distances between distributions of statistics.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.linalg import LinAlgError, cholesky, eigh
from scipy.special import ndtr, ndtri

from . import rng as rngs
from .conclique import ConcliqueCover
from .errors import ConfigError, NumericalError
from .lattice import SamplingWindow, named_template, shifted
from .models import EdgeRule, GaussianMrfSpec, MrfModel, gibbs_simulate
from .residuals import DEFAULT_R, GofStatistics, evaluate_functionals, residual_field

logger = logging.getLogger(__name__)

DEFAULT_NULL_GRID = 512
DEFAULT_NULL_REPLICATES = 20_000
DEFAULT_LEVELS = (0.90, 0.95, 0.99)
DEFAULT_MC_FIELDS = 2000
DEFAULT_MC_WINDOW = (30, 30)
MIN_MC_FIELDS = 50
JITTER_START = 1e-12
JITTER_MAX = 1e-8
MAX_CLIPPED_FRACTION = 0.25
CHUNK_SIZE = 1000
# Expected overshoot of a Gaussian path's maximum beyond its maximum on a
# grid of mesh h is about BETA * sigma * sqrt(h).
DISCRETE_MONITORING_BETA = 0.5826

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_TWO_PI = 2.0 * math.pi


def _bvn_upper(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """P(X > h, Y > k) for a standard bivariate normal with correlation r (Genz's bvnu)."""
    hk = h * k
    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        sn = np.sin(asr * (1.0 + _GL_NODES))
        terms = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn ** 2))
        return terms @ _GL_WEIGHTS * asr / _TWO_PI + ndtr(-h) * ndtr(-k)

    if r < 0:
        k = -k
        hk = -hk
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        a2 = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a2)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -(bs / a2 + hk) / 2.0
        bvn = np.where(
            asr > -100,
            a * np.exp(asr) * (1 - c * (bs - a2) * (1 - d * bs / 5) / 3 + c * d * a2 ** 2 / 5),
            0.0,
        )
        b = np.sqrt(bs)
        sp = math.sqrt(_TWO_PI) * ndtr(-b / a)
        bvn = bvn - np.where(hk > -100, np.exp(-hk / 2) * sp * b * (1 - c * bs * (1 - d * bs / 5) / 3), 0.0)
        half = a / 2.0
        xs = (half + half * _GL_NODES) ** 2
        rs = np.sqrt(1.0 - xs)
        asr2 = -(bs[:, None] / xs + hk[:, None]) / 2.0
        sp2 = 1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs)
        ep = np.exp(-hk[:, None] * xs / (2.0 * (1.0 + rs) ** 2)) / rs
        contrib = np.where(asr2 > -100, np.exp(asr2) * (ep - sp2), 0.0)
        bvn = -(bvn + half * (contrib @ _GL_WEIGHTS)) / _TWO_PI
    if r > 0:
        return bvn + ndtr(-np.maximum(h, k))
    tail = np.where(h < 0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k))
    return np.where(h >= k, -bvn, tail - bvn)


def bvn_cdf(h, k, rho: float):
    """P(X1 <= h, X2 <= k) for a standard bivariate normal with correlation rho.

    Gauss-Legendre evaluation of the Drezner-Wesolowsky integral with Genz's
    high-correlation expansion for |rho| >= 0.925; absolute error well below 1e-7.
    """
    rho = float(rho)
    if not abs(rho) < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {rho}")
    hb, kb = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    if np.isnan(hb).any() or np.isnan(kb).any():
        raise ValueError("bvn_cdf limits must not be NaN")
    scalar = hb.ndim == 0
    hf, kf = hb.ravel(), kb.ravel()
    out = np.empty(hf.shape)
    neg = (hf == -np.inf) | (kf == -np.inf)
    h_top = (hf == np.inf) & ~neg
    k_top = (kf == np.inf) & ~neg & ~h_top
    finite = ~(neg | h_top | k_top)
    out[neg] = 0.0
    out[h_top] = ndtr(kf[h_top])
    out[k_top] = ndtr(hf[k_top])
    if finite.any():
        out[finite] = _bvn_upper(-hf[finite], -kf[finite], rho)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out.reshape(hb.shape)


def _check_unit(name: str, x: np.ndarray) -> None:
    if np.any(x < 0.0) or np.any(x > 1.0) or np.isnan(x).any():
        raise ValueError(f"{name} must lie in [0, 1]")


def limit_cov_g4(u, v, j: int, k: int, eta: float):
    """Limit covariance of (W_j(u), W_k(v)) for the Gaussian four-nearest model.

    2 (min(u, v) - uv) on the diagonal, 8 [BVN(Phi^-1(u), Phi^-1(v); -eta) - uv]
    across the two concliques (0 when u or v is 0 or 1).
    """
    if j not in (0, 1) or k not in (0, 1):
        raise ValueError("the four-nearest cover has concliques 0 and 1")
    if not abs(eta) < 0.25:
        raise ValueError(f"eta must satisfy |eta| < 0.25, got {eta}")
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    _check_unit("u", u)
    _check_unit("v", v)
    if j == k:
        value = 2.0 * (np.minimum(u, v) - u * v)
    else:
        value = np.zeros(u.shape)
        inner = (u > 0) & (u < 1) & (v > 0) & (v < 1)
        if inner.any():
            value[inner] = 8.0 * (bvn_cdf(ndtri(u[inner]), ndtri(v[inner]), -eta) - u[inner] * v[inner])
    return float(value) if value.ndim == 0 else value


class CovarianceKind(str, Enum):
    GAUSSIAN_FOUR_NEAREST = "gaussian_four_nearest"
    GENERIC_MONTE_CARLO = "generic_monte_carlo"
    INDEPENDENT = "independent"


class CrossTerm(BaseModel):
    """Residual pairs (U(x), U(x + lag)) for one (a_i, a_l, s) term between concliques j < k."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    j: int
    k: int
    lag: Tuple[int, ...]
    first: np.ndarray
    second: np.ndarray
    field_index: np.ndarray


class LimitCovarianceSpec(BaseModel):
    """Covariance of the limit vector-Gaussian process (W_0, ..., W_{q-1})."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: CovarianceKind
    q: int
    det_delta: int
    group_sizes: Tuple[int, ...]
    eta: Optional[float] = None
    cross_terms: Tuple[CrossTerm, ...] = ()
    n_fields: int = 0

    @model_validator(mode="after")
    def _check(self):
        if len(self.group_sizes) != self.q or self.q < 1:
            raise ValueError("group_sizes must have one entry per conclique")
        if self.kind == CovarianceKind.GAUSSIAN_FOUR_NEAREST:
            if self.q != 2 or self.eta is None or not abs(self.eta) < 0.25:
                raise ValueError("the four-nearest covariance needs q = 2 and |eta| < 0.25")
        return self

    @classmethod
    def gaussian_four_nearest(cls, eta: float) -> "LimitCovarianceSpec":
        return cls(kind=CovarianceKind.GAUSSIAN_FOUR_NEAREST, q=2, det_delta=4, group_sizes=(2, 2), eta=eta)

    @classmethod
    def independent(cls, det_delta: int, group_sizes: Sequence[int]) -> "LimitCovarianceSpec":
        """Concliques with uncorrelated limits (single conclique, or no cross dependence)."""
        return cls(
            kind=CovarianceKind.INDEPENDENT,
            q=len(group_sizes),
            det_delta=det_delta,
            group_sizes=tuple(group_sizes),
        )

    def scale(self, j: int) -> float:
        """det(Delta) / |J_j|, the variance factor of W_j."""
        return self.det_delta / self.group_sizes[j]

    def terms(self, j: int, k: int) -> List[CrossTerm]:
        return [t for t in self.cross_terms if t.j == j and t.k == k]

    def summary(self) -> Dict:
        return {
            "kind": self.kind.value,
            "q": self.q,
            "det_delta": self.det_delta,
            "group_sizes": list(self.group_sizes),
            "eta": self.eta,
            "mc_fields": self.n_fields,
        }


def estimate_generic_covariance(
    model: MrfModel,
    cover: ConcliqueCover,
    rng: np.random.Generator,
    window_shape: Tuple[int, ...] = DEFAULT_MC_WINDOW,
    mc_fields: int = DEFAULT_MC_FIELDS,
    burn_in: int = 500,
    spacing: int = 10,
    min_fields: int = MIN_MC_FIELDS,
) -> LimitCovarianceSpec:
    """Simulate fields under the null and collect residual pairs at every lag
    a_l - a_i + Delta s that lies in +-M, for basic concliques i, l in different groups."""
    if mc_fields < min_fields:
        raise ConfigError(f"mc_fields={mc_fields} is below the minimum of {min_fields}")
    if len(window_shape) != cover.template.dim:
        raise ConfigError("Monte Carlo window dimension does not match the template")
    window = SamplingWindow.full(tuple(window_shape))
    fields = gibbs_simulate(model, window, cover, rng, burn_in=burn_in, spacing=spacing, n_fields=mc_fields)

    family = cover.family
    group_of = cover.group_lookup()
    basic = family.offset_index(window.coordinates())
    forbidden = cover.template.symmetric_offsets
    shifts = list(itertools.product((-1, 0, 1), repeat=cover.template.dim))
    layout = []
    for i, a_i in enumerate(family.offsets):
        for l, a_l in enumerate(family.offsets):
            j, k = int(group_of[i]), int(group_of[l])
            if j >= k:
                continue
            for s in shifts:
                lag = tuple(al - ai + d * si for ai, al, d, si in zip(a_i, a_l, family.delta, s))
                if lag in forbidden:
                    layout.append((j, k, i, lag))

    collected = {index: ([], [], []) for index in range(len(layout))}
    for f, data in enumerate(fields):
        u = residual_field(data, model, rng, EdgeRule.INTERIOR_ONLY)
        for index, (j, k, i, lag) in enumerate(layout):
            partner = shifted(u, lag, np.nan)
            keep = (basic == i) & ~np.isnan(u) & ~np.isnan(partner)
            first, second, owner = collected[index]
            first.append(u[keep])
            second.append(partner[keep])
            owner.append(np.full(int(keep.sum()), f))

    cross_terms = []
    for index, (j, k, i, lag) in enumerate(layout):
        first, second, owner = collected[index]
        cross_terms.append(
            CrossTerm(
                j=j,
                k=k,
                lag=lag,
                first=np.concatenate(first),
                second=np.concatenate(second),
                field_index=np.concatenate(owner),
            )
        )
    logger.info(f"Estimated cross-covariance terms: {len(cross_terms)} lags over {mc_fields} fields")
    return LimitCovarianceSpec(
        kind=CovarianceKind.GENERIC_MONTE_CARLO,
        q=cover.q,
        det_delta=family.det_delta,
        group_sizes=cover.group_sizes,
        cross_terms=tuple(cross_terms),
        n_fields=mc_fields,
    )


def _check_pair(spec: LimitCovarianceSpec, j: int, k: int) -> None:
    if not (0 <= j < spec.q and 0 <= k < spec.q):
        raise ValueError(f"conclique indices must lie in 0..{spec.q - 1}")


def limit_cov_generic(spec: LimitCovarianceSpec, u, v, j: int, k: int):
    """cov(W_j(u), W_k(v)) of the limit process.

    Diagonal blocks are exact; off-diagonal blocks of a Monte Carlo spec are
    det(Delta)/(|J_j||J_k|) times the sum over lag terms of P[U <= u, U' <= v] - uv,
    with the joint probabilities replaced by pair frequencies.
    """
    _check_pair(spec, j, k)
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    _check_unit("u", u)
    _check_unit("v", v)
    if j == k:
        value = spec.scale(j) * (np.minimum(u, v) - u * v)
    elif spec.kind == CovarianceKind.GAUSSIAN_FOUR_NEAREST:
        value = np.asarray(limit_cov_g4(u, v, j, k, spec.eta))
    elif spec.kind == CovarianceKind.INDEPENDENT:
        value = np.zeros(u.shape)
    else:
        if j > k:
            j, k, u, v = k, j, v, u
        factor = spec.det_delta / (spec.group_sizes[j] * spec.group_sizes[k])
        flat_u, flat_v = u.ravel(), v.ravel()
        total = np.zeros(flat_u.shape)
        for term in spec.terms(j, k):
            for p, (uu, vv) in enumerate(zip(flat_u, flat_v)):
                total[p] += np.mean((term.first <= uu) & (term.second <= vv)) - uu * vv
        value = (factor * total).reshape(u.shape)
    return float(value) if np.ndim(value) == 0 else value


def limit_cov_generic_se(spec: LimitCovarianceSpec, u: float, v: float, j: int, k: int) -> float:
    """Monte Carlo standard error of an off-diagonal estimate, from per-field batch means."""
    _check_pair(spec, j, k)
    if spec.kind != CovarianceKind.GENERIC_MONTE_CARLO or j == k:
        return 0.0
    if j > k:
        j, k, u, v = k, j, v, u
    factor = spec.det_delta / (spec.group_sizes[j] * spec.group_sizes[k])
    per_field = np.zeros(spec.n_fields)
    for term in spec.terms(j, k):
        hits = ((term.first <= u) & (term.second <= v)).astype(float)
        counts = np.bincount(term.field_index, minlength=spec.n_fields)
        sums = np.bincount(term.field_index, weights=hits, minlength=spec.n_fields)
        per_field += np.divide(sums, counts, out=np.zeros(spec.n_fields), where=counts > 0) - u * v
    return float(factor * per_field.std(ddof=1) / math.sqrt(spec.n_fields))


def _generic_block(spec: LimitCovarianceSpec, u_grid: np.ndarray, j: int, k: int) -> np.ndarray:
    """Off-diagonal block on a sorted grid via cumulative pair counts."""
    g = u_grid.size
    factor = spec.det_delta / (spec.group_sizes[j] * spec.group_sizes[k])
    block = np.zeros((g, g))
    outer = np.outer(u_grid, u_grid)
    for term in spec.terms(j, k):
        # U <= u_grid[i] iff i >= number of grid points below U
        a = np.searchsorted(u_grid, term.first, side="left")
        b = np.searchsorted(u_grid, term.second, side="left")
        counts = np.bincount(a * (g + 1) + b, minlength=(g + 1) ** 2).reshape(g + 1, g + 1)
        joint = counts.cumsum(axis=0).cumsum(axis=1)[:g, :g] / term.first.size
        block += joint - outer
    return factor * block


def covariance_matrix(spec: LimitCovarianceSpec, u_grid: np.ndarray) -> np.ndarray:
    """The (q*G) x (q*G) covariance of (W_0(u_grid), ..., W_{q-1}(u_grid))."""
    u_grid = np.asarray(u_grid, dtype=float)
    g = u_grid.size
    uu, vv = np.meshgrid(u_grid, u_grid, indexing="ij")
    cov = np.zeros((spec.q * g, spec.q * g))
    for j in range(spec.q):
        for k in range(j, spec.q):
            if j == k:
                block = spec.scale(j) * (np.minimum(uu, vv) - uu * vv)
            elif spec.kind == CovarianceKind.GENERIC_MONTE_CARLO:
                block = _generic_block(spec, u_grid, j, k)
            else:
                block = np.asarray(limit_cov_generic(spec, uu, vv, j, k))
            cov[j * g:(j + 1) * g, k * g:(k + 1) * g] = block
            cov[k * g:(k + 1) * g, j * g:(j + 1) * g] = block.T
    return cov


def factorize_covariance(cov: np.ndarray) -> np.ndarray:
    """Factor L with L @ L.T equal to ``cov`` (up to repair).

    Tries a lower Cholesky factor with diagonal jitter from 1e-12 to 1e-8.
    An indefinite matrix (Monte Carlo cross blocks near u = 0 or 1) is
    symmetrized and its negative eigenvalues are clipped to zero, giving
    V sqrt(L). Raises NumericalError when the clipped mass exceeds
    MAX_CLIPPED_FRACTION of the trace.
    """
    cov = 0.5 * (cov + cov.T)
    jitter = JITTER_START
    identity = np.eye(cov.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            factor = cholesky(cov + jitter * identity, lower=True)
            if jitter > JITTER_START:
                logger.info(f"Covariance factorized with diagonal jitter {jitter:.0e}")
            return factor
        except LinAlgError:
            jitter *= 10.0
    values, vectors = eigh(cov)
    clipped = float(-values[values < 0].sum())
    kept = float(values[values > 0].sum())
    if kept <= 0 or clipped > MAX_CLIPPED_FRACTION * kept:
        raise NumericalError(
            f"limit covariance is not positive semidefinite: clipped eigenvalue mass {clipped:.4g} "
            f"against trace {kept:.4g}"
        )
    logger.warning(
        f"Covariance is indefinite (min eigenvalue {values.min():.3g}); clipped eigenvalue mass "
        f"{clipped:.3g} ({clipped / kept:.2%} of trace)"
    )
    return vectors * np.sqrt(np.clip(values, 0.0, None))


class NullQuantileTable(BaseModel):
    """Simulated draws of the four limit functionals and their quantiles."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    draws: np.ndarray
    levels: Tuple[float, ...]
    quantiles: np.ndarray
    grid_size: int
    replicates: int
    seed: int
    r: float
    sup_correction: bool = True

    def quantile(self, level: float) -> np.ndarray:
        for i, lv in enumerate(self.levels):
            if math.isclose(lv, level):
                return self.quantiles[i]
        return np.quantile(self.draws, level, axis=0)

    def summary(self) -> Dict:
        return {
            "levels": list(self.levels),
            "quantiles": {f"q{round(100 * lv):d}": self.quantiles[i].tolist() for i, lv in enumerate(self.levels)},
            "draws": {
                "mean": self.draws.mean(axis=0).tolist(),
                "sd": self.draws.std(axis=0, ddof=1).tolist(),
                "min": self.draws.min(axis=0).tolist(),
                "max": self.draws.max(axis=0).tolist(),
            },
            "config": {
                "grid_size": self.grid_size,
                "replicates": self.replicates,
                "seed": self.seed,
                "r": self.r,
                "sup_correction": self.sup_correction,
            },
        }


def simulate_null_quantiles(
    cov: LimitCovarianceSpec,
    seed: int,
    grid_size: int = DEFAULT_NULL_GRID,
    replicates: int = DEFAULT_NULL_REPLICATES,
    r: float = DEFAULT_R,
    levels: Sequence[float] = DEFAULT_LEVELS,
    sup_correction: bool = True,
    threads: int = 1,
) -> NullQuantileTable:
    """Draw the limit process on the grid u_i = i/(G+1) and evaluate the four functionals.

    Chunk c of replicates uses stream (STAGE_NULL, c) of ``seed``.
    """
    if grid_size < 64 or replicates < 100:
        raise ValueError("need grid_size >= 64 and replicates >= 100")
    u_grid = np.arange(1, grid_size + 1) / (grid_size + 1)
    factor = factorize_covariance(covariance_matrix(cov, u_grid))
    full_grid = np.concatenate([[0.0], u_grid, [1.0]])
    shift = np.zeros(cov.q)
    if sup_correction:
        shift = DISCRETE_MONITORING_BETA * np.sqrt([cov.scale(j) for j in range(cov.q)]) / math.sqrt(grid_size + 1)

    def run(index: int, block: range) -> np.ndarray:
        generator = rngs.stream(seed, rngs.STAGE_NULL, index)
        z = generator.standard_normal((len(block), cov.q * grid_size))
        paths = (z @ factor.T).reshape(len(block), cov.q, grid_size)
        padded = np.pad(paths, ((0, 0), (0, 0), (1, 1)))
        sups = np.abs(paths).max(axis=-1) + shift
        return evaluate_functionals(padded, full_grid, r, sups)

    chunks = rngs.chunk_bounds(replicates, CHUNK_SIZE)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(run, range(len(chunks)), chunks))
    draws = np.concatenate(parts, axis=0)
    levels = tuple(float(lv) for lv in levels)
    return NullQuantileTable(
        draws=draws,
        levels=levels,
        quantiles=np.quantile(draws, levels, axis=0),
        grid_size=grid_size,
        replicates=replicates,
        seed=seed,
        r=r,
        sup_correction=sup_correction,
    )


def p_value(observed: GofStatistics, table: NullQuantileTable) -> np.ndarray:
    """(1 + #{draws >= observed}) / (R + 1) for each statistic."""
    draws = table.draws
    if draws.size == 0:
        raise ValueError("null table has no draws")
    exceed = (draws >= observed.as_array()).sum(axis=0)
    return (1.0 + exceed) / (draws.shape[0] + 1.0)


def _ecdf_difference(sample_a, sample_b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    points = np.union1d(a, b)
    diff = np.searchsorted(a, points, side="right") / a.size - np.searchsorted(b, points, side="right") / b.size
    return points, diff


def ks_distance(sample_a, sample_b) -> float:
    """sup_t |F_a(t) - F_b(t)| over the pooled jump points."""
    _, diff = _ecdf_difference(sample_a, sample_b)
    return float(np.abs(diff).max())


def cm_distance(sample_a, sample_b) -> float:
    """[integral of |F_a - F_b|^2 dt]^(1/2), exact on the pooled order statistics."""
    points, diff = _ecdf_difference(sample_a, sample_b)
    return float(math.sqrt(np.sum(np.diff(points) * diff[:-1] ** 2)))


def check_null_parameters(model: MrfModel) -> None:
    """A Gaussian null needs I - eta H positive definite on every window: |eta| |+-M| < 1."""
    if isinstance(model, GaussianMrfSpec):
        bound = 1.0 / len(model.template.symmetric_offsets)
        if not abs(model.eta) < bound:
            raise ConfigError(f"eta={model.eta} is outside the parameter space (|eta| < {bound:.6g})")


def limit_covariance_for(
    model: MrfModel,
    cover: ConcliqueCover,
    seed: int,
    mc_fields: int = DEFAULT_MC_FIELDS,
    mc_window: Tuple[int, ...] = DEFAULT_MC_WINDOW,
    burn_in: int = 500,
    spacing: int = 10,
) -> LimitCovarianceSpec:
    """Closed form for the Gaussian four-nearest model, no cross terms for a
    single conclique, Monte Carlo otherwise."""
    check_null_parameters(model)
    if cover.q == 1:
        return LimitCovarianceSpec.independent(cover.family.det_delta, cover.group_sizes)
    four_nearest = model.template == named_template("four_nearest", 2) and cover.q == 2
    if isinstance(model, GaussianMrfSpec) and four_nearest:
        return LimitCovarianceSpec.gaussian_four_nearest(model.eta)
    logger.info(f"Estimating the limit covariance from {mc_fields} simulated fields")
    return estimate_generic_covariance(
        model,
        cover,
        rngs.stream(seed, rngs.STAGE_COVARIANCE),
        window_shape=tuple(mc_window),
        mc_fields=mc_fields,
        burn_in=burn_in,
        spacing=spacing,
    )
