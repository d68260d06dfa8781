"""
Composite-null goodness-of-fit testing by parametric bootstrap: fit, compute
the observed statistics, simulate fields from the fitted model along one
spaced Gibbs chain, refit each field, and calibrate.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError

from . import rng as rngs
from .conclique import ConcliqueCover
from .errors import GofError, NumericalError
from .estimation import (
    DEFAULT_MAX_ML_SITES,
    FitMethod,
    FitResult,
    eta_parameter_space,
    fit,
    likelihood_data,
    neighbor_incidence,
)
from .lattice import GridData, NeighborhoodTemplate
from .models import EdgeRule, gibbs_simulate
from .residuals import DEFAULT_GRID_SIZE, DEFAULT_R, GofStatistics, default_u_grid, gof_statistics

logger = logging.getLogger(__name__)

PARAMETERS = ("alpha", "eta", "tau2")


class AFieldMode(str, Enum):
    FRESH = "fresh"
    FIXED = "fixed"


class BootstrapConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    B: int = Field(default=5000, ge=1)
    burn_in: int = Field(default=500, ge=0)
    spacing: int = Field(default=10, ge=1)
    seed: int
    refit_method: FitMethod = FitMethod.ML
    a_field_mode: AFieldMode = AFieldMode.FRESH
    level: float = Field(default=0.95, ge=0.0, lt=1.0)
    r: float = Field(default=DEFAULT_R, ge=1.0)
    grid_size: int = Field(default=DEFAULT_GRID_SIZE, ge=2)
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS
    max_drop_fraction: float = Field(default=0.05, ge=0.0, le=1.0)
    max_ml_sites: int = DEFAULT_MAX_ML_SITES
    threads: int = Field(default=1, ge=1)


class BootstrapResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    p_values: Tuple[float, float, float, float]
    observed: GofStatistics
    replicate_stats: np.ndarray
    parameter_draws: np.ndarray
    percentile_intervals: Dict[str, Tuple[float, float]]
    fit: FitResult
    n_requested: int
    n_dropped: int
    level: float

    def summary(self) -> Dict:
        return {
            "p": list(self.p_values),
            "t": self.observed.as_array().tolist(),
            "fit": self.fit.model_dump(mode="json", by_alias=True),
            "percentile_intervals": {k: list(v) for k, v in self.percentile_intervals.items()},
            "level": self.level,
            "replicates": {"requested": self.n_requested, "used": self.n_requested - self.n_dropped, "dropped": self.n_dropped},
        }


def percentile_interval(draws, level: float) -> Tuple[float, float]:
    """Empirical (1-level)/2 and (1+level)/2 quantiles with linear interpolation of order statistics."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise ValueError("percentile interval needs at least one draw")
    if not 0.0 <= level < 1.0:
        raise ValueError(f"level must lie in [0, 1), got {level}")
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(draws, [tail, 1.0 - tail])
    return float(lower), float(upper)


def bootstrap_p_values(observed: np.ndarray, replicates: np.ndarray) -> np.ndarray:
    """(1 + #{T*_b >= T}) / (B + 1), column by column."""
    replicates = np.atleast_2d(replicates)
    exceed = (replicates >= np.asarray(observed)).sum(axis=0)
    return (1.0 + exceed) / (replicates.shape[0] + 1.0)


def composite_test(
    data: GridData,
    template: NeighborhoodTemplate,
    cover: ConcliqueCover,
    config: BootstrapConfig,
) -> BootstrapResult:
    if cover.template != template:
        raise ValueError("conclique cover was built from a different template")
    window = data.window
    u_grid = default_u_grid(config.grid_size)
    fit_window = likelihood_data(data, template, config.edge_rule).window
    incidence = neighbor_incidence(fit_window, template, eigen=fit_window.n_observed <= config.max_ml_sites)
    theta = fit(data, template, config.refit_method, config.edge_rule, incidence, config.max_ml_sites)
    if EdgeRule(config.edge_rule) == EdgeRule.INTERIOR_ONLY:
        full = neighbor_incidence(window, template, eigen=window.n_observed <= config.max_ml_sites)
        simulation_space = eta_parameter_space(full)
        if not simulation_space.unbounded and not simulation_space.contains(theta.eta_hat):
            raise NumericalError(
                f"eta={theta.eta_hat:.6f} fitted on the interior sites is outside the parameter space of the full window"
            )
    model = theta.to_model(template, config.edge_rule)
    logger.info(
        f"Fitted {theta.method.value}: alpha={theta.alpha_hat:.5f} eta={theta.eta_hat:.5f} tau2={theta.tau2_hat:.5f}"
    )

    a_field: Optional[np.ndarray] = None
    if config.a_field_mode == AFieldMode.FIXED:
        a_field = rngs.stream(config.seed, rngs.STAGE_A_FIELD).random(window.shape)
    observed_rng = None if a_field is not None else rngs.stream(config.seed, rngs.STAGE_OBSERVED)
    observed = gof_statistics(data, model, cover, observed_rng, config.r, config.edge_rule, a_field, u_grid)

    fields = gibbs_simulate(
        model,
        window,
        cover,
        rngs.stream(config.seed, rngs.STAGE_CHAIN),
        burn_in=config.burn_in,
        spacing=config.spacing,
        n_fields=config.B,
    )

    def replicate(b: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        field = fields[b]
        try:
            refit = fit(field, template, config.refit_method, config.edge_rule, incidence, config.max_ml_sites)
            rng = None if a_field is not None else rngs.stream(config.seed, rngs.STAGE_REPLICATE, b)
            stats = gof_statistics(
                field, refit.to_model(template, config.edge_rule), cover, rng, config.r, config.edge_rule, a_field, u_grid
            )
        except (GofError, ValueError, LinAlgError) as e:
            logger.warning(f"Bootstrap replicate {b} dropped: {e}")
            return None
        return stats.as_array(), np.array([refit.alpha_hat, refit.eta_hat, refit.tau2_hat])

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        outcomes: List = list(pool.map(replicate, range(config.B)))

    kept = [o for o in outcomes if o is not None]
    dropped = config.B - len(kept)
    if dropped:
        logger.info(f"Bootstrap dropped {dropped} of {config.B} replicates")
    if not kept or dropped > config.max_drop_fraction * config.B:
        raise NumericalError(f"{dropped} of {config.B} bootstrap replicates failed to fit")

    stats = np.stack([s for s, _ in kept])
    draws = np.stack([p for _, p in kept])
    intervals = {name: percentile_interval(draws[:, i], config.level) for i, name in enumerate(PARAMETERS)}
    p_values = bootstrap_p_values(observed.as_array(), stats)
    return BootstrapResult(
        p_values=tuple(float(p) for p in p_values),
        observed=observed,
        replicate_stats=stats,
        parameter_draws=draws,
        percentile_intervals=intervals,
        fit=theta,
        n_requested=config.B,
        n_dropped=dropped,
        level=config.level,
    )
