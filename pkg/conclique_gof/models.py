"""
Conditional model families (Gaussian and autologistic) and conclique-blocked
Gibbs simulation of the joint field on a sampling window.
"""
import logging
import math
from enum import Enum
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import expit, ndtr

from .conclique import ConcliqueCover, label_grid
from .lattice import GridData, NeighborhoodTemplate, SamplingWindow, neighbor_sums

logger = logging.getLogger(__name__)


class EdgeRule(str, Enum):
    """How sites with unobserved neighbors are treated."""

    INTERIOR_ONLY = "interior_only"
    TRUNCATED_NEIGHBORS = "truncated_neighbors"


class GaussianMrfSpec(BaseModel):
    """Conditional Gaussian MRF: mean alpha + eta * sum(y_t - alpha), variance tau2."""

    model_config = ConfigDict(frozen=True)

    family: Literal["gaussian"] = "gaussian"
    alpha: float = 0.0
    eta: float = 0.0
    tau2: float = 1.0
    template: NeighborhoodTemplate
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS

    @model_validator(mode="after")
    def _check(self):
        if not all(math.isfinite(v) for v in (self.alpha, self.eta, self.tau2)):
            raise ValueError("Gaussian MRF parameters must be finite")
        if self.tau2 <= 0:
            raise ValueError(f"tau2 must be positive, got {self.tau2}")
        return self

    @property
    def continuous(self) -> bool:
        return True

    @property
    def tau(self) -> float:
        return math.sqrt(self.tau2)

    def mean(self, neighbor_sum, neighbor_count):
        return self.alpha + self.eta * (neighbor_sum - neighbor_count * self.alpha)

    def cdf(self, y, neighbor_sum, neighbor_count):
        return ndtr((y - self.mean(neighbor_sum, neighbor_count)) / self.tau)

    def cdf_left(self, y, neighbor_sum, neighbor_count):
        return self.cdf(y, neighbor_sum, neighbor_count)

    def sample(self, neighbor_sum, neighbor_count, rng: np.random.Generator):
        mean = self.mean(np.asarray(neighbor_sum, dtype=float), neighbor_count)
        return mean + self.tau * rng.standard_normal(np.shape(mean))

    def initial_field(self, shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
        return self.alpha + self.tau * rng.standard_normal(shape)


class BinaryMrfSpec(BaseModel):
    """Autologistic MRF: logit p(s) = kappa + eta * sum of neighbor values."""

    model_config = ConfigDict(frozen=True)

    family: Literal["binary"] = "binary"
    kappa: float = 0.0
    eta: float = 0.0
    template: NeighborhoodTemplate
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS

    @model_validator(mode="after")
    def _check(self):
        if not (math.isfinite(self.kappa) and math.isfinite(self.eta)):
            raise ValueError("autologistic parameters must be finite")
        return self

    @property
    def continuous(self) -> bool:
        return False

    def probability(self, neighbor_sum, neighbor_count=None):
        return expit(self.kappa + self.eta * np.asarray(neighbor_sum, dtype=float))

    def cdf(self, y, neighbor_sum, neighbor_count):
        p = self.probability(neighbor_sum)
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, 0.0, np.where(y < 1, 1.0 - p, 1.0))

    def cdf_left(self, y, neighbor_sum, neighbor_count):
        p = self.probability(neighbor_sum)
        y = np.asarray(y, dtype=float)
        return np.where(y <= 0, 0.0, np.where(y <= 1, 1.0 - p, 1.0))

    def sample(self, neighbor_sum, neighbor_count, rng: np.random.Generator):
        p = self.probability(neighbor_sum)
        # Inverse CDF with u in (0, 1].
        u = 1.0 - rng.random(np.shape(p))
        return (u > 1.0 - p).astype(float)

    def initial_field(self, shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
        return (rng.random(shape) < 0.5).astype(float)


MrfModel = Union[GaussianMrfSpec, BinaryMrfSpec]


def _neighbor_stats(neighbor_values: Sequence[float]) -> Tuple[float, int]:
    values = np.asarray(neighbor_values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("neighbor values must be finite")
    return float(values.sum()), int(values.size)


def conditional_mean_gaussian(spec: GaussianMrfSpec, neighbor_values: Sequence[float]) -> float:
    total, count = _neighbor_stats(neighbor_values)
    return float(spec.mean(total, count))


def conditional_cdf(model: MrfModel, y: float, neighbor_values: Sequence[float]) -> float:
    """F(y | neighbors)."""
    if not math.isfinite(y):
        raise ValueError("y must be finite")
    total, count = _neighbor_stats(neighbor_values)
    return float(model.cdf(y, total, count))


def conditional_cdf_left(model: MrfModel, y: float, neighbor_values: Sequence[float]) -> float:
    """F^-(y | neighbors) = P(Y < y | neighbors)."""
    if not math.isfinite(y):
        raise ValueError("y must be finite")
    total, count = _neighbor_stats(neighbor_values)
    return float(model.cdf_left(y, total, count))


def conditional_sample(model: MrfModel, neighbor_values: Sequence[float], rng: np.random.Generator) -> float:
    total, count = _neighbor_stats(neighbor_values)
    return float(model.sample(np.array(total), count, rng))


def _raster_sweep(model: MrfModel, field: np.ndarray, observed: np.ndarray, rng: np.random.Generator) -> None:
    """Single-site updates in lexicographic order."""
    shape = field.shape
    for index in zip(*np.nonzero(observed)):
        total, count = 0.0, 0
        for offset in model.template.offsets:
            nb = tuple(i + o for i, o in zip(index, offset))
            if all(0 <= c < n for c, n in zip(nb, shape)) and observed[nb]:
                total += field[nb]
                count += 1
        field[index] = model.sample(np.array(total), count, rng)


def _blocked_sweep(
    model: MrfModel,
    field: np.ndarray,
    observed: np.ndarray,
    blocks: List[np.ndarray],
    rng: np.random.Generator,
) -> None:
    """Update each conclique in turn from the frozen rest of the field."""
    for block in blocks:
        total, count = neighbor_sums(field, observed, model.template)
        field[block] = model.sample(total[block], count[block], rng)


def gibbs_simulate(
    model: MrfModel,
    window: SamplingWindow,
    cover: ConcliqueCover,
    rng: np.random.Generator,
    burn_in: int = 500,
    spacing: int = 10,
    n_fields: int = 1,
    blocked: bool = True,
    initial: Optional[np.ndarray] = None,
) -> List[GridData]:
    """Run one Gibbs chain and emit ``n_fields`` fields, one every ``spacing`` sweeps after burn-in.

    A sweep updates concliques 0..q-1 in order (``blocked``) or every site in
    lexicographic order. Neighbors outside the window or masked are dropped
    from the conditionals.
    """
    if burn_in < 0 or spacing < 1 or n_fields < 1:
        raise ValueError("need burn_in >= 0, spacing >= 1 and n_fields >= 1")
    if cover.template != model.template:
        raise ValueError("conclique cover and model use different templates")
    if window.dim != model.template.dim:
        raise ValueError("window and template dimensions differ")

    observed = window.observed
    labels = label_grid(window, cover)
    blocks = [labels == j for j in range(cover.q)]
    if initial is not None:
        field = np.array(initial, dtype=float)
        if field.shape != window.shape:
            raise ValueError(f"initial field shape {field.shape} does not match window {window.shape}")
    else:
        field = model.initial_field(window.shape, rng)
    field = np.where(observed, field, 0.0)

    def sweep() -> None:
        if blocked:
            _blocked_sweep(model, field, observed, blocks, rng)
        else:
            _raster_sweep(model, field, observed, rng)

    for _ in range(burn_in):
        sweep()
    fields: List[GridData] = []
    while len(fields) < n_fields:
        for _ in range(spacing):
            sweep()
        fields.append(GridData(values=np.where(observed, field, np.nan), lower=window.lower))
    logger.debug(f"Gibbs chain emitted {n_fields} fields after {burn_in} burn-in sweeps")
    return fields
