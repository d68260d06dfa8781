"""
Simulation studies at desk scale: empirical size against limit quantiles,
distances between finite-sample and limit distributions, and power curves.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from . import rng as rngs
from .conclique import ConcliqueCover
from .lattice import SamplingWindow
from .models import EdgeRule, MrfModel, gibbs_simulate
from .null_dist import NullQuantileTable, cm_distance, ks_distance
from .residuals import DEFAULT_GRID_SIZE, DEFAULT_R, default_u_grid, gof_statistics

logger = logging.getLogger(__name__)

FUNCTIONALS = (1, 2, 3, 4)
DISTANCE_SCALE = 1000.0


class StudyRun(BaseModel):
    """Shared simulation settings of one study."""

    model_config = ConfigDict(frozen=True)

    replicates: int
    burn_in: int = 500
    spacing: int = 10
    chunk_size: int = 250
    r: float = DEFAULT_R
    grid_size: int = DEFAULT_GRID_SIZE
    threads: int = 1


def simulate_statistics(
    generating: MrfModel,
    testing: MrfModel,
    cover: ConcliqueCover,
    side: int,
    seed: int,
    run: StudyRun,
) -> np.ndarray:
    """(replicates, 4) statistics of side x side fields drawn under ``generating``
    with residuals computed under ``testing`` (truncated neighbors).

    Chunk c runs its own spaced Gibbs chain on stream (STAGE_STUDY, c) of ``seed``.
    """
    window = SamplingWindow.full((side,) * generating.template.dim)
    testing = testing.model_copy(update={"edge_rule": EdgeRule.TRUNCATED_NEIGHBORS})
    u_grid = default_u_grid(run.grid_size)

    def run_chunk(index: int, block: range) -> np.ndarray:
        rng = rngs.stream(seed, rngs.STAGE_STUDY, index)
        fields = gibbs_simulate(
            generating, window, cover, rng, burn_in=run.burn_in, spacing=run.spacing, n_fields=len(block)
        )
        stats = [gof_statistics(f, testing, cover, rng, run.r, u_grid=u_grid).as_array() for f in fields]
        logger.debug(f"Study chunk {index} done ({len(block)} replicates)")
        return np.stack(stats)

    chunks = rngs.chunk_bounds(run.replicates, run.chunk_size)
    with ThreadPoolExecutor(max_workers=run.threads) as pool:
        parts = list(pool.map(run_chunk, range(len(chunks)), chunks))
    return np.concatenate(parts, axis=0)


def rejection_rows(
    eta: float,
    n_sites: int,
    stats: np.ndarray,
    table: NullQuantileTable,
    levels: Sequence[float],
) -> List[Dict]:
    rows = []
    replicates = stats.shape[0]
    for j in FUNCTIONALS:
        for level in levels:
            threshold = table.quantile(level)[j - 1]
            proportion = float(np.mean(stats[:, j - 1] > threshold))
            rows.append(
                {
                    "eta": eta,
                    "N": n_sites,
                    "functional": j,
                    "level": level,
                    "proportion": proportion,
                    "mc_se": float(np.sqrt(proportion * (1.0 - proportion) / replicates)),
                }
            )
    return rows


def study_table1(
    models: Sequence[MrfModel],
    tables: Sequence[NullQuantileTable],
    cover: ConcliqueCover,
    sides: Sequence[int],
    levels: Sequence[float],
    seed: int,
    run: StudyRun,
) -> pd.DataFrame:
    """Rejection proportions of T_1..T_4 at the limit quantiles, per (eta, N, functional, level)."""
    rows = []
    for (m, model), table in zip(enumerate(models), tables):
        for s, side in enumerate(sides):
            logger.info(f"Size study: eta={model.eta} side={side}")
            stats = simulate_statistics(model, model, cover, side, rngs.derive_seed(seed, rngs.STAGE_STUDY, m, s), run)
            rows.extend(rejection_rows(model.eta, side ** model.template.dim, stats, table, levels))
    return pd.DataFrame(rows, columns=["eta", "N", "functional", "level", "proportion", "mc_se"])


def distance_rows(eta: float, n_sites: int, finite: np.ndarray, limit: np.ndarray) -> List[Dict]:
    return [
        {
            "eta": eta,
            "N": n_sites,
            "functional": j,
            "d_ks": DISTANCE_SCALE * ks_distance(finite[:, j - 1], limit[:, j - 1]),
            "d_cm": DISTANCE_SCALE * cm_distance(finite[:, j - 1], limit[:, j - 1]),
        }
        for j in FUNCTIONALS
    ]


def study_distance(
    models: Sequence[MrfModel],
    tables: Sequence[NullQuantileTable],
    cover: ConcliqueCover,
    sides: Sequence[int],
    seed: int,
    run: StudyRun,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Finite-sample vs limit distances (x1000) and limit vs limit distances across eta pairs."""
    rows = []
    for (m, model), table in zip(enumerate(models), tables):
        for s, side in enumerate(sides):
            logger.info(f"Distance study: eta={model.eta} side={side}")
            stats = simulate_statistics(model, model, cover, side, rngs.derive_seed(seed, rngs.STAGE_STUDY, m, s), run)
            rows.extend(distance_rows(model.eta, side ** model.template.dim, stats, table.draws))

    between = []
    for (a, table_a), (b, table_b) in itertools.combinations(list(zip(models, tables)), 2):
        for j in FUNCTIONALS:
            between.append(
                {
                    "eta_a": a.eta,
                    "eta_b": b.eta,
                    "functional": j,
                    "d_ks": DISTANCE_SCALE * ks_distance(table_a.draws[:, j - 1], table_b.draws[:, j - 1]),
                    "d_cm": DISTANCE_SCALE * cm_distance(table_a.draws[:, j - 1], table_b.draws[:, j - 1]),
                }
            )
    finite = pd.DataFrame(rows, columns=["eta", "N", "functional", "d_ks", "d_cm"])
    limits = pd.DataFrame(between, columns=["eta_a", "eta_b", "functional", "d_ks", "d_cm"])
    return finite, limits


def power_curve(stats: np.ndarray, null_draws: np.ndarray, gammas: Sequence[float]) -> np.ndarray:
    """(len(gammas), 4) fraction of statistics above the (1 - gamma) null quantile."""
    gammas = np.asarray(gammas, dtype=float)
    if np.any((gammas <= 0) | (gammas >= 1)):
        raise ValueError("gamma values must lie in (0, 1)")
    thresholds = np.quantile(null_draws, 1.0 - gammas, axis=0)
    return (stats[None, :, :] > thresholds[:, None, :]).mean(axis=1)


def study_power(
    null_model: MrfModel,
    alternatives: Sequence[MrfModel],
    table: NullQuantileTable,
    cover: ConcliqueCover,
    sides: Sequence[int],
    gammas: Sequence[float],
    seed: int,
    run: StudyRun,
) -> pd.DataFrame:
    """Power against each alternative eta when testing the simple null ``null_model``."""
    rows = []
    for m, alternative in enumerate(alternatives):
        for s, side in enumerate(sides):
            logger.info(f"Power study: alternative eta={alternative.eta} side={side}")
            stats = simulate_statistics(alternative, null_model, cover, side, rngs.derive_seed(seed, rngs.STAGE_STUDY, m, s), run)
            power = power_curve(stats, table.draws, gammas)
            for g, gamma in enumerate(gammas):
                for j in FUNCTIONALS:
                    rows.append(
                        {
                            "alternative_eta": alternative.eta,
                            "N": side ** alternative.template.dim,
                            "functional": j,
                            "gamma": gamma,
                            "power": float(power[g, j - 1]),
                        }
                    )
    return pd.DataFrame(rows, columns=["alternative_eta", "N", "functional", "gamma", "power"])
