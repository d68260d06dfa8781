"""
Command-line front end.

Every command resolves a RunConfig (``--config`` JSON, environment defaults,
then flags), does its work, and writes a JSON document that embeds the
resolved config and library version. Errors map to exit codes: 2 config,
3 data, 4 numerical, 1 anything unexpected.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from . import __version__
from . import rng as rngs
from .bootstrap import composite_test
from .conclique import ConcliqueCover, build_cover, label_grid, verify_conclique
from .config import RunConfig, TemplateConfig, env_settings, load_run_config
from .errors import ConfigError, GofError
from .estimation import FitMethod, fit
from .io import read_grid_csv, result_document, write_grid_csv, write_json, write_label_csv, write_table
from .lattice import GridData, NeighborhoodTemplate
from .models import MrfModel, gibbs_simulate
from .null_dist import (
    NullQuantileTable,
    check_null_parameters,
    limit_covariance_for,
    p_value,
    simulate_null_quantiles,
)
from .residuals import compute_statistics, default_u_grid, empirical_process, generalized_residuals
from .studies import StudyRun, study_distance, study_power, study_table1

logger = logging.getLogger(__name__)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its values")
    common.add_argument("--seed", type=int, help="Base seed (required by stochastic commands)")
    common.add_argument("--threads", type=int, help="Worker threads (env: CONCLIQUE_GOF_THREADS)")
    common.add_argument("--log-level", help="Logging level (env: CONCLIQUE_GOF_LOG_LEVEL)")
    common.add_argument("--output", "-o", help="Result file (default: stdout)")
    model = common.add_argument_group("template and model")
    model.add_argument("--template", help="four_nearest, eight_nearest, unilateral, ...")
    model.add_argument("--dim", type=int, help="Lattice dimension for named templates")
    model.add_argument("--family", choices=["gaussian", "binary"])
    model.add_argument("--alpha", type=float)
    model.add_argument("--eta", type=float)
    model.add_argument("--tau2", type=float)
    model.add_argument("--kappa", type=float)
    model.add_argument("--edge-rule", choices=["interior_only", "truncated_neighbors"])
    model.add_argument("--shape", type=int, nargs="+", help="Window side lengths")
    return common


def _null_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("limit distribution")
    group.add_argument("--grid-size", type=int, help="Grid points G for limit paths")
    group.add_argument("--replicates", type=int, help="Limit draws R")
    group.add_argument("--r", type=float, help="Exponent of the L_r functionals")
    group.add_argument("--no-sup-correction", action="store_true", help="Disable the grid correction of sup norms")
    group.add_argument("--mc-fields", type=int, help="Fields for Monte Carlo covariance estimation")


def _study_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("study")
    group.add_argument("--etas", type=float, nargs="+")
    group.add_argument("--sides", type=int, nargs="+", help="Window sides; N = side^d")
    group.add_argument("--study-replicates", type=int)
    group.add_argument("--burn-in", type=int)
    group.add_argument("--spacing", type=int)
    group.add_argument("--chunk-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="conclique-gof", description="Conclique-based goodness-of-fit tests for Markov random fields"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", parents=[common], help="Build the conclique cover and label a window")
    p.add_argument("--labels-out", help="CSV of conclique labels (-1 for unlabelled)")
    p.add_argument("--interior-only", action="store_true", help="Label interior sites only")

    p = sub.add_parser("simulate", parents=[common], help="Gibbs-simulate fields to CSV")
    p.add_argument("--n-fields", type=int, default=1)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--spacing", type=int, default=10)
    p.add_argument("--out-dir", default="fields")
    p.add_argument("--raster", action="store_true", help="Single-site raster sweeps instead of conclique blocks")

    p = sub.add_parser("fit", parents=[common], help="Fit the Gaussian MRF")
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--method", choices=[m.value for m in FitMethod], default=FitMethod.ML.value)

    p = sub.add_parser("residuals", parents=[common], help="Generalized residuals and statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--residuals-out", help="CSV of residuals by conclique: conclique, site coordinates, u")
    p.add_argument("--r", type=float)

    p = sub.add_parser("null-dist", parents=[common], help="Simulate the limit distribution")
    _null_options(p)
    p.add_argument("--draws-out", help="CSV of limit draws")

    p = sub.add_parser("test-simple", parents=[common], help="Test a fully specified null model")
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    _null_options(p)

    p = sub.add_parser("test-composite", parents=[common], help="Parametric bootstrap test of the fitted model")
    p.add_argument("--data", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--B", type=int, dest="B")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--spacing", type=int)
    p.add_argument("--refit-method", choices=[m.value for m in FitMethod])
    p.add_argument("--a-field-mode", choices=["fresh", "fixed"])
    p.add_argument("--level", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--stats-out", help="CSV of replicate statistics and parameter draws")

    for name, help_text in (
        ("study-table1", "Empirical size at limit quantiles"),
        ("study-distance", "Distances between finite-sample and limit distributions"),
        ("power", "Power curves against alternative eta values"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        _null_options(p)
        _study_options(p)
    sub.choices["study-distance"].add_argument("--limits-out", help="CSV of limit-vs-limit distances")
    sub.choices["power"].add_argument("--alternatives", type=float, nargs="+", help="Alternative eta values")
    sub.choices["power"].add_argument("--gammas", type=float, nargs="+")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Nested config overrides from the flags that were given."""
    get = lambda name: getattr(args, name, None)
    template: Any = {"dim": get("dim")}
    if get("template") is not None:
        # A named template replaces any offsets from the config file.
        template = TemplateConfig(name=get("template"), dim=get("dim") or 2)
    null = {
        "grid_size": get("grid_size"),
        "replicates": get("replicates"),
        "r": get("r"),
        "mc_fields": get("mc_fields"),
        "sup_correction": False if get("no_sup_correction") else None,
    }
    bootstrap = {
        "B": get("B"),
        "refit_method": get("refit_method"),
        "a_field_mode": get("a_field_mode"),
        "level": get("level"),
    }
    study = {
        "etas": get("etas"),
        "sides": get("sides"),
        "replicates": get("study_replicates"),
        "chunk_size": get("chunk_size"),
        "alternative_etas": get("alternatives"),
        "gammas": get("gammas"),
    }
    if args.command == "test-composite":
        bootstrap.update({"burn_in": get("burn_in"), "spacing": get("spacing")})
    elif args.command in ("study-table1", "study-distance", "power"):
        study.update({"burn_in": get("burn_in"), "spacing": get("spacing")})
    return {
        "seed": get("seed"),
        "threads": get("threads"),
        "template": template,
        "model": {
            "family": get("family"),
            "alpha": get("alpha"),
            "eta": get("eta"),
            "tau2": get("tau2"),
            "kappa": get("kappa"),
            "edge_rule": get("edge_rule"),
        },
        "window": {"shape": get("shape")},
        "null": null,
        "bootstrap": bootstrap,
        "study": study,
    }


def _read_data(args: argparse.Namespace, template: NeighborhoodTemplate) -> GridData:
    data = read_grid_csv(args.data, header=args.header)
    if data.values.ndim != template.dim:
        raise ConfigError(f"data is {data.values.ndim}-D but the template is {template.dim}-D")
    return data


def _null_table(config: RunConfig, model: MrfModel, cover: ConcliqueCover, seed: int) -> NullQuantileTable:
    null = config.null
    cov = limit_covariance_for(
        model, cover, seed, null.mc_fields, tuple(null.mc_window), null.mc_burn_in, null.mc_spacing
    )
    logger.info(f"Simulating {null.replicates} limit draws ({cov.kind.value}, G={null.grid_size})")
    return simulate_null_quantiles(
        cov,
        seed,
        grid_size=null.grid_size,
        replicates=null.replicates,
        r=null.r,
        levels=null.levels,
        sup_correction=null.sup_correction,
        threads=config.threads,
    )


def cmd_partition(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    template = config.build_template()
    cover = build_cover(template)
    window = config.window.build()
    if window.dim != template.dim:
        raise ConfigError(f"window is {window.dim}-D but the template is {template.dim}-D")
    labels = label_grid(window, cover, interior_only=args.interior_only)
    for j in range(cover.q):
        if not verify_conclique(window.points(labels == j), template):
            raise GofError(f"conclique {j} contains neighboring sites")
    if args.labels_out:
        write_label_csv(args.labels_out, labels)
    return {
        **cover.summary(),
        "delta": list(cover.family.delta),
        "counts": [int((labels == j).sum()) for j in range(cover.q)],
        "labels": labels.tolist() if labels.ndim == 2 and args.labels_out is None else None,
    }


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    model = config.build_model(template)
    cover = build_cover(template)
    window = config.window.build()
    fields = gibbs_simulate(
        model,
        window,
        cover,
        rngs.stream(seed, rngs.STAGE_CHAIN),
        burn_in=args.burn_in,
        spacing=args.spacing,
        n_fields=args.n_fields,
        blocked=not args.raster,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, field in enumerate(fields):
        path = out_dir / f"field_{i:04d}.csv"
        write_grid_csv(path, field)
        paths.append(str(path))
    return {"fields": paths, "means": [float(np.nanmean(f.values)) for f in fields]}


def cmd_fit(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    template = config.build_template()
    data = _read_data(args, template)
    result = fit(data, template, FitMethod(args.method), config.model.edge_rule, max_sites=config.max_ml_sites)
    logger.info(f"Fit {result.method.value}: eta={result.eta_hat:.6f} bounds={result.eta_bounds}")
    return result.model_dump(mode="json", by_alias=True)


def cmd_residuals(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    model = config.build_model(template)
    cover = build_cover(template)
    data = _read_data(args, template)
    rng = rngs.stream(seed, rngs.STAGE_OBSERVED)
    residuals = generalized_residuals(data, model, cover, rng, u_grid=default_u_grid(config.null.statistic_grid_size))
    stats = compute_statistics(empirical_process(residuals), config.null.r)
    if args.residuals_out:
        frames = []
        for j, (values, sites) in enumerate(zip(residuals.per_conclique, residuals.sites)):
            frame = pd.DataFrame(sites.astype(int), columns=[f"s{i + 1}" for i in range(template.dim)])
            frame.insert(0, "conclique", j)
            frame["u"] = values
            frames.append(frame)
        write_table(pd.concat(frames, ignore_index=True), args.residuals_out)
    return {
        **stats.model_dump(),
        "N": residuals.n_total,
        "q": residuals.q,
        "conclique_sizes": list(residuals.conclique_sizes),
    }


def cmd_null_dist(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    model = config.build_model(template)
    cover = build_cover(template)
    table = _null_table(config, model, cover, seed)
    if args.draws_out:
        write_table(pd.DataFrame(table.draws, columns=["t1", "t2", "t3", "t4"]), args.draws_out)
    return table.summary()


def cmd_test_simple(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    model = config.build_model(template)
    check_null_parameters(model)
    cover = build_cover(template)
    data = _read_data(args, template)
    residuals = generalized_residuals(
        data, model, cover, rngs.stream(seed, rngs.STAGE_OBSERVED), u_grid=default_u_grid(config.null.statistic_grid_size)
    )
    stats = compute_statistics(empirical_process(residuals), config.null.r)
    table = _null_table(config, model, cover, seed)
    return {
        "t": stats.as_array().tolist(),
        "p": p_value(stats, table).tolist(),
        "q95": table.quantile(0.95).tolist(),
        "q99": table.quantile(0.99).tolist(),
        "n_total": residuals.n_total,
    }


def cmd_test_composite(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    template = config.build_template()
    cover = build_cover(template)
    data = _read_data(args, template)
    if config.model.family != "gaussian":
        raise ConfigError("composite testing fits the Gaussian family only")
    result = composite_test(data, template, cover, config.bootstrap_config())
    if args.stats_out:
        frame = pd.DataFrame(
            np.hstack([result.replicate_stats, result.parameter_draws]),
            columns=["t1", "t2", "t3", "t4", "alpha", "eta", "tau2"],
        )
        write_table(frame, args.stats_out)
    return result.summary()


def _study_run(config: RunConfig) -> StudyRun:
    study = config.study
    return StudyRun(
        replicates=study.replicates,
        burn_in=study.burn_in,
        spacing=study.spacing,
        chunk_size=study.chunk_size,
        r=config.null.r,
        grid_size=config.null.statistic_grid_size,
        threads=config.threads,
    )


def _models_at(config: RunConfig, template: NeighborhoodTemplate, etas: List[float]) -> List[MrfModel]:
    base = config.build_model(template)
    return [base.model_copy(update={"eta": float(eta)}) for eta in etas]


def _study_tables(config: RunConfig, models: List[MrfModel], cover: ConcliqueCover, seed: int) -> List[NullQuantileTable]:
    return [_null_table(config, model, cover, rngs.derive_seed(seed, rngs.STAGE_NULL, m)) for m, model in enumerate(models)]


def cmd_study_table1(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    cover = build_cover(template)
    models = _models_at(config, template, config.study.etas)
    tables = _study_tables(config, models, cover, seed)
    frame = study_table1(models, tables, cover, config.study.sides, config.study.levels, seed, _study_run(config))
    write_table(frame, args.output)
    return {"rows": len(frame)}


def cmd_study_distance(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    cover = build_cover(template)
    models = _models_at(config, template, config.study.etas)
    tables = _study_tables(config, models, cover, seed)
    finite, limits = study_distance(models, tables, cover, config.study.sides, seed, _study_run(config))
    write_table(finite, args.output)
    if args.limits_out:
        write_table(limits, args.limits_out)
    return {"rows": len(finite), "limit_rows": len(limits)}


def cmd_power(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    seed = config.require_seed()
    template = config.build_template()
    cover = build_cover(template)
    null_model = _models_at(config, template, [config.study.null_eta])[0]
    alternatives = _models_at(config, template, config.study.alternative_etas)
    table = _null_table(config, null_model, cover, rngs.derive_seed(seed, rngs.STAGE_NULL, 0))
    frame = study_power(
        null_model, alternatives, table, cover, config.study.sides, config.study.gammas, seed, _study_run(config)
    )
    write_table(frame, args.output)
    return {"rows": len(frame)}


def summary_path(table_path: str) -> Path:
    """table1.csv -> table1.summary.json"""
    return Path(table_path).with_suffix(".summary.json")


COMMANDS = {
    "partition": cmd_partition,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "residuals": cmd_residuals,
    "null-dist": cmd_null_dist,
    "test-simple": cmd_test_simple,
    "test-composite": cmd_test_composite,
    "study-table1": cmd_study_table1,
    "study-distance": cmd_study_distance,
    "power": cmd_power,
}
# These write CSV tables to --output, with the JSON document beside them.
TABLE_COMMANDS = {"study-table1", "study-distance", "power"}


def configure_logging(level: Optional[str]) -> None:
    level = (level or env_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
        config = load_run_config(args.config, _overrides(args))
        logger.info(f"Running {args.command} (version {__version__})")
        result = COMMANDS[args.command](args, config)
        if args.command in TABLE_COMMANDS:
            logger.info(f"{args.command} wrote {result}")
            if args.output:
                summary = result_document(args.command, config, {**result, "table": args.output})
                write_json(summary, summary_path(args.output))
        else:
            write_json(result_document(args.command, config, result), args.output)
        logger.info(f"{args.command} finished")
        return 0
    except GofError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Invalid argument: {e}")
        return ConfigError.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
