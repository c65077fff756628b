"""
Command-line entry point: ``robustlogit [-v|-q] fit|cv|predict|ddc|label|simulate|network ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from enum import Enum
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from robustlogit import __version__
from robustlogit.ddc import DdcConfig, detect_deviating_cells
from robustlogit.definitions import (
    Coefficients,
    Dataset,
    Estimator,
    PenaltySpec,
    ResidualVariant,
    derive_seed,
)
from robustlogit.enet import (
    SolverConfig,
    fit_enet_logistic,
    flag_outliers_classical,
)
from robustlogit.errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    InsufficientClassSizeError,
    NoValidSubsetError,
    NumericalError,
    PenaltyError,
    ResponseError,
    UnsupportedFormatError,
)
from robustlogit.filesystem import RunDirectory, RunManifest
from robustlogit.labels import (
    audit_labels,
    derive_labels,
    labels_frame,
    load_clinical,
    outlier_suspect_overlap,
)
from robustlogit.lts import LtsConfig, fit_enet_lts
from robustlogit.model import DEFAULT_CUTOFF, pearson_residual
from robustlogit.network import ClassFilter, correlation_network
from robustlogit.render import render_cell_map, renderers
from robustlogit.selection import (
    CvConfig,
    RobustScoring,
    cross_validate,
    evaluate_holdout,
)
from robustlogit.serialization import (
    INTERCEPT_NAME,
    coefficients_frame,
    dataset_frame,
    infer_separator,
    load_dataset,
    outliers_frame,
)
from robustlogit.synthetic import SyntheticConfig, generate_synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# child seed streams split off the single --seed
LTS_STREAM = 1
CV_STREAM = 2

_EXIT_CODES: Tuple[Tuple[Tuple[type, ...], int], ...] = (
    ((ConfigError, UnsupportedFormatError), EXIT_USAGE),
    (
        (
            DataError,
            ResponseError,
            InsufficientClassSizeError,
            DimensionMismatchError,
            FileNotFoundError,
        ),
        EXIT_DATA,
    ),
    ((NumericalError, NoValidSubsetError, PenaltyError), EXIT_NUMERICAL),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def _parse_penalty_factors(
    pairs: Sequence[str], col_names: Sequence[str]
) -> Optional[Tuple[float, ...]]:
    if not pairs:
        return None
    factors = dict.fromkeys(col_names, 1.0)
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"--penalty-factor expects NAME=VALUE; got `{pair}`")
        if name not in factors:
            raise DataError("Unknown column in --penalty-factor", column=name)
        try:
            factors[name] = float(value)
        except ValueError:
            raise UsageError(f"--penalty-factor value for `{name}` is not a number") from None
    return tuple(factors[c] for c in col_names)


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers; got `{text}`") from None


def _name_list(text: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _lts_config(args: argparse.Namespace) -> LtsConfig:
    return LtsConfig(
        h_fraction=args.h_fraction,
        n_initial_subsets=args.n_subsets,
        cutoff=args.cutoff,
        residual_variant=ResidualVariant(args.residual_variant),
        rng_seed=derive_seed(args.seed, LTS_STREAM),
        n_jobs=args.n_jobs,
    )


def _cv_config(args: argparse.Namespace) -> CvConfig:
    return CvConfig(
        k_folds=args.k_folds,
        n_repeats=args.repeats,
        alpha_grid=args.alpha_grid,
        n_lambda=args.n_lambda,
        lambda_ratio=args.lambda_ratio,
        stratified=not args.unstratified,
        rng_seed=derive_seed(args.seed, CV_STREAM),
        estimator=Estimator(args.estimator),
        lambda_values=args.lambda_values,
        robust_scoring=RobustScoring(args.robust_scoring),
        n_jobs=args.n_jobs,
    )


def _snapshot(args: argparse.Namespace, **configs: Any) -> Dict[str, Any]:
    snapshot = {k: v for k, v in vars(args).items() if k != "func"}
    for name, config in configs.items():
        if config is not None:
            snapshot[name] = asdict(config)
    return _jsonable(snapshot)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    return value


def _open_run(args: argparse.Namespace, inputs: Sequence[str], **configs: Any) -> RunDirectory:
    manifest = RunManifest(args.command, _snapshot(args, **configs), __version__)
    manifest.add_inputs([p for p in inputs if p])
    return RunDirectory.open(args.out, manifest)


def _fit_summary(estimator: Estimator, spec: PenaltySpec, coefs: Coefficients, flags: np.ndarray) -> Dict[str, Any]:
    return {
        "estimator": estimator.value,
        "alpha": spec.alpha,
        "lambda": spec.lambda_,
        "n_nonzero": coefs.n_nonzero,
        "n_outliers": int(np.sum(flags)),
    }


def cmd_fit(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, response=args.response)
    factors = _parse_penalty_factors(args.penalty_factor, data.col_names)
    estimator = Estimator(args.estimator)
    solver = SolverConfig()
    lts = _lts_config(args)
    cv = _cv_config(args) if args.cv else None
    if cv is None and (args.alpha is None or args.lambda_ is None):
        raise UsageError("fit needs either --alpha and --lambda, or --cv")
    if args.compare and estimator is not Estimator.Robust:
        raise ConfigError("compare", True, "needs --estimator robust")

    with _open_run(args, [args.data], lts_config=lts, cv_config=cv) as run:
        if cv is not None:
            result = cross_validate(data, cv, lts, solver, penalty_factors=factors)
            run.write_table("cv.csv", result.to_csv_frame())
            alpha, lambda_ = result.best_alpha, result.best_lambda
        else:
            alpha, lambda_ = args.alpha, args.lambda_
        spec = PenaltySpec(alpha, lambda_, factors)

        if estimator is Estimator.Robust:
            robust = fit_enet_lts(data, spec, lts, solver)
            coefs = robust.reweighted_coefs
            residuals, flags = robust.pearson_residuals, robust.outlier_flags
            # residuals and flags come from the raw coefficients
            prob = robust.raw_fit.fitted_prob
            summary = _fit_summary(estimator, spec, coefs, flags)
            summary.update(
                h=robust.h,
                raw_objective=robust.raw_objective,
                n_failed_subsets=robust.n_failed_subsets,
                reweight_fallback=robust.reweight_fallback,
                converged=robust.reweighted_fit.converged,
            )
        else:
            fit = fit_enet_logistic(data, spec, solver)
            coefs = fit.coefs
            flags = flag_outliers_classical(fit, lts.cutoff, lts.residual_variant)
            residuals = pearson_residual(fit.response, fit.fitted_prob, lts.residual_variant)
            prob = fit.fitted_prob
            summary = _fit_summary(estimator, spec, coefs, flags)
            summary.update(converged=fit.converged, iterations=fit.iters_used)

        run.write_table("coefficients.csv", coefficients_frame(coefs, data.col_names))
        run.write_table("outliers.csv", outliers_frame(data.row_ids, residuals, prob, flags))

        if args.compare:
            classical = fit_enet_logistic(data, spec, solver)
            classical_flags = flag_outliers_classical(classical, lts.cutoff, lts.residual_variant)
            classical_residuals = pearson_residual(
                classical.response, classical.fitted_prob, lts.residual_variant
            )
            run.write_table(
                "classical_coefficients.csv", coefficients_frame(classical.coefs, data.col_names)
            )
            run.write_table(
                "classical_outliers.csv",
                outliers_frame(data.row_ids, classical_residuals, classical.fitted_prob, classical_flags),
            )
            robust_active = {data.col_names[j] for j in coefs.active_set}
            classical_active = {data.col_names[j] for j in classical.coefs.active_set}
            summary["comparison"] = {
                "classical": _fit_summary(Estimator.Classical, spec, classical.coefs, classical_flags),
                "shared_active": sorted(robust_active & classical_active),
                "robust_only": sorted(robust_active - classical_active),
                "classical_only": sorted(classical_active - robust_active),
            }
        run.write_json("summary.json", summary)
        run.finish()
    logger.info("fit: %d nonzero coefficients, %d flagged rows", coefs.n_nonzero, int(flags.sum()))
    return EXIT_OK


def cmd_cv(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, response=args.response)
    factors = _parse_penalty_factors(args.penalty_factor, data.col_names)
    lts = _lts_config(args)
    cv = _cv_config(args)
    with _open_run(args, [args.data], lts_config=lts, cv_config=cv) as run:
        result = cross_validate(data, cv, lts, SolverConfig(), penalty_factors=factors)
        run.write_table("cv.csv", result.to_csv_frame())
        run.write_json(
            "selection.json",
            {
                "estimator": cv.estimator.value,
                "alpha": result.best_alpha,
                "lambda": result.best_lambda,
                "failed_cells": [list(c) for c in result.failed],
            },
        )
        run.finish()
    return EXIT_OK


def _load_coefficients(path: str, data: Dataset) -> Coefficients:
    frame = pd.read_csv(path, sep=infer_separator(path))
    if not {"name", "coefficient"} <= set(frame.columns):
        raise DataError("Coefficient table needs `name` and `coefficient` columns")
    values = dict(zip(frame["name"].astype(str), frame["coefficient"].astype(float)))
    if INTERCEPT_NAME not in values:
        raise DataError("Coefficient table has no intercept", column=INTERCEPT_NAME)
    missing = [c for c in data.col_names if c not in values]
    if missing:
        raise DataError("No coefficient for column", column=missing[0])
    return Coefficients(values[INTERCEPT_NAME], np.asarray([values[c] for c in data.col_names]))


def cmd_predict(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, response=args.response)
    coefs = _load_coefficients(args.coefficients, data)
    with _open_run(args, [args.data, args.coefficients]) as run:
        report = evaluate_holdout(
            coefs, data, args.cutoff, ResidualVariant(args.residual_variant), args.threshold
        )
        flagged = np.zeros(data.n, dtype=int)
        flagged[report.flagged] = 1
        borderline = np.zeros(data.n, dtype=int)
        borderline[report.borderline] = 1
        run.write_table(
            "predictions.csv",
            pd.DataFrame(
                {
                    "row_id": list(data.row_ids),
                    "label": data.require_response().astype(int),
                    "probability": report.probabilities,
                    "predicted": report.predicted.astype(int),
                    "flagged": flagged,
                    "borderline": borderline,
                }
            ),
        )
        run.write_json(
            "holdout.json",
            {
                "n": report.n,
                "n_mismatches": report.n_mismatches,
                "mismatches": [data.row_ids[i] for i in report.mismatches],
                "flagged": [data.row_ids[i] for i in report.flagged],
                "borderline": [data.row_ids[i] for i in report.borderline],
            },
        )
        run.finish()
    return EXIT_OK


def _read_row_groups(path: str, data: Dataset) -> Tuple[List[int], List[Tuple[str, int]]]:
    """ Rows in file order plus the (group, size) bands of consecutive equal groups """
    frame = pd.read_csv(path, sep=infer_separator(path), dtype=str, keep_default_na=False)
    if list(frame.columns[:2]) != ["row_id", "group"]:
        raise DataError("Row group table needs `row_id` and `group` columns")
    index = {r: i for i, r in enumerate(data.row_ids)}
    rows = []
    bands: List[Tuple[str, int]] = []
    for row_id, group in zip(frame["row_id"], frame["group"]):
        if row_id not in index:
            raise DataError("Unknown row id in row groups", row=row_id)
        rows.append(index[row_id])
        if bands and bands[-1][0] == group:
            bands[-1] = (group, bands[-1][1] + 1)
        else:
            bands.append((group, 1))
    return rows, bands


def cmd_ddc(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, response=args.response, allow_missing=True)
    if args.columns:
        data = data.select_columns(args.columns)
    config = DdcConfig(
        corr_threshold=args.corr_threshold,
        flag_quantile=args.flag_quantile,
        max_predictors=args.max_predictors,
        n_jobs=args.n_jobs,
    )
    formats = args.format or ["svg", "txt"]
    for fmt in formats:
        renderers.require(fmt)
    with _open_run(args, [args.data, args.row_groups], ddc_config=config) as run:
        cell_map = detect_deviating_cells(data, config)
        run.write_table("cellmap.csv", cell_map.to_frame())
        rows: Optional[List[int]] = None
        bands: Optional[List[Tuple[str, int]]] = None
        if args.row_groups:
            rows, bands = _read_row_groups(args.row_groups, data)
        for fmt in formats:
            run.write_bytes(f"cellmap.{fmt}", render_cell_map(cell_map, rows, None, fmt, bands))
        run.finish()
    return EXIT_OK


def cmd_label(args: argparse.Namespace) -> int:
    records = load_clinical(args.clinical)
    results = derive_labels(records)
    with _open_run(args, [args.clinical, args.flagged]) as run:
        run.write_table("labels.csv", labels_frame(results))
        run.write_table("suspects.csv", audit_labels(records))
        if args.flagged:
            flagged = pd.read_csv(args.flagged, sep=infer_separator(args.flagged), dtype=str)
            if "row_id" not in flagged.columns:
                raise DataError("Flagged table needs a `row_id` column")
            overlap = outlier_suspect_overlap(flagged["row_id"].tolist(), results)
            run.write_json("overlap.json", asdict(overlap))
        run.finish()
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = SyntheticConfig(
        n=args.n,
        p=args.p,
        sparsity=args.sparsity,
        signal=args.signal,
        class_balance=args.class_balance,
        block_size=args.block_size,
        block_rho=args.block_rho,
        class1_block_rho=args.class1_block_rho,
        label_flip_rate=args.label_flip_rate,
        leverage_rate=args.leverage_rate,
        leverage_scale=args.leverage_scale,
        flip_on_leverage=args.flip_on_leverage,
        cell_outlier_rate=args.cell_outlier_rate,
        cell_outlier_size=args.cell_outlier_size,
        seed=args.seed,
    )
    data, truth = generate_synthetic(config)
    with _open_run(args, [], synthetic_config=config) as run:
        run.write_table("data.csv", dataset_frame(data, args.response))
        run.write_text("truth.json", truth.to_json())
        run.finish()
    return EXIT_OK


def cmd_network(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, response=args.response)
    filters = args.classes or (
        ["all"] if data.response is None else ["all", "0", "1"]
    )
    with _open_run(args, [args.data]) as run:
        for name in filters:
            network = correlation_network(data, args.genes, ClassFilter(name), args.threshold)
            run.write_text(f"network_{name}.dot", network.to_dot(f"network_{name}"))
            run.write_text(f"network_{name}.json", network.to_json())
        run.finish()
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory or pyfilesystem2 URL")
    parser.add_argument("--seed", type=int, default=0, help="single run seed; child seeds are derived from it")


def _add_response(parser: argparse.ArgumentParser, default: Optional[str] = "y") -> None:
    parser.add_argument("--response", default=default, help="name of the 0/1 response column")


def _add_estimation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("data", help="CSV/TSV: header row, first column row ids")
    _add_response(parser)
    parser.add_argument("--estimator", choices=[e.value for e in Estimator], default=Estimator.Robust.value)
    parser.add_argument(
        "--penalty-factor",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="per-column penalty factor (repeatable); 0 leaves the column unpenalized",
    )
    parser.add_argument("--h-fraction", type=float, default=0.85)
    parser.add_argument("--n-subsets", type=int, default=500)
    parser.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    parser.add_argument(
        "--residual-variant",
        choices=[v.value for v in ResidualVariant],
        default=ResidualVariant.AsPrinted.value,
    )
    parser.add_argument("--n-jobs", type=int, default=1)
    parser.add_argument("--k-folds", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=10)
    parser.add_argument("--alpha-grid", type=_float_list, default=CvConfig().alpha_grid)
    parser.add_argument("--n-lambda", type=int, default=40)
    parser.add_argument("--lambda-ratio", type=float, default=0.01)
    parser.add_argument("--lambda-values", type=_float_list, default=None, help="explicit lambda grid")
    parser.add_argument("--unstratified", action="store_true")
    parser.add_argument(
        "--robust-scoring",
        choices=[s.value for s in RobustScoring],
        default=RobustScoring.Flagged.value,
    )
    _add_common(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="robustlogit",
        description="Robust sparse logistic regression and cellwise outlier detection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="count", default=0)
    verbosity.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = commands.add_parser("fit", help="fit a classical or robust sparse logistic model")
    _add_estimation(fit)
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--lambda", dest="lambda_", type=float)
    fit.add_argument("--cv", action="store_true", help="choose (alpha, lambda) by cross-validation")
    fit.add_argument("--compare", action="store_true", help="also fit the classical model")
    fit.set_defaults(func=cmd_fit)

    cv = commands.add_parser("cv", help="cross-validate the (alpha, lambda) grid")
    _add_estimation(cv)
    cv.set_defaults(func=cmd_cv)

    predict = commands.add_parser("predict", help="evaluate fitted coefficients on held-out rows")
    predict.add_argument("coefficients", help="coefficients.csv written by `fit`")
    predict.add_argument("data")
    _add_response(predict)
    predict.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    predict.add_argument(
        "--residual-variant",
        choices=[v.value for v in ResidualVariant],
        default=ResidualVariant.AsPrinted.value,
    )
    predict.add_argument("--threshold", type=float, default=0.5)
    _add_common(predict)
    predict.set_defaults(func=cmd_predict)

    ddc = commands.add_parser("ddc", help="cellwise outlier map")
    ddc.add_argument("data")
    _add_response(ddc, default=None)
    ddc.add_argument("--columns", type=_name_list, help="comma-separated column subset")
    ddc.add_argument("--row-groups", help="CSV with `row_id,group`; rows are drawn in file order")
    ddc.add_argument("--corr-threshold", type=float, default=0.5)
    ddc.add_argument("--flag-quantile", type=float, default=0.99)
    ddc.add_argument("--max-predictors", type=int, default=10)
    ddc.add_argument("--format", action="append", help="svg and/or txt (repeatable; default both)")
    ddc.add_argument("--n-jobs", type=int, default=1)
    _add_common(ddc)
    ddc.set_defaults(func=cmd_ddc)

    label = commands.add_parser("label", help="derive TNBC labels and audit discordant records")
    label.add_argument("clinical")
    label.add_argument("--flagged", help="outliers.csv from `fit` to cross-reference with suspects")
    _add_common(label)
    label.set_defaults(func=cmd_label)

    simulate = commands.add_parser("simulate", help="write a seeded synthetic instance and its ground truth")
    defaults = SyntheticConfig()
    for name in ("n", "p", "sparsity", "block_size"):
        simulate.add_argument(f"--{name.replace('_', '-')}", type=int, default=getattr(defaults, name))
    for name in (
        "signal", "class_balance", "block_rho", "label_flip_rate", "leverage_rate",
        "leverage_scale", "cell_outlier_rate", "cell_outlier_size",
    ):
        simulate.add_argument(f"--{name.replace('_', '-')}", type=float, default=getattr(defaults, name))
    simulate.add_argument("--class1-block-rho", type=float, default=None)
    simulate.add_argument("--flip-on-leverage", action="store_true")
    _add_response(simulate)
    _add_common(simulate)
    simulate.set_defaults(func=cmd_simulate)

    network = commands.add_parser("network", help="export a gene correlation network")
    network.add_argument("data")
    _add_response(network, default=None)
    network.add_argument("--genes", type=_name_list)
    network.add_argument("--threshold", type=float, default=0.6)
    network.add_argument("--classes", action="append", choices=[c.value for c in ClassFilter])
    _add_common(network)
    network.set_defaults(func=cmd_network)
    return parser


def _configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    else:
        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _exit_code(exc: BaseException) -> Optional[int]:
    for kinds, code in _EXIT_CODES:
        if isinstance(exc, kinds):
            return code
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args.verbose, args.quiet)
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except UsageError as exc:
        print(f"robustlogit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pylint: disable=broad-except
        code = _exit_code(exc)
        if code is None:
            raise
        logger.debug("Command failed", exc_info=True)
        print(f"robustlogit {args.command}: {exc}", file=sys.stderr)
        return code


__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_DATA",
    "EXIT_NUMERICAL",
    "UsageError",
    "build_parser",
    "cmd_fit",
    "cmd_cv",
    "cmd_predict",
    "cmd_ddc",
    "cmd_label",
    "cmd_simulate",
    "cmd_network",
    "main",
]
