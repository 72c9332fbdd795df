"""Command-line entry point for the I-KDR toolkit."""

import argparse
import os
import sys
import time
from typing import Any, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.table import Table

from . import evaluation
from .config import COMMANDS, MODES, RunConfig, build_run_config, load_config_file
from .core import build_kernels, eval_unrelaxed_terms, fit, transform
from .data import Dataset, build_label_indicator, load_csv, load_features
from .errors import IkdrError, InputError
from .kernels import BANDWIDTH_RULES, weighted_kernel
from .kpca import center_kernel, kpca_reconstruction_error
from .logger import get_logger, run_logger
from .reports import (load_model, save_model, write_class_scores_csv, write_csv, write_embedding_csv,
                      write_json, write_kernel_csv, write_trace_csv)

logger = get_logger(__name__)
console = Console()

# argparse dest -> configuration key
FLAG_KEYS = {
    "data": "data", "label_col": "label_col", "mode": "mode", "k": "k", "lam": "lambda",
    "mu": "mu", "tau": "tau", "zeta": "zeta", "rho": "rho", "seed": "seed", "folds": "folds",
    "inner_folds": "inner_folds", "grid": "grid", "out": "out", "exact_x_update": "exact_x_update",
    "bandwidth": "bandwidth_rule", "center": "center", "dump_kernel": "dump_kernel",
    "threads": "threads", "model": "model", "test_data": "test_data", "ks": "ks",
    "max_outer": "max_outer", "admm_iters": "admm_iters", "trace": "trace", "compare": "compare",
}


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the input-error status."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        logger.error(f"Invalid arguments: {message}")
        self.exit(InputError.exit_code, f"{self.prog}: error: {message}\n")


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments.

    Every option defaults to None so that only flags given explicitly
    override the config file.
    """
    parser = ArgumentParser(description="Interpretable kernel dimensionality reduction")
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", type=str, help="JSON file with default settings")
    parser.add_argument("--data", type=str, help="Training CSV file")
    parser.add_argument("--label-col", dest="label_col", type=str, help="Name of the label column (default: label)")
    parser.add_argument("--mode", choices=MODES, help="single: one Gaussian kernel; multi: one kernel per feature")
    parser.add_argument("--k", type=int, help="Target dimension (default: 10)")
    parser.add_argument("--lambda", dest="lam", type=float, help="Dissimilarity weight")
    parser.add_argument("--mu", type=float, help="Ip-term weight")
    parser.add_argument("--tau", type=float, help="Penalty tying S to AX")
    parser.add_argument("--zeta", type=float, help="Penalty tying X to A^T K")
    parser.add_argument("--rho", type=float, help="ADMM penalty")
    parser.add_argument("--seed", type=int, help="Seed for initialization and fold plans")
    parser.add_argument("--folds", type=int, help="Outer cross-validation folds (default: 10)")
    parser.add_argument("--inner-folds", dest="inner_folds", type=int, help="Tuning folds (default: 5)")
    parser.add_argument("--grid", type=str, help='Tuning grid, "0.01,0.1,1" or "lambda=0.1,1;mu=1,10"')
    parser.add_argument("--out", type=str, help="Output directory (default: ikdr_out)")
    parser.add_argument("--exact-x-update", dest="exact_x_update", action="store_const", const=True,
                        help="Solve the X-step exactly")
    parser.add_argument("--bandwidth", choices=BANDWIDTH_RULES, help="Gaussian bandwidth rule")
    parser.add_argument("--center", action="store_const", const=True, help="Center the K-PCA kernel")
    parser.add_argument("--compare", action="store_const", const=True,
                        help="kpca: also run I-KDR on the same folds")
    parser.add_argument("--dump-kernel", dest="dump_kernel", type=str, help="Write the training kernel to this CSV")
    parser.add_argument("--threads", type=int, help="Folds evaluated at once (default: 1)")
    parser.add_argument("--model", type=str, help="Model directory for transform and interpret")
    parser.add_argument("--test-data", dest="test_data", type=str, help="CSV to embed (default: --data)")
    parser.add_argument("--ks", type=str, help="Comma list of target dimensions for sweep")
    parser.add_argument("--max-outer", dest="max_outer", type=int, help="Outer iteration cap")
    parser.add_argument("--admm-iters", dest="admm_iters", type=int, help="ADMM iteration cap per A-step")
    parser.add_argument("--trace", action="store_const", const=True, help="fit: write the ADMM trace CSV")

    return parser.parse_args(argv)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the --config file and explicit flags."""
    file_values = load_config_file(args.config) if args.config else {}
    flag_values = {key: getattr(args, dest) for dest, key in FLAG_KEYS.items()}
    return build_run_config(args.command, file_values, flag_values)


def _out(config: RunConfig, name: str) -> str:
    return os.path.join(config.out, name)


def _summary(title: str, rows: List[Tuple[str, Any]]) -> None:
    table = Table(title=title)
    table.add_column("Item", style="cyan")
    table.add_column("Value")
    for name, value in rows:
        table.add_row(name, f"{value:.4f}" if isinstance(value, float) else str(value))
    console.print(table)


def _grid(config: RunConfig):
    return [config.hyper.with_updates(lam=lam, mu=mu) for lam, mu in config.grid]


def run_fit(config: RunConfig) -> str:
    dataset = load_csv(config.data, config.label_col)
    bundle = build_kernels(dataset.features, config.mode, config.hyper.bandwidth_rule)
    model = fit(dataset, bundle, config.hyper)
    K = weighted_kernel(bundle.with_alpha(model.alpha))
    train_embedding = model.A.T @ K.values

    save_model(model, _out(config, "model"), dataset.label_names, dataset.feature_names, config.label_col)
    write_embedding_csv(_out(config, "train_embedding.csv"), train_embedding)
    if config.trace:
        write_trace_csv(_out(config, "trace.csv"), model.admm_trace)
    if config.dump_kernel:
        write_kernel_csv(config.dump_kernel, K.values)

    H = build_label_indicator(dataset.labels, dataset.class_count)
    ip_value = evaluation.ip_measure(model.A, H)
    report: Dict[str, Any] = {
        "mode": model.mode,
        "n_samples": dataset.n_samples,
        "k": model.k,
        "outer_iterations": len(model.objective_trace),
        "admm_iterations": len(model.admm_trace),
        "objective": model.objective_trace[-1].as_dict() if model.objective_trace else None,
        "unrelaxed_terms": eval_unrelaxed_terms(model.A, model.alpha, bundle, H, dataset).as_dict(),
        "ip_value": ip_value,
        "bandwidths": list(model.bandwidths),
        "flagged_features": [dataset.feature_names[m] for m in model.flagged],
        "config_echo": config.echo(),
    }
    if model.mode == "multi":
        report["feature_profile"] = evaluation.feature_selection_profile(
            model.alpha, dataset.feature_names, gradient=model.alpha_gradient).to_dict()
    write_json(_out(config, "fit_report.json"), report)

    _summary("fit", [("samples", dataset.n_samples), ("k", model.k),
                     ("outer iterations", len(model.objective_trace)), ("Ip", ip_value)])
    return config.out


def run_transform(config: RunConfig) -> str:
    model, _, feature_names = load_model(config.model)
    path = config.test_data or config.data
    if not path:
        path = os.path.join(config.model, "train.csv")
    features = load_features(path, feature_names)
    embedding = transform(model, features)
    write_embedding_csv(_out(config, "embedding.csv"), embedding)
    _summary("transform", [("samples", features.shape[0]), ("k", model.k)])
    return _out(config, "embedding.csv")


def _write_cv_outputs(config: RunConfig, report: evaluation.EvalReport, dataset: Dataset, prefix: str) -> None:
    document = report.to_dict()
    document["fold_bandwidths"] = report.fold_bandwidths
    write_json(_out(config, f"{prefix}report.json"), document)
    write_csv(_out(config, f"{prefix}folds.csv"), ["fold", "accuracy", "lambda", "mu", "n_test"],
              [(i, acc, sel["lambda"], sel["mu"], len(report.fold_plan.folds[i][1]))
               for i, (acc, sel) in enumerate(zip(report.accuracy_per_fold, report.selected))])
    write_class_scores_csv(_out(config, f"{prefix}class_scores.csv"), report.dimension_class_scores,
                           dataset.label_names)


def run_cv(config: RunConfig) -> str:
    dataset = load_csv(config.data, config.label_col)
    report = evaluation.cross_validate(
        dataset, _grid(config), config.folds, config.hyper.seed, mode=config.mode,
        inner_folds=config.inner_folds, threads=config.threads, config_echo=config.echo(),
    )
    _write_cv_outputs(config, report, dataset, "")
    write_json(_out(config, "folds.json"), report.fold_plan.to_dict())
    _summary("cv", [("folds", report.fold_plan.fold_count), ("accuracy", report.accuracy_mean),
                    ("Ip", report.ip_value)])
    return config.out


def run_featsel(config: RunConfig) -> str:
    dataset = load_csv(config.data, config.label_col)
    bundle = build_kernels(dataset.features, "multi", config.hyper.bandwidth_rule)
    model = fit(dataset, bundle, config.hyper)
    if config.dump_kernel:
        write_kernel_csv(config.dump_kernel, weighted_kernel(bundle.with_alpha(model.alpha)).values)

    profile = evaluation.feature_selection_profile(model.alpha, dataset.feature_names,
                                                   gradient=model.alpha_gradient)
    write_csv(_out(config, "profile.csv"), ["rank", "index", "feature", "weight"],
              [(rank, index, name, weight) for rank, (index, name, weight) in enumerate(profile.entries, 1)])
    write_json(_out(config, "featsel.json"), {
        **profile.to_dict(),
        "flagged_features": [dataset.feature_names[m] for m in model.flagged],
        "config_echo": config.echo(),
    })
    top = ", ".join(name for _, name, _ in profile.entries[:3])
    _summary("featsel", [("features", dataset.n_features), ("selected (l0)", profile.l0), ("top", top)])
    return config.out


def run_interpret(config: RunConfig) -> str:
    model, label_names, feature_names = load_model(config.model)
    H = model.indicator
    scores = evaluation.dimension_class_scores(model.A, H)
    ip_value = evaluation.ip_measure(model.A, H)
    bundle = build_kernels(model.train_features, model.mode, model.hyper.bandwidth_rule)
    document: Dict[str, Any] = {
        "ip_value": ip_value,
        "dimension_class_scores": scores,
        "dominant_class": [label_names[q] for q in np.argmax(scores, axis=0)],
        "label_names": label_names,
        "unrelaxed_terms": eval_unrelaxed_terms(model.A, model.alpha, bundle, H).as_dict(),
        "config_echo": config.echo(),
    }
    if model.mode == "multi":
        document["feature_profile"] = evaluation.feature_selection_profile(
            model.alpha, feature_names, gradient=model.alpha_gradient).to_dict()
    write_json(_out(config, "interpret.json"), document)
    write_class_scores_csv(_out(config, "class_scores.csv"), scores, label_names)
    _summary("interpret", [("k", model.k), ("Ip", ip_value)])
    return config.out


def run_kpca(config: RunConfig) -> str:
    dataset = load_csv(config.data, config.label_col)
    hyper = config.hyper
    if config.compare:
        reports = evaluation.compare_with_kpca(
            dataset, _grid(config), config.folds, hyper.seed, mode=config.mode,
            inner_folds=config.inner_folds, threads=config.threads, center=config.center,
        )
        _write_cv_outputs(config, reports["ikdr"], dataset, "ikdr_")
    else:
        reports = {"kpca": evaluation.cross_validate(
            dataset, [hyper], config.folds, hyper.seed, method="kpca", threads=config.threads,
            center=config.center, config_echo=config.echo(),
        )}
    report = reports["kpca"]
    report.config_echo = config.echo()

    full = evaluation.registry.create("kpca", hyper, center=config.center).fit(dataset)
    K = center_kernel(full.train_kernel) if config.center else full.train_kernel
    document = report.to_dict()
    document["reconstruction_error"] = kpca_reconstruction_error(K, full.coefficients)
    if "ikdr" in reports:
        document["ikdr_accuracy_mean"] = reports["ikdr"].accuracy_mean
        document["ikdr_ip_value"] = reports["ikdr"].ip_value
    write_json(_out(config, "kpca_report.json"), document)
    write_class_scores_csv(_out(config, "class_scores.csv"), report.dimension_class_scores, dataset.label_names)

    rows: List[Tuple[str, Any]] = [("K-PCA accuracy", report.accuracy_mean), ("K-PCA Ip", report.ip_value)]
    if "ikdr" in reports:
        rows += [("I-KDR accuracy", reports["ikdr"].accuracy_mean), ("I-KDR Ip", reports["ikdr"].ip_value)]
    _summary("kpca", rows)
    return config.out


def run_sweep(config: RunConfig) -> str:
    dataset = load_csv(config.data, config.label_col)
    ks = config.ks or list(range(1, config.hyper.k + 1))
    rows = evaluation.accuracy_sweep(dataset, ks, config.hyper, config.folds, config.hyper.seed,
                                     mode=config.mode, threads=config.threads)
    write_csv(_out(config, "sweep.csv"), ["k", "accuracy"], rows)
    best_k, best = max(rows, key=lambda row: (row[1], -row[0]))
    _summary("sweep", [("dimensions tried", len(rows)), ("best k", best_k), ("best accuracy", best)])
    return _out(config, "sweep.csv")


COMMAND_HANDLERS = {
    "fit": run_fit,
    "transform": run_transform,
    "cv": run_cv,
    "featsel": run_featsel,
    "interpret": run_interpret,
    "kpca": run_kpca,
    "sweep": run_sweep,
}


def written_files(path: str, since: float) -> List[str]:
    """Files under `path` (or `path` itself) modified at or after `since`."""
    if os.path.isfile(path):
        return [path]
    written = []
    for root, _, names in os.walk(path):
        for name in names:
            full = os.path.join(root, name)
            if os.path.getmtime(full) >= since:
                written.append(full)
    return sorted(written)


def run(config: RunConfig) -> int:
    """Execute one command.

    Returns:
        Exit status: 0 on success, 1 on input errors, 2 on numerical failures
    """
    started = time.monotonic()
    since = float(int(time.time()))
    try:
        config.validate()
        logger.info(f"Running '{config.command}': {config.digest()}")
        detail = COMMAND_HANDLERS[config.command](config)
    except IkdrError as e:
        logger.error(f"{config.command} failed: {e}")
        run_logger.log_run(config.command, config.digest(), e.exit_code, elapsed=time.monotonic() - started,
                           error=str(e))
        return e.exit_code
    run_logger.log_run(config.command, config.digest(), 0, elapsed=time.monotonic() - started,
                       outputs=written_files(detail, since))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point."""
    args = parse_arguments(argv)
    try:
        config = config_from_args(args)
    except IkdrError as e:
        logger.error(f"Invalid configuration: {e}")
        run_logger.log_run(args.command, "unparsed", e.exit_code, error=str(e))
        sys.exit(e.exit_code)
    sys.exit(run(config))


if __name__ == "__main__":
    main()
