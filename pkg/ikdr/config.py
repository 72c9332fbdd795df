"""Defaults, config files and hyperparameter containers."""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from .errors import InputError
from .kernels import BANDWIDTH_RULES

COMMANDS = ("fit", "transform", "cv", "featsel", "interpret", "kpca", "sweep")
MODES = ("single", "multi")

DEFAULT_GRID_VALUES = (0.01, 0.1, 1.0, 10.0)
DEFAULT_FOLDS = 10
DEFAULT_INNER_FOLDS = 5
DEFAULT_OUTPUT_DIR = "ikdr_out"


@dataclass(frozen=True)
class Hyperparams:
    """Weights, penalties and stopping rules of the relaxed I-KDR objective.

    `lam` is the dissimilarity weight (written as "lambda" in config files
    and reports), `mu` the Ip-term weight, `tau` and `zeta` the penalties
    tying S and X to A, and `rho` the ADMM penalty.
    """

    lam: float = 1.0
    mu: float = 1.0
    tau: float = 10.0
    zeta: float = 10.0
    rho: float = 1.0
    k: int = 10
    max_outer: int = 50
    outer_tol: float = 1e-5
    admm_iters: int = 100
    admm_tol: float = 1e-6
    qp_iters: int = 500
    qp_tol: float = 1e-8
    seed: int = 0
    exact_x_update: bool = False
    bandwidth_rule: str = "mean"

    def validate(self, n_samples: Optional[int] = None) -> None:
        """Raise InputError when a value is outside its admissible range."""
        reals = {
            "lambda": self.lam, "mu": self.mu, "tau": self.tau, "zeta": self.zeta,
            "rho": self.rho, "outer_tol": self.outer_tol, "admm_tol": self.admm_tol,
            "qp_tol": self.qp_tol,
        }
        for name, value in reals.items():
            if not math.isfinite(value):
                raise InputError(f"{name} must be finite, got {value}")
        if self.lam < 0 or self.mu < 0:
            raise InputError(f"lambda and mu must be nonnegative, got {self.lam}, {self.mu}")
        for name in ("tau", "zeta", "rho"):
            if reals[name] <= 0:
                raise InputError(f"{name} must be strictly positive, got {reals[name]}")
        for name in ("outer_tol", "admm_tol", "qp_tol"):
            if reals[name] < 0:
                raise InputError(f"{name} must be nonnegative, got {reals[name]}")
        if self.k < 1:
            raise InputError(f"target dimension k must be at least 1, got {self.k}")
        if n_samples is not None and self.k > n_samples:
            raise InputError(f"target dimension k={self.k} exceeds the number of samples {n_samples}")
        for name in ("max_outer", "admm_iters", "qp_iters"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.bandwidth_rule not in BANDWIDTH_RULES:
            raise InputError(f"unknown bandwidth rule '{self.bandwidth_rule}'")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        lam = data.pop("lam")
        return {"lambda": lam, **data}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Hyperparams":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown hyperparameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def with_updates(self, **changes: Any) -> "Hyperparams":
        return replace(self, **changes)


@dataclass
class RunConfig:
    """Everything one CLI invocation needs."""

    command: str
    data: Optional[str] = None
    label_col: str = "label"
    mode: str = "single"
    hyper: Hyperparams = field(default_factory=Hyperparams)
    grid: List[Tuple[float, float]] = field(default_factory=list)
    folds: int = DEFAULT_FOLDS
    inner_folds: int = DEFAULT_INNER_FOLDS
    out: str = DEFAULT_OUTPUT_DIR
    model: Optional[str] = None
    test_data: Optional[str] = None
    ks: List[int] = field(default_factory=list)
    center: bool = False
    compare: bool = False
    dump_kernel: Optional[str] = None
    trace: bool = False
    threads: int = 1

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise InputError(f"unknown command '{self.command}'")
        if self.mode not in MODES:
            raise InputError(f"unknown mode '{self.mode}', expected one of {MODES}")
        if self.command in ("transform", "interpret"):
            if not self.model:
                raise InputError(f"'{self.command}' needs --model")
        elif not self.data:
            raise InputError(f"'{self.command}' needs --data")
        if self.threads < 1:
            raise InputError(f"--threads must be at least 1, got {self.threads}")
        self.hyper.validate()
        os.makedirs(self.out, exist_ok=True)
        if not os.access(self.out, os.W_OK):
            raise InputError(f"output directory {self.out} is not writable")

    def echo(self) -> Dict[str, Any]:
        """Effective settings, written into every report."""
        return {
            "command": self.command,
            "data": self.data,
            "label_col": self.label_col,
            "mode": self.mode,
            "hyperparams": self.hyper.to_dict(),
            "grid": [{"lambda": lam, "mu": mu} for lam, mu in self.grid],
            "folds": self.folds,
            "inner_folds": self.inner_folds,
            "center": self.center,
            "compare": self.compare,
            "ks": list(self.ks),
            "threads": self.threads,
        }

    def digest(self) -> str:
        h = self.hyper
        return (f"data={self.data}, mode={self.mode}, k={h.k}, lambda={h.lam:g}, mu={h.mu:g}, "
                f"tau={h.tau:g}, zeta={h.zeta:g}, rho={h.rho:g}, seed={h.seed}")


def default_grid() -> List[Tuple[float, float]]:
    return [(lam, mu) for lam in DEFAULT_GRID_VALUES for mu in DEFAULT_GRID_VALUES]


def _parse_floats(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"cannot parse number list '{text}'")
    if not values:
        raise InputError(f"empty number list '{text}'")
    return values


def parse_grid(text: str) -> List[Tuple[float, float]]:
    """Parse a (lambda, mu) grid.

    Args:
        text: Either "0.01,0.1,1" (same values for both axes) or
            "lambda=0.1,1;mu=1,10"

    Returns:
        Cartesian product as a list of (lambda, mu) pairs
    """
    text = text.strip()
    if "=" not in text:
        values = _parse_floats(text)
        return [(lam, mu) for lam in values for mu in values]

    axes: Dict[str, List[float]] = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        name, _, values = part.partition("=")
        name = name.strip().lower()
        if name not in ("lambda", "mu"):
            raise InputError(f"unknown grid axis '{name}', expected lambda or mu")
        axes[name] = _parse_floats(values)
    lams = axes.get("lambda", [Hyperparams.lam])
    mus = axes.get("mu", [Hyperparams.mu])
    return [(lam, mu) for lam in lams for mu in mus]


def parse_ks(text: str) -> List[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"cannot parse dimension list '{text}'")
    if not ks or min(ks) < 1:
        raise InputError(f"dimension list must hold positive integers, got '{text}'")
    return ks


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a JSON config file.

    Keys are RunConfig field names plus any Hyperparams field name
    ("lambda" for the dissimilarity weight).
    """
    if not os.path.isfile(path):
        raise InputError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise InputError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return data


HYPER_KEYS = {f.name for f in fields(Hyperparams)} | {"lambda"}
RUN_KEYS = {f.name for f in fields(RunConfig)} - {"command", "hyper"}


def build_run_config(command: str, file_values: Dict[str, Any], flag_values: Dict[str, Any]) -> RunConfig:
    """Merge defaults < config file < command-line flags.

    Args:
        command: The subcommand
        file_values: Values from --config (may be empty)
        flag_values: Values given explicitly on the command line

    Returns:
        The effective RunConfig
    """
    hyper_values: Dict[str, Any] = {}
    run_values: Dict[str, Any] = {}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if value is None:
                continue
            if key in HYPER_KEYS:
                hyper_values["lam" if key == "lambda" else key] = value
            elif key in RUN_KEYS:
                run_values[key] = value
            else:
                raise InputError(f"unknown configuration key '{key}'")

    grid = run_values.pop("grid", None)
    if isinstance(grid, str):
        grid = parse_grid(grid)
    elif grid is not None:
        grid = [tuple(float(v) for v in pair) for pair in grid]
    ks = run_values.pop("ks", None)
    if isinstance(ks, str):
        ks = parse_ks(ks)

    try:
        hyper = Hyperparams(**hyper_values)
    except TypeError as e:
        raise InputError(f"invalid hyperparameters: {e}")
    return RunConfig(
        command=command,
        hyper=hyper,
        grid=grid if grid else default_grid(),
        ks=list(ks) if ks else [],
        **run_values,
    )
