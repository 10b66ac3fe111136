"""Command-line front end: ``blockgel estimate | test | simulate``.

Exit codes: 0 success, 1 usage or input error, 2 numerical non-convergence
(the report is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .blocking import make_scheme, regime_scheme
from .data import Dataset, read_csv
from .errors import ConfigurationError, DataError, GelError
from .inference import confidence_interval, covariances, gel_ratio_state, overid_test, wilks_test
from .inner import SolverOptions
from .links import make_link
from .models import lag_stack, model_logistic, model_mean, model_mean_unit_variance, model_var_residual
from .outer import estimate
from .penalty import ScadPenalty, estimate_penalized, select_tau
from .reporting import atomic_write, dumps
from .simlab import McDesign, run_design

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("blockgel")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
COMMANDS = ("estimate", "test", "simulate")


class UsageError(GelError):
    pass


@dataclass
class RunConfig:
    """Everything a command needs; round-trips through :meth:`to_dict`."""

    command: str = "estimate"
    data_path: Optional[str] = None
    model: str = "mean"
    link: str = "EL"
    regime: Optional[str] = "i"
    block_m: Optional[int] = None
    block_l: Optional[int] = None
    penalty_tau: Optional[float] = None
    penalty_grid: Optional[list] = None
    theta0: Optional[list] = None
    alpha: float = 0.05
    seed: Optional[int] = None
    out: str = "blockgel_out"
    workers: int = 1
    design_path: Optional[str] = None
    tol_inner: float = 1e-9
    tol_outer: float = 1e-6
    max_outer: int = 500
    n_starts: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UsageError(f"unknown configuration key(s): {unknown}")
        cfg = cls(**raw)
        cfg.normalise()
        return cfg

    def normalise(self):
        if self.command not in COMMANDS:
            raise UsageError(f"command must be one of {COMMANDS}, got {self.command!r}")
        self.link = str(self.link).upper()
        make_link(self.link)
        if self.regime is not None:
            self.regime = str(self.regime).lower()
        if (self.block_m is None) != (self.block_l is None):
            raise UsageError("--block-m and --block-l must be given together")
        if self.block_m is not None:
            self.block_m, self.block_l, self.regime = int(self.block_m), int(self.block_l), None
        if self.penalty_tau is not None and self.penalty_grid is not None:
            raise UsageError("give either --penalty-tau or --penalty-grid, not both")
        if self.penalty_tau is not None:
            self.penalty_tau = float(self.penalty_tau)
        if self.penalty_grid is not None:
            self.penalty_grid = [float(t) for t in self.penalty_grid]
        if self.theta0 is not None:
            self.theta0 = [float(t) for t in self.theta0]
        self.alpha = float(self.alpha)
        if not 0 < self.alpha < 1:
            raise UsageError(f"--alpha must lie in (0, 1), got {self.alpha}")
        if self.seed is not None:
            self.seed = int(self.seed)
        self.workers = int(self.workers)
        return self

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def options(self) -> SolverOptions:
        return SolverOptions(tol_inner=self.tol_inner, tol_outer=self.tol_outer, max_outer=self.max_outer,
                             n_starts=self.n_starts, seed=self.seed or 0)


def _floats(text):
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockgel", description="Blockwise generalized empirical likelihood")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="TOML file with configuration keys; flags override it")
        p.add_argument("--out", help="output path prefix")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")

    def fitting(p):
        p.add_argument("--data", dest="data_path", help="CSV file, one row per time point")
        p.add_argument("--model", help="mean | logistic | unit-variance | var:S:M")
        p.add_argument("--link", type=str.upper, choices=["EL", "ET", "CU"])
        p.add_argument("--regime", choices=["i", "ii", "iii", "iv", "v"])
        p.add_argument("--block-m", type=int)
        p.add_argument("--block-l", type=int)
        p.add_argument("--alpha", type=float, help="test/interval level (default 0.05)")
        p.add_argument("--tol-outer", type=float)
        p.add_argument("--max-outer", type=int)
        p.add_argument("--n-starts", type=int)

    est = sub.add_parser("estimate", help="fit a model and write a JSON report")
    common(est)
    fitting(est)
    est.add_argument("--penalty-tau", type=float)
    est.add_argument("--penalty-grid", type=_floats)
    est.add_argument("--theta0", type=_floats, help="starting value")

    tst = sub.add_parser("test", help="GEL-ratio test of theta = theta0, or over-identification test")
    common(tst)
    fitting(tst)
    tst.add_argument("--theta0", type=_floats, help="null value; omit for the over-identification test")

    sim = sub.add_parser("simulate", help="run a Monte Carlo design file")
    common(sim)
    sim.add_argument("--design", dest="design_path", help="TOML design file")
    sim.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from None
        raw = {k.replace("-", "_"): v for k, v in raw.items()}
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "verbose")}
    if "block_m" in flags or "block_l" in flags:
        raw.pop("regime", None)
    if "regime" in flags:
        raw.pop("block_m", None)
        raw.pop("block_l", None)
    raw.update(flags)
    if args.command == "simulate" and "workers" not in raw:
        import os

        raw["workers"] = os.cpu_count() or 1
    return RunConfig.from_dict(raw)


def build_model(spec: str, data: Dataset):
    """Return ``(model, dataset)``; ``var:S:M`` stacks lags of the raw series."""
    kind, *rest = str(spec).lower().split(":")
    if kind == "mean":
        return model_mean(data.d), data
    if kind == "logistic":
        if data.d < 2:
            raise ConfigurationError("logistic model needs a response column and at least one covariate")
        return model_logistic(data.d - 1), data
    if kind in ("unit-variance", "unit_variance"):
        if data.d != 1:
            raise ConfigurationError(f"unit-variance model needs a single column, data has {data.d}")
        return model_mean_unit_variance(), data
    if kind == "var":
        if len(rest) != 2:
            raise UsageError("VAR model spec must look like var:S:M")
        s, m = int(rest[0]), int(rest[1])
        if data.d == s * (m + 1):
            return model_var_residual(s, m), data
        if data.d != s:
            raise ConfigurationError(
                f"VAR model with s={s}, m={m} needs {s} raw or {s * (m + 1)} lag-stacked columns, data has {data.d}")
        return model_var_residual(s, m), Dataset(lag_stack(data.values, m))
    raise UsageError(f"unknown model {spec!r}")


def _scheme(cfg: RunConfig, n: int):
    if cfg.block_m is not None:
        return make_scheme(n, cfg.block_m, cfg.block_l)
    return regime_scheme(cfg.regime or "i", n)


def _load(cfg: RunConfig):
    if not cfg.data_path:
        raise UsageError("--data is required")
    data = read_csv(cfg.data_path)
    model, data = build_model(cfg.model, data)
    return data, model, _scheme(cfg, data.n)


def _header(cfg, model, scheme):
    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "model": {"name": cfg.model, "r": model.r, "p": model.p},
        "link": cfg.link,
        "scheme": scheme.as_dict(),
    }


def _write_reports(cfg, payload, summary):
    out = Path(cfg.out)
    atomic_write(out.with_name(out.name + ".json"), dumps(payload))
    atomic_write(out.with_name(out.name + ".txt"), summary)


def _fmt(x, width=14):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return f"{'nan':>{width}}"
    return f"{x:>{width}.6g}"


def cmd_estimate(cfg: RunConfig) -> int:
    data, model, scheme = _load(cfg)
    opts = cfg.options()
    if cfg.theta0 is not None:
        from dataclasses import replace

        opts = replace(opts, theta0=tuple(cfg.theta0))
    link = make_link(cfg.link)
    fit = estimate(data, model, scheme, link, opts)
    penalty = None
    active = None
    result = fit
    if cfg.penalty_tau is not None or cfg.penalty_grid is not None:
        if cfg.penalty_tau is not None:
            pres = estimate_penalized(data, model, scheme, link, ScadPenalty(cfg.penalty_tau), opts, fit)
        else:
            pres = select_tau(data, model, scheme, link, cfg.penalty_grid, opts=opts, initial=fit)
        result = pres.base
        active = pres.active_set
        penalty = {
            "tau_selected": pres.tau_selected,
            "a": 3.7,
            "active_set": list(active),
            "s_hat": pres.s_hat,
            "penalized_objective": pres.penalized_objective,
            "path": [{"tau": pt.tau, "criterion": pt.criterion, "s_hat": pt.s_hat, "theta": pt.theta}
                     for pt in pres.path],
        }
    cov = covariances(data, model, scheme, result, active=active)
    level = cfg.alpha
    cis = []
    for j in range(model.p):
        e = np.zeros(model.p)
        e[j] = 1.0
        lo, hi = confidence_interval(cov, result, e, level)
        cis.append({"index": j, "lower": lo, "upper": hi})
    w_hat, _ = gel_ratio_state(data, model, scheme, link, result.theta_hat, opts)
    overid = None
    if model.r > model.p and penalty is None:
        overid = overid_test(data, model, scheme, link, result, opts).as_dict()
    payload = {"command": "estimate", **_header(cfg, model, scheme)}
    payload.update(
        converged=result.converged,
        iterations=result.iterations,
        theta_hat=result.theta_hat,
        lambda_hat=result.lambda_hat,
        profile_objective=result.profile_objective,
        gradient_norm=result.gradient_norm,
        se=cov.se,
        ci_level=1.0 - level,
        confidence_intervals=cis,
        gel_ratio=w_hat,
        overid_test=overid,
        penalty=penalty,
        diagnostics={k: v for k, v in result.diagnostics.items() if not isinstance(v, (list, dict))},
    )
    lines = [
        f"blockgel {__version__}  estimate",
        f"model {cfg.model} (r={model.r}, p={model.p})  link {cfg.link}  "
        f"blocks M={scheme.M} L={scheme.L} Q={scheme.Q}  n={data.n}",
        f"converged: {result.converged}  iterations: {result.iterations}  "
        f"gradient: {result.gradient_norm:.3g}",
        "",
        f"{'coef':>6}{'estimate':>14}{'std.err':>14}{'lower':>14}{'upper':>14}",
    ]
    for j in range(model.p):
        lines.append(f"{j:>6}{_fmt(float(result.theta_hat[j]))}{_fmt(float(cov.se[j]))}"
                     f"{_fmt(cis[j]['lower'])}{_fmt(cis[j]['upper'])}")
    lines.append("")
    lines.append(f"GEL ratio w_n(theta_hat) = {w_hat:.6g}")
    if overid is not None:
        lines.append(f"over-identification: z = {overid['statistic']:.4f}, p = {overid['p_value']:.4g} "
                     f"(chi2[{overid['df']}] p = {overid['chi2_p_value']:.4g})")
    if penalty is not None:
        lines.append(f"SCAD tau = {penalty['tau_selected']:.6g}, active set = {penalty['active_set']}")
    _write_reports(cfg, payload, "\n".join(lines) + "\n")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_test(cfg: RunConfig) -> int:
    data, model, scheme = _load(cfg)
    opts = cfg.options()
    link = make_link(cfg.link)
    levels = tuple(sorted({0.01, 0.05, 0.10, cfg.alpha}))
    status = EXIT_OK
    if cfg.theta0 is not None:
        theta0 = np.asarray(cfg.theta0, dtype=float)
        if theta0.shape != (model.p,):
            raise ConfigurationError(f"--theta0 has {theta0.size} values, model has p={model.p}")
        report = wilks_test(data, model, scheme, link, theta0, opts, levels)
        extra = {"theta0": theta0}
    else:
        if model.r <= model.p:
            raise ConfigurationError(f"over-identification requires r > p (r={model.r}, p={model.p})")
        fit = estimate(data, model, scheme, link, opts)
        report = overid_test(data, model, scheme, link, fit, opts, levels)
        extra = {"theta_hat": fit.theta_hat, "converged": fit.converged}
        status = EXIT_OK if fit.converged else EXIT_NONCONVERGED
    payload = {"command": "test", **_header(cfg, model, scheme), **extra, "report": report.as_dict(),
               "caveat": "normal calibration assumes mixing and moment conditions that are not checked"}
    summary = (
        f"blockgel {__version__}  test ({report.kind})\n"
        f"standardised statistic z = {report.statistic:.6g}  one-sided N(0,1) p = {report.p_value:.6g}\n"
        f"w_n = {report.chi2_statistic:.6g}  chi2[{report.df}] p = {report.chi2_p_value:.6g}\n"
        f"reject at {cfg.alpha:g}: {report.reject_at[cfg.alpha]}\n"
    )
    _write_reports(cfg, payload, summary)
    return status


def load_design(path) -> McDesign:
    path = Path(path)
    if not path.exists():
        raise DataError(f"design file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return McDesign.from_mapping(raw.get("design", raw))


def cmd_simulate(cfg: RunConfig) -> int:
    if not cfg.design_path:
        raise UsageError("--design is required")
    design = load_design(cfg.design_path)
    if cfg.seed is not None:
        from dataclasses import replace

        design = replace(design, base_seed=cfg.seed)
    result = run_design(design, workers=cfg.workers)
    out = Path(cfg.out)
    manifest = result.manifest()
    manifest["version"] = __version__
    atomic_write(out.with_name(out.name + "_cells.csv"), result.long_csv())
    atomic_write(out.with_name(out.name + "_manifest.json"), dumps(manifest))
    atomic_write(out.with_name(out.name + "_table.csv"), result.table_csv())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        handler = {"estimate": cmd_estimate, "test": cmd_test, "simulate": cmd_simulate}[cfg.command]
        return handler(cfg)
    except (UsageError, DataError, ConfigurationError) as exc:
        print(f"blockgel: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GelError as exc:
        print(f"blockgel: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
