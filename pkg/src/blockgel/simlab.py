"""Data-generating processes and the Monte Carlo driver for the simulation tables.

Random numbers come from numpy's Philox4x32-10 counter-based bit generator;
Gaussian draws use numpy's ziggurat ``standard_normal``. Replication ``k``
of a design uses seed ``base_seed + k``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .blocking import REGIMES, block_moments, block_weights, regime_scheme
from .data import Dataset
from .errors import ConfigurationError, GelError
from .inner import SolverOptions
from .models import model_logistic, model_mean
from .outer import EstimationResult, estimate, quasi_newton
from .penalty import select_tau

__all__ = [
    "RNG_ALGORITHM",
    "NORMAL_METHOD",
    "make_rng",
    "Var1Config",
    "var1_innovation_cov",
    "gen_var1",
    "gen_logistic",
    "logistic_theta0",
    "gmm_twostep",
    "McDesign",
    "design_dimension",
    "DesignResult",
    "run_design",
    "ESTIMATORS",
]

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.Philox (Philox4x32-10), numpy " + np.__version__
NORMAL_METHOD = "numpy Generator.standard_normal (ziggurat)"
ESTIMATORS = ("EL", "ET", "CU", "GMM", "PEL", "PET", "PCU")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class Var1Config:
    psi: float
    p: int
    n: int
    burn_in: int = 200
    seed: int = 0


def var1_innovation_cov(psi: float, p: int) -> np.ndarray:
    """Tridiagonal innovation covariance: ``1 - psi^2`` on the diagonal, half that next to it."""
    s = 1.0 - psi * psi
    cov = np.eye(p) * s
    idx = np.arange(p - 1)
    cov[idx, idx + 1] = cov[idx + 1, idx] = 0.5 * s
    return cov


def _var1_path(cfg: Var1Config, rng) -> np.ndarray:
    if not abs(cfg.psi) < 1:
        raise ConfigurationError(f"VAR(1) coefficient must satisfy |psi| < 1, got {cfg.psi}")
    chol = np.linalg.cholesky(var1_innovation_cov(cfg.psi, cfg.p))
    total = cfg.n + cfg.burn_in
    eps = rng.standard_normal((total, cfg.p)) @ chol.T
    x = np.empty((total, cfg.p))
    prev = np.zeros(cfg.p)
    for t in range(total):
        prev = cfg.psi * prev + eps[t]
        x[t] = prev
    return x[cfg.burn_in:]


def gen_var1(cfg: Var1Config) -> Dataset:
    """``X_t = psi X_{t-1} + eps_t`` started at zero, first ``burn_in`` rows dropped."""
    return Dataset(_var1_path(cfg, make_rng(cfg.seed)))


def logistic_theta0(p: int) -> np.ndarray:
    theta = np.zeros(p)
    theta[:2] = (0.8, 0.2)[: min(p, 2)]
    return theta


def gen_logistic(cfg: Var1Config, theta0=None) -> Dataset:
    """Rows ``(Y_t, Z_t)`` with VAR(1) covariates and ``P(Y=1|Z) = sigmoid(1 + Z'theta0)``."""
    theta0 = logistic_theta0(cfg.p) if theta0 is None else np.asarray(theta0, dtype=float)
    rng = make_rng(cfg.seed)
    z = _var1_path(cfg, rng)
    prob = 1.0 / (1.0 + np.exp(-(1.0 + z @ theta0)))
    y = (rng.random(cfg.n) < prob).astype(float)
    return Dataset(np.column_stack([y, z]))


def _gmm_step(data, model, scheme, weight, start, opts):
    def fun(theta):
        try:
            mom = block_moments(data, model, scheme, theta)
        except GelError:
            return np.inf, np.full(theta.size, np.nan), None
        jac = np.einsum("t,tij->ij", block_weights(scheme), model.jacobians(data.values, theta))
        wphi = weight @ mom.phi_bar
        return 0.5 * float(mom.phi_bar @ wphi), jac.T @ wphi, (mom, jac)

    def curvature(extra):
        _, jac = extra
        return jac.T @ weight @ jac

    return quasi_newton(fun, start, curvature, tol=opts.tol_outer, max_iter=opts.max_outer,
                        max_halvings=opts.max_halvings)


def gmm_twostep(data, model, scheme, opts: SolverOptions | None = None) -> EstimationResult:
    """Two-step efficient GMM on the blocked moments.

    Step one minimises ``phi_bar' phi_bar``; step two uses the inverse of the
    blocked second-moment matrix ``Omega_hat`` evaluated at the step-one
    estimate.
    """
    opts = opts or SolverOptions()
    start = np.asarray(opts.theta0, dtype=float) if opts.theta0 is not None else model.start(data.values, scheme)
    first = _gmm_step(data, model, scheme, np.eye(model.r), start, opts)
    omega = block_moments(data, model, scheme, first.x).omega_hat
    r = model.r
    omega = omega + 1e-10 * max(np.trace(omega) / r, np.finfo(float).tiny) * np.eye(r)
    weight = np.linalg.inv(omega)
    weight = 0.5 * (weight + weight.T)
    second = _gmm_step(data, model, scheme, weight, first.x, opts)
    mom, _ = second.extra
    return EstimationResult(
        theta_hat=second.x,
        lambda_hat=-(weight @ mom.phi_bar),
        profile_objective=second.value,
        gradient_norm=float(np.max(np.abs(second.gradient))),
        converged=bool(first.converged and second.converged),
        iterations=first.iterations + second.iterations,
        scheme=scheme,
        link_kind="GMM",
        diagnostics={"first_step_theta": first.x.tolist(), "evaluations": first.evaluations + second.evaluations},
    )


@dataclass(frozen=True)
class McDesign:
    """A Monte Carlo design: one table of median squared errors."""

    model_kind: str = "mean"
    estimators: tuple = ("EL", "ET", "CU", "GMM")
    regimes: tuple = REGIMES
    psis: tuple = (0.1, 0.3, 0.5)
    ns: tuple = (500, 1000, 2000)
    c_dim: float = 10.0
    reps: int = 200
    base_seed: int = 20240101
    burn_in: int = 200

    def __post_init__(self):
        errors = []
        if self.model_kind not in ("mean", "logistic"):
            errors.append(f"model_kind: expected 'mean' or 'logistic', got {self.model_kind!r}")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            errors.append(f"estimators: unknown {bad}; allowed {list(ESTIMATORS)}")
        badr = [r for r in self.regimes if str(r) not in REGIMES]
        if badr or not self.regimes:
            errors.append(f"regimes: unknown {badr}; allowed {list(REGIMES)}")
        if not self.psis or any(not abs(float(x)) < 1 for x in self.psis):
            errors.append(f"psis: every value must satisfy |psi| < 1, got {list(self.psis)}")
        if not self.ns or any(int(n) < 10 for n in self.ns):
            errors.append(f"ns: sample sizes must be >= 10, got {list(self.ns)}")
        if not self.c_dim > 0:
            errors.append(f"c_dim: must be positive, got {self.c_dim}")
        if int(self.reps) < 1:
            errors.append(f"reps: must be >= 1, got {self.reps}")
        if errors:
            raise ConfigurationError("invalid design: " + "; ".join(errors))

    @classmethod
    def from_mapping(cls, raw: dict) -> "McDesign":
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(raw) - known)
        if extra:
            raise ConfigurationError(f"invalid design: unknown field(s) {extra}")
        kw = dict(raw)
        for key in ("estimators", "regimes", "psis", "ns"):
            if key in kw:
                val = kw[key]
                kw[key] = tuple(val) if isinstance(val, (list, tuple)) else (val,)
        if "estimators" in kw:
            kw["estimators"] = tuple(str(e).upper() for e in kw["estimators"])
        if "regimes" in kw:
            kw["regimes"] = tuple(str(r).lower() for r in kw["regimes"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigurationError(f"invalid design: {exc}") from None

    def as_dict(self) -> dict:
        out = asdict(self)
        for key in ("estimators", "regimes", "psis", "ns"):
            out[key] = list(out[key])
        return out


def design_dimension(c: float, n: int) -> int:
    """``p = floor(c n^{2/15})``."""
    return int(math.floor(c * n ** (2.0 / 15.0) * (1.0 + 1e-12)))


def _fit(kind, data, model, scheme, opts, cache):
    if kind == "GMM":
        return gmm_twostep(data, model, scheme, opts).theta_hat, True
    if kind.startswith("P"):
        link = kind[1:]
        init = cache.get(link)
        if init is None:
            init = estimate(data, model, scheme, link, opts)
            cache[link] = init
        res = select_tau(data, model, scheme, link, opts=opts, initial=init)
        return res.theta_hat, True
    res = estimate(data, model, scheme, kind, opts)
    cache[kind] = res
    return res.theta_hat, res.converged


def _one_rep(args):
    design, n, psi, rep = args
    p = design_dimension(design.c_dim, n)
    cfg = Var1Config(psi=psi, p=p, n=n, burn_in=design.burn_in, seed=design.base_seed + rep)
    if design.model_kind == "mean":
        data, model, theta0 = gen_var1(cfg), model_mean(p), np.zeros(p)
    else:
        data, model, theta0 = gen_logistic(cfg), model_logistic(p), logistic_theta0(p)
    opts = SolverOptions()
    out = {}
    for regime in design.regimes:
        scheme = regime_scheme(regime, n)
        cache = {}
        for kind in design.estimators:
            try:
                theta, ok = _fit(kind, data, model, scheme, opts, cache)
            except (GelError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.warning("rep %d (n=%d, psi=%g, regime %s, %s) failed: %s", rep, n, psi, regime, kind, exc)
                theta, ok = None, False
            out[(regime, kind)] = float(np.sum((theta - theta0) ** 2)) if ok else None
    return out


@dataclass
class DesignResult:
    design: McDesign
    cells: list = field(default_factory=list)

    def median(self, estimator, regime, n, psi):
        for c in self.cells:
            if (c["estimator"], c["regime"], c["n"], c["psi"]) == (estimator, regime, n, psi):
                return c["median_sq_error"]
        raise KeyError((estimator, regime, n, psi))

    def errors(self, estimator, regime, n, psi):
        for c in self.cells:
            if (c["estimator"], c["regime"], c["n"], c["psi"]) == (estimator, regime, n, psi):
                return c["errors"]
        raise KeyError((estimator, regime, n, psi))

    def long_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "regime", "n", "psi", "p", "median_sq_error", "reps", "failures"])
        for c in self.cells:
            w.writerow([c["estimator"], c["regime"], c["n"], _fmt(c["psi"]), c["p"],
                        _fmt(c["median_sq_error"]), c["reps"], c["failures"]])
        return buf.getvalue()

    def table_csv(self) -> str:
        """Wide layout: rows regime x estimator, columns n x psi."""
        d = self.design
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [(n, psi) for n in d.ns for psi in d.psis]
        w.writerow(["regime", "estimator"] + [f"n={n};psi={_fmt(psi)}" for n, psi in cols])
        for regime in d.regimes:
            for est in d.estimators:
                w.writerow([regime, est] + [_fmt(self.median(est, regime, n, psi)) for n, psi in cols])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "design": self.design.as_dict(),
            "rng": RNG_ALGORITHM,
            "normal_sampler": NORMAL_METHOD,
            "seed_rule": "replication k uses seed base_seed + k",
            "burn_in": self.design.burn_in,
            "statistic": "median over replications of ||theta_hat - theta_0||_2^2 (failures excluded)",
            "solver_defaults": asdict(SolverOptions()),
            "failures": {f"{c['estimator']}|{c['regime']}|{c['n']}|{_fmt(c['psi'])}": c["failures"]
                         for c in self.cells},
        }


def _fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "nan"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def run_design(design: McDesign, workers: int | None = 1, progress=None) -> DesignResult:
    """Run every replication of ``design`` and reduce to per-cell medians.

    Results do not depend on ``workers``: each replication owns its seed and
    medians are order independent.
    """
    tasks = [(design, int(n), float(psi), rep) for n in design.ns for psi in design.psis
             for rep in range(int(design.reps))]
    workers = workers or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_one_rep, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outputs = []
        for i, task in enumerate(tasks):
            outputs.append(_one_rep(task))
            if progress is not None:
                progress(i + 1, len(tasks))
    result = DesignResult(design)
    for n in design.ns:
        for psi in design.psis:
            rows = [o for (t, o) in zip(tasks, outputs) if t[1] == int(n) and t[2] == float(psi)]
            for regime in design.regimes:
                for est in design.estimators:
                    vals = [o[(regime, est)] for o in rows]
                    ok = np.array([v for v in vals if v is not None])
                    result.cells.append({
                        "estimator": est,
                        "regime": regime,
                        "n": int(n),
                        "psi": float(psi),
                        "p": design_dimension(design.c_dim, int(n)),
                        "median_sq_error": float(np.median(ok)) if ok.size else float("nan"),
                        "reps": len(vals),
                        "failures": len(vals) - int(ok.size),
                        "errors": ok,
                    })
    return result
