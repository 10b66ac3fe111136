"""Profile objective ``theta -> max_lambda S_n(theta, lambda)`` and its minimiser."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .blocking import BlockMoments, BlockScheme, block_moments, block_weights, scatter_blocks
from .errors import EstimationError, GelError
from .inner import MultiplierState, SolverOptions, solve_lambda
from .links import make_link

__all__ = ["EstimationResult", "Profile", "profile_objective", "estimate", "quasi_newton", "gauss_newton_matrix"]

SURROGATE_SCALE = 1e3


@dataclass(frozen=True)
class Profile:
    """Profile objective value and envelope gradient at one ``theta``.

    ``jacobian`` is the Jacobian of ``phi_bar`` (``r x p``); ``surrogate``
    marks a point where the dual escaped to infinity and ``value`` is the
    feasibility penalty instead of the dual maximum.
    """

    theta: np.ndarray
    value: float
    gradient: np.ndarray
    state: MultiplierState
    moments: BlockMoments
    jacobian: np.ndarray
    surrogate: bool


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: np.ndarray
    lambda_hat: np.ndarray
    profile_objective: float
    gradient_norm: float
    converged: bool
    iterations: int
    scheme: BlockScheme
    link_kind: str
    diagnostics: dict = field(default_factory=dict)


def _row_jacobians(data, model, theta):
    return model.jacobians(data.values, theta)


def profile_objective(data, model, scheme, link, theta, opts: SolverOptions | None = None,
                      lambda0=None) -> Profile:
    """Evaluate the profile objective and its envelope gradient.

    The gradient is ``Q^{-1} sum_q rho_v(lambda' phi_q) (d phi_q / d theta)' lambda``
    at the dual maximiser ``lambda``.
    """
    opts = opts or SolverOptions()
    link = make_link(link)
    theta = np.asarray(theta, dtype=float).copy()
    mom = block_moments(data, model, scheme, theta)
    state = solve_lambda(mom, link, opts, lambda0=lambda0)
    jac = _row_jacobians(data, model, theta)
    gbar = np.einsum("t,tij->ij", block_weights(scheme), jac)
    if state.boundary_hit:
        pen = SURROGATE_SCALE * abs(float(link.rho_vv(np.zeros(1))[0]))
        value = link.rho0 + pen * (1.0 + float(mom.phi_bar @ mom.phi_bar))
        grad = 2.0 * pen * gbar.T @ mom.phi_bar
        return Profile(theta, value, grad, state, mom, gbar, True)
    lam = state.lambda_
    a = link.rho_v(mom.phi @ lam) / scheme.Q
    c = scatter_blocks(scheme, a)
    grad = np.einsum("t,tij,i->j", c, jac, lam)
    return Profile(theta, state.objective, grad, state, mom, gbar, False)


def gauss_newton_matrix(jacobian, omega, ridge: float = 1e-10) -> np.ndarray:
    """``G' Omega^{-1} G``: curvature of the profile objective near its minimum."""
    r = omega.shape[0]
    om = omega + ridge * max(np.trace(omega) / r, np.finfo(float).tiny) * np.eye(r)
    try:
        sol = np.linalg.solve(om, jacobian)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(om, jacobian, rcond=None)[0]
    B = jacobian.T @ sol
    return 0.5 * (B + B.T)


def _safe_inverse(B):
    p = B.shape[0]
    try:
        np.linalg.cholesky(B)
        return np.linalg.inv(B)
    except np.linalg.LinAlgError:
        scale = max(np.trace(B) / p, 1.0) if np.all(np.isfinite(B)) else 1.0
        return np.eye(p) / scale


@dataclass
class _QNOutcome:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    extra: object
    converged: bool
    iterations: int
    evaluations: int
    history: list


def quasi_newton(fun: Callable, x0, curvature: Callable | None = None, tol: float = 1e-6,
                 max_iter: int = 500, max_halvings: int = 60, project: Callable | None = None) -> _QNOutcome:
    """BFGS with Armijo backtracking.

    ``fun(x)`` returns ``(value, gradient, extra)``. ``curvature(extra)``
    optionally supplies a positive definite Hessian approximation used to
    seed (and reseed after curvature breakdown) the inverse-Hessian estimate;
    without it the reseed is a scaled steepest-descent step.
    """
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    f, g, extra = fun(x)
    evals = 1
    history = [f]

    def seed(extra_):
        if curvature is not None:
            return _safe_inverse(curvature(extra_))
        return np.eye(x.size)

    H = seed(extra)
    converged = False
    it = 0
    for it in range(max_iter + 1):
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        if it == max_iter:
            break
        d = -H @ g
        if not np.all(np.isfinite(d)) or g @ d >= 0:
            H = np.eye(x.size)
            d = -g
        accepted = False
        for restart in range(2):
            step = 1.0
            slope = float(g @ d)
            for _ in range(max_halvings):
                x_new = x + step * d
                if project is not None:
                    x_new = project(x_new)
                f_new, g_new, extra_new = fun(x_new)
                evals += 1
                if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                    accepted = True
                    break
                step *= 0.5
            if accepted or restart:
                break
            # curvature model failed: steepest descent from here
            H = np.eye(x.size) / max(1.0, float(np.max(np.abs(g))))
            d = -H @ g
        if not accepted:
            break
        s = x_new - x
        y = g_new - g
        x, f, g, extra = x_new, f_new, g_new, extra_new
        history.append(f)
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y) and sy > 0:
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
            H = 0.5 * (H + H.T)
        else:
            H = seed(extra)
    return _QNOutcome(x, f, g, extra, converged, it, evals, history)


def _box_projector(bounds):
    if bounds is None:
        return None
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds], dtype=float)
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds], dtype=float)
    return lambda x: np.clip(x, lo, hi)


def _single_start(data, model, scheme, link, opts, theta_init):
    counters = {"inner_failures": 0, "boundary_hits": 0, "evaluations": 0}
    warm = {"lambda": None}

    def fun(theta):
        counters["evaluations"] += 1
        try:
            prof = profile_objective(data, model, scheme, link, theta, opts, lambda0=warm["lambda"])
        except GelError:
            counters["inner_failures"] += 1
            return np.inf, np.full(theta.size, np.nan), None
        if prof.surrogate:
            counters["boundary_hits"] += 1
        else:
            warm["lambda"] = prof.state.lambda_
        return prof.value, prof.gradient, prof

    def curvature(prof):
        if prof is None:
            return np.eye(model.p)
        return gauss_newton_matrix(prof.jacobian, prof.moments.omega_hat)

    out = quasi_newton(fun, theta_init, curvature, tol=opts.tol_outer, max_iter=opts.max_outer,
                       max_halvings=opts.max_halvings, project=_box_projector(model.bounds))
    return out, counters


def estimate(data, model, scheme, link, opts: SolverOptions | None = None) -> EstimationResult:
    """GEL estimator: minimise the profile objective over ``theta``.

    Starts from ``opts.theta0`` when given, otherwise from the model's pilot
    (blocked sample mean for the mean model, least squares for VAR, zero
    otherwise). With ``opts.n_starts > 1`` extra starts are drawn around the
    first one with seeded Gaussian jitter and the lowest converged objective
    wins.
    """
    opts = opts or SolverOptions()
    link = make_link(link)
    if opts.theta0 is not None:
        start = np.asarray(opts.theta0, dtype=float)
    else:
        start = model.start(data.values, scheme)
    if start.shape != (model.p,):
        raise GelError(f"initial theta has shape {start.shape}, expected ({model.p},)")
    starts = [start]
    if opts.n_starts > 1:
        rng = np.random.Generator(np.random.Philox(opts.seed))
        for _ in range(opts.n_starts - 1):
            starts.append(start + opts.jitter * rng.standard_normal(model.p))

    best = None
    for theta_init in starts:
        out, counters = _single_start(data, model, scheme, link, opts, theta_init)
        if out.extra is None or out.extra.surrogate:
            continue
        key = (not out.converged, out.value)
        if best is None or key < best[0]:
            best = (key, out, counters)
    if best is None:
        raise EstimationError("inner solver failed at every trial point")
    _, out, counters = best
    prof: Profile = out.extra
    diagnostics = dict(counters)
    diagnostics.update(
        iterations=out.iterations,
        inner_iterations=prof.state.iterations,
        score_norm=prof.state.gradient_norm,
        phi_bar_norm=float(np.linalg.norm(prof.moments.phi_bar)),
        # tail observations past the last block make phi_bar differ from the plain average of g
        tail_discrepancy=float(np.linalg.norm(prof.moments.phi_bar - model.moments(data.values, out.x).mean(axis=0))),
        unused_tail=int(scheme.n - scheme.last_index),
        starts=len(starts),
    )
    return EstimationResult(
        theta_hat=out.x,
        lambda_hat=prof.state.lambda_,
        profile_objective=out.value,
        gradient_norm=float(np.max(np.abs(out.gradient))),
        converged=bool(out.converged and prof.state.converged),
        iterations=out.iterations,
        scheme=scheme,
        link_kind=link.kind.value,
        diagnostics=diagnostics,
    )
