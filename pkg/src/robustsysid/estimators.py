"""Least squares and the two sum-of-norms convex estimators.

Given one trajectory of x_{i+1} = A x_i + B u_i + d_i, the group-l2 estimator
minimizes sum_t ||x_{t+1} - A x_t - B u_t||_2 and the entry-l1 estimator the
same sum with ||.||_1. Both are convex and non-smooth; large residuals enter
linearly, so sparse-in-time attacks are absorbed by the residual instead of
biasing (A, B). The scalar autonomous problem is solved exactly as a weighted
median; everything else runs diminishing-step subgradient descent with
best-iterate tracking, plus an optional certified refit that jumps from a
near-solution to the exact minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lti import Trajectory

KINDS = ("least-squares", "group-l2", "entry-l1")

_ALIASES = {
    "ls": "least-squares",
    "l2": "group-l2",
    "l1": "entry-l1",
}


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    return kind


def _regressors(traj: Trajectory):
    # rows z_t = (x_t, u_t); targets y_t = x_{t+1}
    X0 = traj.states[:-1]
    Y = traj.states[1:]
    Z = np.hstack([X0, traj.inputs]) if traj.m else X0
    return Z, Y


def _split(theta: np.ndarray, n: int, m: int):
    A_hat = theta[:n].T.copy()
    B_hat = theta[n:].T.copy() if m else None
    return A_hat, B_hat


def least_squares(traj: Trajectory):
    """Joint (A, B) least-squares fit; minimum-norm on rank-deficient data.

    Returns (A_hat, B_hat) with B_hat None for autonomous trajectories.
    """
    Z, Y = _regressors(traj)
    theta, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    return _split(theta, traj.n, traj.m)


def residual_matrix(traj: Trajectory, A, B=None) -> np.ndarray:
    """Implied disturbances d_hat_t = x_{t+1} - A x_t - B u_t, shape (T, n)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = traj.n
    if A.shape != (n, n):
        raise ValueError(f"A must be {n}x{n}, got {A.shape}")
    R = traj.states[1:] - traj.states[:-1] @ A.T
    if traj.m:
        if B is None:
            raise ValueError("trajectory has inputs but no B was given")
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if B.shape != (n, traj.m):
            raise ValueError(f"B must be {n}x{traj.m}, got {B.shape}")
        R = R - traj.inputs @ B.T
    elif B is not None and np.size(B):
        raise ValueError("autonomous trajectory but B was given")
    return R


def _norm_sum(R: np.ndarray, kind: str) -> float:
    if kind == "group-l2":
        return float(np.sqrt(np.einsum("ij,ij->i", R, R)).sum())
    return float(np.abs(R).sum())


def objective(traj: Trajectory, A, B=None, kind: str = "group-l2") -> float:
    """Sum-of-norms objective at (A, B); at the truth it equals sum ||d_i||."""
    kind = canonical_kind(kind)
    if kind == "least-squares":
        raise ValueError("least-squares has no sum-of-norms objective")
    return _norm_sum(residual_matrix(traj, A, B), kind)


def estimation_error(A_hat, A_true, B_hat=None, B_true=None) -> float:
    """Frobenius error ||A_hat - A_true||_F, jointly over (A, B) when given."""
    A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
    A_true = np.atleast_2d(np.asarray(A_true, dtype=float))
    if A_hat.shape != A_true.shape:
        raise ValueError(f"shape mismatch: {A_hat.shape} vs {A_true.shape}")
    err2 = float(np.sum((A_hat - A_true) ** 2))
    if (B_hat is None) != (B_true is None):
        raise ValueError("give both B_hat and B_true or neither")
    if B_hat is not None:
        B_hat = np.atleast_2d(np.asarray(B_hat, dtype=float))
        B_true = np.atleast_2d(np.asarray(B_true, dtype=float))
        if B_hat.shape != B_true.shape:
            raise ValueError(f"shape mismatch: {B_hat.shape} vs {B_true.shape}")
        err2 += float(np.sum((B_hat - B_true) ** 2))
    return math.sqrt(err2)


# ---------------------------------------------------------------------------
# exact scalar solver


@dataclass(frozen=True)
class ScalarExactResult:
    a_hat: float
    objective: float
    degenerate: bool = False  # every a optimal (all regressor states zero)


def solve_scalar_exact(traj: Trajectory) -> ScalarExactResult:
    """Exact minimizer of sum_i |x_{i+1} - a x_i| (scalar autonomous case).

    The objective is piecewise linear in a:

        sum_{x_i != 0} |x_i| * |x_{i+1}/x_i - a|  +  sum_{x_i = 0} |x_{i+1}|,

    so the minimizer is a weighted median of the breakpoints x_{i+1}/x_i with
    weights |x_i|. Ties (a flat optimal interval) break toward the smallest
    breakpoint. All x_i = 0 makes every a optimal: returns 0 with the
    degenerate flag set.
    """
    if traj.n != 1 or traj.m != 0:
        raise ValueError("solve_scalar_exact needs a scalar autonomous trajectory")
    x = traj.states[:, 0]
    xi, xnext = x[:-1], x[1:]
    nz = xi != 0.0
    if not np.any(nz):
        return ScalarExactResult(0.0, float(np.abs(xnext).sum()), degenerate=True)
    b = xnext[nz] / xi[nz]
    w = np.abs(xi[nz])
    order = np.argsort(b, kind="stable")
    b, w = b[order], w[order]
    csum = np.cumsum(w)
    # first index where the cumulative weight reaches half the total: left
    # endpoint of the optimal interval, i.e. the smallest optimal breakpoint
    idx = int(np.searchsorted(csum, csum[-1] / 2.0, side="left"))
    a_hat = float(b[idx])
    obj = float(np.abs(xnext - a_hat * xi).sum())
    return ScalarExactResult(a_hat, obj)


# ---------------------------------------------------------------------------
# subgradient solver


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for solve_subgradient.

    The step is eta0 / sqrt(k + 1); eta0 = None calibrates it from the first
    subgradient so the initial move is ~5% of the coefficient scale,
    regardless of the state magnitudes. ``step_offset`` continues the
    schedule of an earlier run (warm-started refits keep shrinking instead of
    restarting at eta0). ``certificate_interval`` > 0 checks KKT optimality of
    the best iterate every that many iterations and stops early on success.
    """

    max_iters: int = 20_000
    eta0: float | None = None
    tol: float | None = None
    warm_start: str = "least-squares"  # or "zero"
    track: bool = True
    step_offset: int = 0
    certificate_interval: int = 0

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.tol is not None and self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.warm_start not in ("zero", "least-squares"):
            raise ValueError("warm_start must be 'zero' or 'least-squares'")
        if self.step_offset < 0 or self.certificate_interval < 0:
            raise ValueError("step_offset and certificate_interval must be >= 0")


@dataclass(frozen=True)
class EstimationResult:
    """Solver output: estimate, objective, implied disturbances, trace."""

    A_hat: np.ndarray
    B_hat: np.ndarray | None
    objective: float
    residuals: np.ndarray
    iterations_used: int
    trace: tuple = field(repr=False)  # ((iteration, best objective), ...)
    kind: str = "group-l2"
    stop_reason: str = "max-iters"

    def theta(self) -> np.ndarray:
        if self.B_hat is None:
            return self.A_hat.T.copy()
        return np.vstack([self.A_hat.T, self.B_hat.T])


def _log_points(max_iters: int):
    pts = {0, max_iters}
    k = 1
    while k < max_iters:
        pts.add(k)
        k = max(k + 1, int(k * 1.12))
    return pts


def solve_subgradient(traj: Trajectory, kind: str = "group-l2",
                      config: SolverConfig | None = None,
                      theta0=None) -> EstimationResult:
    """Diminishing-step subgradient descent on the sum-of-norms objective.

    Residual rows r_t accumulate subgradient directions g_t x_t^T (and
    g_t u_t^T) with g_t = r_t/||r_t||_2 for group-l2, sign(r_t) for entry-l1,
    and g_t = 0 at r_t = 0, so an exact solution is a fixed point. Returns the
    best iterate seen; the trace logs (iteration, best objective) on a sparse
    geometric grid. Stops on best objective <= tol (tol = None picks
    1e-9 * (1 + sum_t ||x_{t+1}||_2), so exact fits stop immediately at any
    data scale), a confirmed optimality
    certificate (config.certificate_interval > 0), or max_iters.

    ``theta0`` (stacked (n+m, n) coefficients, see EstimationResult.theta)
    overrides config.warm_start — used to chain refits across growing
    prefixes of one trajectory.
    """
    kind = canonical_kind(kind)
    if kind == "least-squares":
        raise ValueError("use least_squares() for the quadratic objective")
    cfg = config or SolverConfig()

    Z, Y = _regressors(traj)
    T, d = Z.shape
    n = traj.n
    if theta0 is not None:
        theta = np.array(theta0, dtype=float)
        if theta.shape != (d, n):
            raise ValueError(f"theta0 must have shape {(d, n)}, got {theta.shape}")
    elif cfg.warm_start == "least-squares":
        theta, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    else:
        theta = np.zeros((d, n))

    R = np.empty_like(Y)
    G = np.empty_like(Y)
    norms = np.empty(T)
    l2 = kind == "group-l2"

    def eval_objective(th) -> float:
        np.matmul(Z, th, out=R)
        np.subtract(Y, R, out=R)
        if l2:
            np.einsum("ij,ij->i", R, R, out=norms)
            np.sqrt(norms, out=norms)
            return float(norms.sum())
        return float(np.abs(R).sum())

    obj = eval_objective(theta)
    if cfg.eta0 is not None:
        eta0 = cfg.eta0
    else:
        # Calibrate so the first step moves theta by ~5% of its scale; the
        # 1/sqrt(k) decay then sweeps the step length downward from there.
        # A fixed data-independent step misbehaves badly when ||x_t|| is
        # large: the subgradient norm grows with the state scale while the
        # distance to the optimum does not.
        if l2:
            G[:] = R / np.maximum(norms, 1e-300)[:, None]
        else:
            np.sign(R, out=G)
        g0 = float(np.linalg.norm(Z.T @ G))
        eta0 = 0.05 * (1.0 + float(np.linalg.norm(theta))) / max(g0, 1e-300)
    best_obj = obj
    best_theta = theta.copy()
    trace = [(0, best_obj)]
    log_at = _log_points(cfg.max_iters)
    stop = "max-iters"
    iters = 0

    stop_tol = cfg.tol
    if stop_tol is None:
        stop_tol = 1e-9 * (1.0 + float(np.linalg.norm(Y, axis=1).sum()))
    if best_obj <= stop_tol:
        stop = "tolerance"
    else:
        for k in range(cfg.max_iters):
            # R currently holds the residuals at theta (left by eval_objective)
            if l2:
                # 0/tiny = 0 keeps the zero-residual subgradient at 0
                G[:] = R / np.maximum(norms, 1e-300)[:, None]
            else:
                np.sign(R, out=G)
            eta = eta0 / math.sqrt(k + cfg.step_offset + 1)
            theta += eta * (Z.T @ G)

            obj = eval_objective(theta)
            if not math.isfinite(obj):
                raise RuntimeError(
                    f"objective diverged at iteration {k + 1}; reduce eta0")
            iters = k + 1
            if cfg.track:
                if obj < best_obj:
                    best_obj = obj
                    best_theta[:] = theta
            else:
                best_obj = obj
                best_theta[:] = theta
            if iters in log_at:
                trace.append((iters, best_obj))
            if best_obj <= stop_tol:
                stop = "tolerance"
                break
            if cfg.certificate_interval and iters % cfg.certificate_interval == 0:
                from .certificates import kkt_certificate
                A_b, B_b = _split(best_theta, n, traj.m)
                if kkt_certificate(traj, A_b, B_b, kind).verdict == "optimal":
                    stop = "certificate"
                    break

    if trace[-1][0] != iters:
        trace.append((iters, best_obj))
    A_hat, B_hat = _split(best_theta, n, traj.m)
    return EstimationResult(
        A_hat=A_hat, B_hat=B_hat, objective=best_obj,
        residuals=residual_matrix(traj, A_hat, B_hat),
        iterations_used=iters, trace=tuple(trace), kind=kind, stop_reason=stop)


def polish_estimate(traj: Trajectory, A0, B0=None, kind: str = "group-l2",
                    max_splits: int = 4, rounds: int = 3,
                    certify: bool = True, min_ratio: float = 2.0):
    """Jump from a near-solution to the exact minimizer by support trimming.

    Sorts the residual row norms at the current iterate, splits them at the
    largest multiplicative gaps (clean rows below, attacked rows above),
    refits (A, B) by least squares on the clean rows, and keeps the refit
    with the lowest sum-of-norms objective; repeats up to ``rounds`` times
    so a partially-right split can sharpen the next one. Acceptance is by
    strict objective decrease, which is sound for a convex objective no
    matter how the candidate was produced. Returns an EstimationResult or
    None when nothing improved; with ``certify`` the stop_reason upgrades to
    "polish-certified" when the KKT check confirms a global minimizer.

    Near exact recovery the clean rows have residual ~ ||A0 - A|| * ||x_t||
    while attacked rows keep ||d_t||, so the gap is wide and the refit on
    the true clean rows lands on the truth exactly.
    """
    kind = canonical_kind(kind)
    if kind == "least-squares":
        raise ValueError("polish applies to the sum-of-norms objectives")
    Z, Y = _regressors(traj)
    T, d = Z.shape
    if T < 2:
        return None

    def row_norms(R):
        if kind == "group-l2":
            return np.linalg.norm(R, axis=1)
        return np.abs(R).sum(axis=1)

    R_cur = residual_matrix(traj, A0, B0)
    base_obj = _norm_sum(R_cur, kind)
    A_cur, B_cur, obj_cur = None, None, base_obj

    for _ in range(rounds):
        s_all = row_norms(R_cur)
        order = np.argsort(s_all, kind="stable")
        s = s_all[order]
        ratios = s[1:] / np.maximum(s[:-1], 1e-300)
        step = None
        for j in np.argsort(ratios)[::-1][:max_splits]:
            if ratios[j] < min_ratio:  # no plausible separation left
                break
            if j + 1 < d:  # refit would be underdetermined
                continue
            clean = order[: j + 1]
            theta, *_ = np.linalg.lstsq(Z[clean], Y[clean], rcond=None)
            A_hat, B_hat = _split(theta, traj.n, traj.m)
            Rj = residual_matrix(traj, A_hat, B_hat)
            obj = _norm_sum(Rj, kind)
            if obj < obj_cur and (step is None or obj < step[0]):
                step = (obj, A_hat, B_hat, Rj)
        if step is None:
            break
        obj_cur, A_cur, B_cur, R_cur = step

    if A_cur is None or not obj_cur < base_obj:
        return None
    stop = "polish"
    if certify:
        from .certificates import kkt_certificate
        if kkt_certificate(traj, A_cur, B_cur, kind).verdict == "optimal":
            stop = "polish-certified"
    return EstimationResult(
        A_hat=A_cur, B_hat=B_cur, objective=obj_cur, residuals=R_cur,
        iterations_used=0, trace=((0, obj_cur),), kind=kind, stop_reason=stop)
