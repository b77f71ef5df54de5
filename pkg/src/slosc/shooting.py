"""Shooting for the regularized first-order system.

The second-order pencil is integrated as the first-order system in
Y = (y, p*y' - omega*y), where omega is the antiderivative built by
:func:`slosc.model.build_omega`.  The second component (the
quasi-derivative) is absolutely continuous even across atoms of q and r,
so the trajectory is propagated through atom locations without any state
transfer; only the coefficient polynomial changes there.

Zeros of Y1 are simple and are counted by the phase angle
theta = atan2(Y1, Y2), which satisfies

    theta' = (p y')^2 / (p * (Y1^2 + Y2^2)) >= 0,

so it is nondecreasing along the trajectory and crosses multiples of pi
exactly at the zeros of y.  Monotonicity is asserted on every accepted
step; violations (which would indicate an integration fault) trigger a
retry with a bounded step and are counted in :data:`STATS`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from math import atan2, cos, exp, hypot, pi, sin

import numpy as np
from scipy.optimize import brentq

from . import _rk
from ._piecewise import PiecewisePolynomial
from .errors import NumericalError, PruferViolation, StepFailure
from .model import BoundaryAngles, OmegaFunction, Problem, build_omega


@dataclass(frozen=True)
class ShootingConfig:
    """Integrator tolerances; defaults are the library-wide ones."""

    rtol: float = 1e-10
    atol: float = 1e-12
    renorm_threshold: float = 1e6
    zero_xtol: float = 1e-10        # zero location tolerance in x
    boundary_zero_rtol: float = 1e-8  # |Y1(end)| <= this * ||Y(end)||
    angle_tol: float = 1e-8         # tolerated phase decrease (noise)
    simplicity_floor: float = 1e-8  # min |Y2|/||Y|| at a zero
    max_retries: int = 3


DEFAULT_CONFIG = ShootingConfig()


@dataclass
class IntegrationStats:
    """Aggregate integration health counters (process-wide)."""

    integrations: int = 0
    steps_accepted: int = 0
    steps_rejected: int = 0
    retries: int = 0
    monotonicity_violations: int = 0
    simplicity_violations: int = 0
    min_theta_increment: float = float("inf")
    min_simplicity_ratio: float = float("inf")

    def reset(self) -> None:
        self.__init__()


STATS = IntegrationStats()
_stats_lock = threading.Lock()


@dataclass(frozen=True)
class ShootResult:
    """Trajectory record of one shooting integration.

    Arrays are indexed by accepted-step nodes in ascending x order (for
    backward shooting the integration runs from 1 to 0 and is flipped).
    ``y1``/``y2`` are stored at a per-node scale: the true solution is
    ``y * exp(logscale)``; zeros, signs, and the phase are scale-free.
    ``theta`` is the phase in integration order, i.e. nondecreasing in x
    for forward results and nonincreasing for backward ones.
    """

    lam: float
    direction: str
    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    dy1: np.ndarray
    dy2: np.ndarray
    logscale: np.ndarray
    theta: np.ndarray
    zeros: np.ndarray
    zero_sign_changes: np.ndarray
    residual: float
    omega1: float
    steps_accepted: int
    steps_rejected: int

    @property
    def end_state(self) -> tuple[float, float]:
        """(Y1, Y2) at the far end of the shot (x=1 forward, x=0 backward)."""
        i = -1 if self.direction == "forward" else 0
        return float(self.y1[i]), float(self.y2[i])

    def interpolate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Cubic-Hermite values (Y1, Y2) at points x, in end-node scale."""
        xq = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self.t, xq, side="right") - 1, 0,
                      self.t.size - 2)
        out1 = np.empty_like(xq)
        out2 = np.empty_like(xq)
        for k, (i, xx) in enumerate(zip(idx, xq)):
            out1[k], out2[k] = _hermite_pair(self, int(i), float(xx))
        if np.isscalar(x):
            return float(out1[0]), float(out2[0])
        return out1, out2

    def normalized_pair(self) -> tuple[np.ndarray, np.ndarray]:
        """(Y1, Y2) at one common scale with max |Y1| = 1 and the first
        nonvanishing Y1 value positive (the reproducible eigenfunction
        normalization)."""
        scale = np.exp(self.logscale - self.logscale.max())
        v1 = self.y1 * scale
        v2 = self.y2 * scale
        peak = np.abs(v1).max()
        if peak == 0.0:
            raise NumericalError("trivial trajectory cannot be normalized")
        v1 = v1 / peak
        v2 = v2 / peak
        for v in v1:
            if abs(v) > 1e-12:
                if v < 0.0:
                    v1, v2 = -v1, -v2
                break
        return v1, v2

    def normalized_y1(self) -> np.ndarray:
        """Y1 under the normalization of :meth:`normalized_pair`."""
        return self.normalized_pair()[0]

    def write_csv(self, fh) -> None:
        """Dump the (renormalized) trajectory as t, Y1, Y2, theta rows."""
        fh.write("t,Y1,Y2,theta\n")
        for row in zip(self.t, self.y1, self.y2, self.theta):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def initial_state(bc: BoundaryAngles) -> tuple[float, float]:
    """Left starting values for (Y1, Y2) satisfying the theta0 condition.

    theta0 = 0 forces Y1(0) = 0, start (0, 1); otherwise the condition is
    Y2(0) = v00 * Y1(0) with v00 = -cot(theta0/2), start (1, v00).
    """
    if bc.dirichlet0:
        return 0.0, 1.0
    return 1.0, bc.v00


def terminal_state(bc: BoundaryAngles, omega1: float) -> tuple[float, float]:
    """Right-end values satisfying the theta1 condition (for backward shots).

    theta1 = 0 forces Y1(1) = 0; otherwise Y2(1) + (omega1 + v11) Y1(1) = 0.
    """
    if bc.dirichlet1:
        return 0.0, -1.0
    return 1.0, -(omega1 + bc.v11)


def boundary_residual(result: ShootResult, omega1: float,
                      bc: BoundaryAngles) -> float:
    """Mismatch of the far-end boundary condition; zero at eigenvalues.

    Forward shots are tested against the theta1 condition,
    ``Y2(1) + (omega1 + v11) * Y1(1)`` (or ``Y1(1)`` when theta1 = 0);
    backward shots against the theta0 condition at x = 0.
    """
    e1, e2 = result.end_state
    if result.direction == "forward":
        if bc.dirichlet1:
            return e1
        return e2 + (omega1 + bc.v11) * e1
    if bc.dirichlet0:
        return e1
    return e2 - bc.v00 * e1


def integrate(problem: Problem, lam: float,
              config: ShootingConfig | None = None,
              direction: str = "forward") -> ShootResult:
    """Shoot across [0, 1] at spectral parameter lam.

    Integration nodes include every coefficient breakpoint and atom
    location; the local error per accepted step is held below the
    configured tolerances.  Raises StepFailure if the step controller
    stalls and PruferViolation if the phase ever decreases beyond noise
    after all retries.
    """
    cfg = config or DEFAULT_CONFIG
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    omega = build_omega(problem.q, problem.r, lam)

    if direction == "forward":
        wpoly = omega.pieces
        ppoly = problem.p.as_poly()
        y0 = initial_state(problem.bc)
    else:
        refl = omega.pieces.reflect()
        wpoly = PiecewisePolynomial(refl.breakpoints, -refl.coeffs)
        ppoly = problem.p.as_poly().reflect()
        y0 = terminal_state(problem.bc, omega.omega1)
        y0 = (y0[0], -y0[1])  # state transform W = (Y1, -Y2)

    grid = np.union1d(wpoly.breakpoints, ppoly.breakpoints)
    wc = np.zeros((grid.size - 1, 4))
    w_on = wpoly.on_grid(grid)
    wc[:, : w_on.coeffs.shape[1]] = w_on.coeffs
    pvals = ppoly.on_grid(grid).coeffs[:, 0].copy()

    max_gap = float(np.diff(grid).max())
    attempt = 0
    while True:
        max_step = 1e18 if attempt == 0 else max_gap / 4.0 ** attempt
        out = _rk.integrate_system(grid, pvals, wc, y0[0], y0[1], cfg.rtol,
                                   cfg.atol, cfg.renorm_threshold, max_step)
        t, y1, y2, f1, f2, ls, n, n_acc, n_rej, status = out
        if status == _rk.STATUS_STEP_FAILURE:
            raise StepFailure(
                f"integrator stalled at t={t[-1]:.6g} (lam={lam:.6g})")
        if status == _rk.STATUS_DEGENERATE:
            raise NumericalError("state vanished identically (Y1=Y2=0)")

        alpha = np.arctan2(y1, y2)
        dalpha = np.mod(np.diff(alpha) + pi, 2.0 * pi) - pi
        min_inc = float(dalpha.min()) if dalpha.size else 0.0
        if min_inc >= -cfg.angle_tol:
            break
        attempt += 1
        with _stats_lock:
            STATS.retries += 1
        if attempt > cfg.max_retries:
            with _stats_lock:
                STATS.monotonicity_violations += 1
            raise PruferViolation(
                f"phase decreased by {-min_inc:.3e} at lam={lam:.6g} "
                f"after {cfg.max_retries} retries")

    theta = alpha[0] + np.concatenate([[0.0], np.cumsum(dalpha)])

    zeros_t, flags, min_simpl = _locate_zeros(t, y1, y2, f1, f2, ls, cfg)

    with _stats_lock:
        STATS.integrations += 1
        STATS.steps_accepted += int(n_acc)
        STATS.steps_rejected += int(n_rej)
        STATS.min_theta_increment = min(STATS.min_theta_increment, min_inc)
        if min_simpl < STATS.min_simplicity_ratio:
            STATS.min_simplicity_ratio = min_simpl
        if min_simpl < cfg.simplicity_floor:
            STATS.simplicity_violations += 1
    if min_simpl < cfg.simplicity_floor:
        raise NumericalError(
            f"zero of Y1 with |Y2|/||Y|| = {min_simpl:.3e} at lam={lam:.6g}; "
            "simple-zero invariant violated")

    if direction == "backward":
        # map tau -> x = 1 - tau, W -> (Y1, -Y2); d/dx = -d/dtau
        t = (1.0 - t)[::-1].copy()
        y1 = y1[::-1].copy()
        y2 = (-y2[::-1]).copy()
        f1 = (-f1[::-1]).copy()
        f2 = f2[::-1].copy()
        ls = ls[::-1].copy()
        theta = theta[::-1].copy()
        zeros_t = np.sort(1.0 - zeros_t)
        flags = flags[::-1].copy() if flags.size else flags

    result = ShootResult(
        lam=float(lam), direction=direction, t=t, y1=y1, y2=y2, dy1=f1,
        dy2=f2, logscale=ls, theta=theta, zeros=zeros_t,
        zero_sign_changes=flags, residual=0.0, omega1=omega.omega1,
        steps_accepted=int(n_acc), steps_rejected=int(n_rej))
    res = boundary_residual(result, omega.omega1, problem.bc)
    return replace(result, residual=float(res))


def prufer_count(result: ShootResult) -> int:
    """Number of interior zeros of Y1 on (0, 1).

    The refined sign-change zeros are authoritative; the lifted phase is
    used as a consistency check (each interior zero is one crossing of a
    multiple of pi, up to endpoint grazing).
    """
    n = int(result.zeros.size)
    th0 = result.theta[0] if result.direction == "forward" else \
        result.theta[-1]
    th1 = result.theta[-1] if result.direction == "forward" else \
        result.theta[0]
    est = int(np.floor(th1 / pi + 1e-9)) - int(np.floor(th0 / pi + 1e-9))
    if abs(est - n) > 1:
        raise NumericalError(
            f"phase-crossing count {est} disagrees with located zeros {n}")
    return n


def conjugate_points(problem: Problem, lam: float,
                     config: ShootingConfig | None = None) -> np.ndarray:
    """Zeros on (0, 1] of the solution launched from the theta0 condition.

    These are exactly the points x where the problem restricted to [0, x]
    (theta0 condition kept, hard zero at x) is degenerate; each is simple.
    The right endpoint is included when Y1(1) vanishes to within
    ``boundary_zero_rtol`` relative to the state magnitude there.
    """
    cfg = config or DEFAULT_CONFIG
    sol = integrate(problem, lam, cfg, direction="forward")
    pts = list(sol.zeros)
    e1, e2 = sol.end_state
    if abs(e1) <= cfg.boundary_zero_rtol * hypot(e1, e2):
        pts.append(1.0)
    return np.asarray(pts, dtype=float)


def right_conjugate_points(problem: Problem, lam: float,
                           config: ShootingConfig | None = None) -> np.ndarray:
    """Mirror of :func:`conjugate_points`: zeros on [0, 1) of the backward
    solution launched from the theta1 condition (with its omega1 term)."""
    cfg = config or DEFAULT_CONFIG
    sol = integrate(problem, lam, cfg, direction="backward")
    pts = list(sol.zeros)
    e1, e2 = float(sol.y1[0]), float(sol.y2[0])
    if abs(e1) <= cfg.boundary_zero_rtol * hypot(e1, e2):
        pts.insert(0, 0.0)
    return np.asarray(pts, dtype=float)


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

def _hermite_coeffs(result: ShootResult, i: int):
    """Step [t_i, t_i+1] endpoint data, aligned to the right node's scale."""
    t0, t1 = result.t[i], result.t[i + 1]
    s = exp(result.logscale[i] - result.logscale[i + 1])
    return (t0, t1, result.y1[i] * s, result.dy1[i] * s, result.y1[i + 1],
            result.dy1[i + 1], result.y2[i] * s, result.dy2[i] * s,
            result.y2[i + 1], result.dy2[i + 1])


def _hermite_pair(result: ShootResult, i: int, x: float):
    t0, t1, a0, da0, a1, da1, b0, db0, b1, db1 = _hermite_coeffs(result, i)
    h = t1 - t0
    if h <= 0.0:
        return a1, b1
    s = (x - t0) / h
    h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
    h10 = s * (1.0 - s) ** 2
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    v1 = h00 * a0 + h * h10 * da0 + h01 * a1 + h * h11 * da1
    v2 = h00 * b0 + h * h10 * db0 + h01 * b1 + h * h11 * db1
    return v1, v2


def _locate_zeros(t, y1, y2, f1, f2, ls, cfg: ShootingConfig):
    """Refine interior zeros of Y1 from sign changes between nodes."""
    n = t.size
    signs = np.sign(y1)
    zeros = []
    flags = []
    min_simpl = float("inf")
    edge = max(10.0 * cfg.zero_xtol, 1e-9)
    lo_edge = t[0] + edge
    hi_edge = t[-1] - edge

    def hermite_y(i, x):
        h = t[i + 1] - t[i]
        s = (x - t[i]) / h
        sc = exp(ls[i] - ls[i + 1])
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = s * s * (s - 1.0)
        v1 = (h00 * y1[i] * sc + h * h10 * f1[i] * sc + h01 * y1[i + 1]
              + h * h11 * f1[i + 1])
        v2 = (h00 * y2[i] * sc + h * h10 * f2[i] * sc + h01 * y2[i + 1]
              + h * h11 * f2[i + 1])
        return v1, v2

    i = 0
    while i < n - 1:
        a, b = y1[i], y1[i + 1]
        if signs[i] == 0.0 and 0 < i:
            z = t[i]
            if lo_edge < z < hi_edge:
                before = signs[i - 1]
                after = signs[i + 1]
                zeros.append(z)
                flags.append(bool(before * after < 0.0))
                sp = abs(y2[i]) / max(hypot(y1[i], y2[i]), 1e-300)
                min_simpl = min(min_simpl, sp)
            i += 1
            continue
        if signs[i] * signs[i + 1] < 0.0:
            if t[i + 1] - t[i] <= cfg.zero_xtol:
                z = 0.5 * (t[i] + t[i + 1])
            else:
                z = brentq(lambda x: hermite_y(i, x)[0], t[i], t[i + 1],
                           xtol=cfg.zero_xtol, rtol=8.9e-16)
            if lo_edge < z < hi_edge:
                v1z, v2z = hermite_y(i, z)
                local = max(hypot(y1[i], y2[i]) * exp(ls[i] - ls[i + 1]),
                            hypot(y1[i + 1], y2[i + 1]), 1e-300)
                sp = abs(v2z) / local
                min_simpl = min(min_simpl, sp)
                zeros.append(z)
                flags.append(True)
        i += 1
    return (np.asarray(zeros, dtype=float), np.asarray(flags, dtype=bool),
            min_simpl)
