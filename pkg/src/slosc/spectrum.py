"""Spectrum search and oscillation verification.

Eigenvalues are indexed outward from a positivity point xi: lambda_1 <
lambda_2 < ... to the right of xi and lambda_-1 > lambda_-2 > ... to the
left.  The negative inertia of the discretized pencil A(lam) counts how
many eigenvalues lie between xi and lam, which makes it a monotone integer
scan function on each side; shooting supplies the high-accuracy root of
the boundary residual inside each unit count jump.  Every eigenvalue is
therefore located by two independent routes (finite elements and
shooting), and the report records their agreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._parallel import parallel_map
from .errors import NoPositivityFound, NoSignChange, NumericalError
from .forms import (
    FormSet,
    Inertia,
    Mesh,
    assemble,
    build_mesh,
    inertia,
    pencil_matrix,
    pencil_negative_count,
)
from .model import Problem
from .shooting import (
    ShootingConfig,
    ShootResult,
    integrate,
    prufer_count,
)


@dataclass(frozen=True)
class SpectrumConfig:
    """Search parameters for positivity scans and eigenvalue hunting."""

    mesh_n: int = 2000
    refine_rtol: float = 1e-10
    scan_step: float | None = None      # default max(1, |xi|/10)
    scan_horizon: float = 1e7           # stop looking this far from xi
    positivity_cap: float = 1e9         # give up the xi scan beyond this
    inertia_tol: float = 1e-9
    agreement_safety: float = 8.0       # multiples of the h^2 error model


DEFAULT_SPECTRUM_CONFIG = SpectrumConfig()


@dataclass(frozen=True)
class PositivityCertificate:
    """Evidence that the pencil form is positive definite at xi."""

    xi: float
    fem_inertia: Inertia
    fem_ok: bool
    zero_count: int
    boundary_zero: bool
    residual: float
    shoot_ok: bool

    @property
    def passed(self) -> bool:
        return self.fem_ok and self.shoot_ok

    def __bool__(self) -> bool:
        return self.passed


def check_positivity(problem: Problem, xi: float,
                     forms: FormSet | None = None,
                     mesh: Mesh | None = None,
                     config: SpectrumConfig | None = None,
                     shoot_config: ShootingConfig | None = None
                     ) -> PositivityCertificate:
    """Certify positive definiteness of the pencil form at xi by two routes.

    (a) the discretized form has no negative and no near-null directions;
    (b) the shot at xi has no zeros on (0, 1] and its boundary residual
        has the sign it keeps throughout the whole positivity gap (the
        same sign as in the deep lambda -> -inf limit for nonnegative
        weights), which is positive.
    """
    cfg = config or DEFAULT_SPECTRUM_CONFIG
    scfg = shoot_config or ShootingConfig()
    if forms is None:
        mesh = mesh or build_mesh(problem, cfg.mesh_n)
        forms = assemble(problem, mesh)
    fem = inertia(pencil_matrix(forms, xi), cfg.inertia_tol)
    fem_ok = fem.negative == 0 and fem.zero == 0

    sol = integrate(problem, xi, scfg)
    zc = prufer_count(sol)
    e1, e2 = sol.end_state
    boundary_zero = abs(e1) <= scfg.boundary_zero_rtol * math.hypot(e1, e2)
    shoot_ok = (zc == 0) and (not boundary_zero) and (sol.residual > 0.0)
    return PositivityCertificate(float(xi), fem, fem_ok, zc, boundary_zero,
                                 float(sol.residual), shoot_ok)


def find_positivity_shift(problem: Problem,
                          forms: FormSet | None = None,
                          mesh: Mesh | None = None,
                          config: SpectrumConfig | None = None,
                          shoot_config: ShootingConfig | None = None
                          ) -> float:
    """Scan xi = -1, -2, -4, ... until the positivity certificate passes.

    Intended for nonnegative weights with full support, where such a point
    always exists; attempted for any input.  Raises NoPositivityFound when
    |xi| exceeds the configured cap, which signals a pencil without a
    (found) positivity point.
    """
    cfg = config or DEFAULT_SPECTRUM_CONFIG
    if forms is None:
        mesh = mesh or build_mesh(problem, cfg.mesh_n)
        forms = assemble(problem, mesh)
    xi = -1.0
    while abs(xi) <= cfg.positivity_cap:
        # cheap screen first: skip the shooting run when the matrix route
        # already rules the point out
        fem = inertia(pencil_matrix(forms, xi), cfg.inertia_tol)
        if fem.negative == 0 and fem.zero == 0:
            cert = check_positivity(problem, xi, forms=forms, config=cfg,
                                    shoot_config=shoot_config)
            if cert:
                return xi
        xi *= 2.0
    raise NoPositivityFound(
        f"no positivity point found down to {xi/2:.3g}; the weight may be "
        "indefinite (supply xi explicitly)")


@dataclass(frozen=True)
class Bracket:
    """A lambda interval across which the count jumps from |n|-1 to |n|."""

    n: int
    lo: float
    hi: float


@dataclass(frozen=True)
class EigenvalueRecord:
    """One located eigenvalue with its trajectory and cross-checks.

    ``zero_count`` should equal |n| - 1 and ``inertia_at_lambda`` likewise;
    violations are verification failures, not construction errors.
    """

    index: int
    lam: float
    eigenfunction: ShootResult
    zero_count: int
    inertia_at_lambda: int
    fem_lambda: float
    agreement: bool
    agreement_tol: float

    @property
    def zeros(self) -> np.ndarray:
        return self.eigenfunction.zeros


@dataclass(frozen=True)
class SpectrumReport:
    """Solve result: certificate, records, and per-side scan status."""

    xi: float
    certificate: PositivityCertificate
    records: tuple[EigenvalueRecord, ...]
    mesh_n: int
    side_status: dict

    @property
    def all_agree(self) -> bool:
        return all(r.agreement for r in self.records)

    def record(self, n: int) -> EigenvalueRecord:
        for r in self.records:
            if r.index == n:
                return r
        raise KeyError(f"no record with index {n}")

    def side(self, sign: int) -> list[EigenvalueRecord]:
        out = [r for r in self.records if r.index * sign > 0]
        out.sort(key=lambda r: abs(r.index))
        return out


def _split_unit_brackets(count, lo, c_lo, hi, c_hi, min_width):
    """Recursively split [lo, hi] into unit count jumps.

    The count is monotone along the scan direction (increasing away from
    the positivity point), so only the jump magnitude matters here.
    """
    jump = abs(c_hi - c_lo)
    if jump == 0:
        return []
    if jump == 1:
        return [(lo, c_lo, hi, c_hi)]
    if hi - lo < min_width:
        raise NumericalError(
            f"count jumps by {c_hi - c_lo} over [{lo}, {hi}]; eigenvalues "
            "too close to separate")
    mid = 0.5 * (lo + hi)
    c_mid = count(mid)
    return (_split_unit_brackets(count, lo, c_lo, mid, c_mid, min_width)
            + _split_unit_brackets(count, mid, c_mid, hi, c_hi, min_width))


def bracket_eigenvalues(problem: Problem, xi: float, n_max: int,
                        forms: FormSet | None = None,
                        mesh: Mesh | None = None,
                        config: SpectrumConfig | None = None
                        ) -> tuple[list[Bracket], dict]:
    """Brackets for n = +/-1 .. +/-n_max around the positivity point.

    The scan walks away from xi with an adaptive step (doubling while the
    count is flat, re-splitting any step whose count jumps by more than
    one).  A side whose weight matrix is semidefinite the wrong way is
    exactly empty; otherwise a side ends either with n_max brackets or by
    reaching the scan horizon ("terminated-at-horizon": reported, not
    proven absent).  Returns (brackets, side_status).
    """
    cfg = config or DEFAULT_SPECTRUM_CONFIG
    if forms is None:
        mesh = mesh or build_mesh(problem, cfg.mesh_n)
        forms = assemble(problem, mesh)

    def count(lam: float) -> int:
        return pencil_negative_count(forms, lam, cfg.inertia_tol)

    weight = inertia(forms.constrain(forms.Mr), cfg.inertia_tol)
    brackets: list[Bracket] = []
    status: dict = {}
    step0 = cfg.scan_step if cfg.scan_step is not None else max(
        1.0, abs(xi) / 10.0)
    for side in (1, -1):
        if side > 0 and weight.positive == 0:
            status[side] = "empty (weight is negative semidefinite)"
            continue
        if side < 0 and weight.negative == 0:
            status[side] = "empty (weight is positive semidefinite)"
            continue
        found = 0
        lam_prev, c_prev = float(xi), 0
        step = step0
        status[side] = f"terminated-at-horizon ({cfg.scan_horizon:g})"
        while abs(lam_prev - xi) < cfg.scan_horizon:
            lam_next = lam_prev + side * step
            c_next = count(lam_next)
            if c_next > c_prev:
                # orient to increasing lambda; moving left the count grows
                # toward lo, moving right it grows toward hi
                if side > 0:
                    lo, c_lo, hi, c_hi = lam_prev, c_prev, lam_next, c_next
                else:
                    lo, c_lo, hi, c_hi = lam_next, c_next, lam_prev, c_prev
                units = _split_unit_brackets(
                    count, lo, c_lo, hi, c_hi,
                    1e-11 * max(1.0, abs(lo), abs(hi)))
                for (ulo, uc_lo, uhi, uc_hi) in units:
                    near_count = uc_lo if side > 0 else uc_hi
                    n_signed = side * (near_count + 1)
                    if abs(n_signed) <= n_max:
                        brackets.append(Bracket(n_signed, ulo, uhi))
                        found = max(found, abs(n_signed))
                step = step0
            else:
                step *= 2.0
            lam_prev, c_prev = lam_next, c_next
            if found >= n_max:
                status[side] = "complete"
                break
    brackets.sort(key=lambda b: (b.n < 0, abs(b.n)))
    return brackets, status


def _fem_rel_error(lam: float, hmax: float) -> float:
    """h^2 eigenvalue error model of the linear elements."""
    k = math.sqrt(max(abs(lam), 1.0))
    return (k * hmax) ** 2 / 3.0


def refine_eigenvalue(problem: Problem, bracket: Bracket,
                      forms: FormSet | None = None,
                      mesh: Mesh | None = None,
                      config: SpectrumConfig | None = None,
                      shoot_config: ShootingConfig | None = None
                      ) -> EigenvalueRecord:
    """Pin one eigenvalue inside a unit-count bracket.

    The matrix count jump is bisected to give the finite-element value;
    the shooting value is the boundary-residual sign change root (found by
    bracketed root iteration to relative tolerance ``refine_rtol``).  The
    record carries the trajectory at the shooting value, its zero count,
    and the matrix inertia there.
    """
    cfg = config or DEFAULT_SPECTRUM_CONFIG
    scfg = shoot_config or ShootingConfig()
    if forms is None:
        mesh = mesh or build_mesh(problem, cfg.mesh_n)
        forms = assemble(problem, mesh)
    else:
        mesh = forms.mesh
    side = 1 if bracket.n > 0 else -1
    n_abs = abs(bracket.n)

    def count(lam: float) -> int:
        return pencil_negative_count(forms, lam, cfg.inertia_tol)

    lo, hi = bracket.lo, bracket.hi
    want_lo = n_abs - 1 if side > 0 else n_abs
    want_hi = n_abs if side > 0 else n_abs - 1
    if (count(lo), count(hi)) != (want_lo, want_hi):
        raise NumericalError(f"bracket {bracket} does not hold a unit jump")
    while hi - lo > cfg.refine_rtol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if (count(mid) >= n_abs) == (side > 0):
            hi = mid
        else:
            lo = mid
    fem_lambda = 0.5 * (lo + hi)

    def residual(lam: float) -> float:
        return integrate(problem, lam, scfg).residual

    hmax = float(np.diff(mesh.nodes).max())
    est = _fem_rel_error(fem_lambda, hmax)
    agree_tol = (cfg.agreement_safety * est * max(1.0, abs(fem_lambda))
                 + 100.0 * cfg.refine_rtol * max(1.0, abs(fem_lambda)))

    r_lo, r_hi = residual(bracket.lo), residual(bracket.hi)
    if r_lo == 0.0:
        lam_shoot = bracket.lo
    elif r_hi == 0.0:
        lam_shoot = bracket.hi
    elif r_lo * r_hi < 0.0:
        lam_shoot = brentq(residual, bracket.lo, bracket.hi,
                           xtol=1e-13, rtol=max(cfg.refine_rtol, 9e-16))
    else:
        # the coarse bracket missed the sign change (scan probe landed on
        # or past the root): hunt around the matrix value instead
        pad = max(agree_tol, 1e-9 * max(1.0, abs(fem_lambda)))
        lam_shoot = None
        for _ in range(6):
            a, b = fem_lambda - pad, fem_lambda + pad
            ra, rb = residual(a), residual(b)
            if ra * rb < 0.0:
                lam_shoot = brentq(residual, a, b, xtol=1e-13,
                                   rtol=max(cfg.refine_rtol, 9e-16))
                break
            pad *= 4.0
        if lam_shoot is None:
            raise NoSignChange(
                f"no residual sign change near n={bracket.n} "
                f"(fem lambda {fem_lambda:.12g}); tangential root?")

    sol = integrate(problem, lam_shoot, scfg)
    zc = prufer_count(sol)
    # banded classification here: at the eigenvalue itself A is singular to
    # machine precision, and the near-null direction must not be miscounted
    # as negative on floating-point noise
    fem_at = inertia(pencil_matrix(forms, lam_shoot),
                     cfg.inertia_tol).negative
    agreement = abs(lam_shoot - fem_lambda) <= agree_tol
    return EigenvalueRecord(
        index=bracket.n, lam=float(lam_shoot), eigenfunction=sol,
        zero_count=zc, inertia_at_lambda=fem_at, fem_lambda=float(fem_lambda),
        agreement=bool(agreement), agreement_tol=float(agree_tol))


def solve_spectrum(problem: Problem, n_max: int, xi="auto",
                   mesh_n: int | None = None,
                   config: SpectrumConfig | None = None,
                   shoot_config: ShootingConfig | None = None
                   ) -> SpectrumReport:
    """Full pipeline: certify xi, bracket both sides, refine every record."""
    cfg = config or DEFAULT_SPECTRUM_CONFIG
    if mesh_n is not None and mesh_n != cfg.mesh_n:
        cfg = SpectrumConfig(mesh_n=mesh_n, refine_rtol=cfg.refine_rtol,
                             scan_step=cfg.scan_step,
                             scan_horizon=cfg.scan_horizon,
                             positivity_cap=cfg.positivity_cap,
                             inertia_tol=cfg.inertia_tol,
                             agreement_safety=cfg.agreement_safety)
    mesh = build_mesh(problem, cfg.mesh_n)
    forms = assemble(problem, mesh)
    if xi == "auto":
        xi_val = find_positivity_shift(problem, forms=forms, config=cfg,
                                       shoot_config=shoot_config)
    else:
        xi_val = float(xi)
    cert = check_positivity(problem, xi_val, forms=forms, config=cfg,
                            shoot_config=shoot_config)
    if not cert:
        raise NoPositivityFound(
            f"pencil form not certified positive at xi={xi_val:.6g}: "
            f"fem={cert.fem_inertia}, zeros={cert.zero_count}, "
            f"residual={cert.residual:.3g}")
    brackets, status = bracket_eigenvalues(problem, xi_val, n_max,
                                           forms=forms, config=cfg)
    records = parallel_map(
        lambda b: refine_eigenvalue(problem, b, forms=forms, config=cfg,
                                    shoot_config=shoot_config),
        brackets)
    records = tuple(sorted(records, key=lambda r: r.lam))
    lams = [r.lam for r in records]
    if any(b - a <= 10 * cfg.refine_rtol * max(1.0, abs(a), abs(b))
           for a, b in zip(lams[:-1], lams[1:])):
        raise NumericalError("refined eigenvalues are not strictly ordered")
    return SpectrumReport(xi=xi_val, certificate=cert, records=records,
                          mesh_n=cfg.mesh_n, side_status=status)


# ---------------------------------------------------------------------------
# oscillation verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    index: int
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def _interlace_checks(side_records: list[EigenvalueRecord]):
    """Zeros of consecutive eigenfunctions must separate each other."""
    out = []
    for r_lo, r_hi in zip(side_records[:-1], side_records[1:]):
        za = np.sort(r_lo.zeros)
        zb = np.sort(r_hi.zeros)
        cuts = np.concatenate([[0.0], za, [1.0]])
        ok = True
        detail = ""
        if np.any(np.diff(cuts) <= 0.0):
            ok, detail = False, "zeros collide with endpoints"
        elif zb.size != za.size + 1:
            ok = False
            detail = f"{zb.size} zeros against {za.size}; expected one more"
        else:
            for a, b in zip(cuts[:-1], cuts[1:]):
                inside = np.count_nonzero((zb > a) & (zb < b))
                if inside < 1:
                    ok = False
                    detail = f"no zero of y_{r_hi.index} inside " \
                             f"({a:.6g}, {b:.6g})"
                    break
        out.append(CheckResult("interlacing", r_hi.index, ok, detail))
    return out


def verify_oscillation(problem: Problem,
                       report: SpectrumReport) -> VerificationReport:
    """Check the oscillation structure of a spectrum report.

    Per record: the eigenfunction of the |n|-th eigenvalue away from xi
    has exactly |n|-1 interior zeros, each a sign change, and the matrix
    inertia at that eigenvalue equals |n|-1.  Per consecutive same-side
    pair: the zeros strictly interlace, with at least one zero of the
    later eigenfunction between consecutive zeros of the earlier one and
    between each such zero and either endpoint.  Failures are entries in
    the returned report, never exceptions.
    """
    checks: list[CheckResult] = []
    for r in report.records:
        want = abs(r.index) - 1
        checks.append(CheckResult(
            "zero-count", r.index, r.zero_count == want,
            f"{r.zero_count} interior zeros, expected {want}"))
        flags_ok = bool(np.all(r.eigenfunction.zero_sign_changes)) \
            if r.zero_count else True
        checks.append(CheckResult(
            "sign-change", r.index, flags_ok,
            "" if flags_ok else "zero without sign change recorded"))
        checks.append(CheckResult(
            "index-formula", r.index, r.inertia_at_lambda == want,
            f"matrix inertia {r.inertia_at_lambda}, expected {want}"))
        checks.append(CheckResult(
            "two-method-agreement", r.index, r.agreement,
            f"|shooting-fem| = {abs(r.lam - r.fem_lambda):.3g} "
            f"(tol {r.agreement_tol:.3g})"))
    for side in (1, -1):
        checks.extend(_interlace_checks(report.side(side)))
    return VerificationReport(tuple(checks))
