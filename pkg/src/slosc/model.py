"""Problem data: coefficients, boundary angles, and the regularized potential.

The equation -(p y')' + (q - lam*r) y = 0 is posed on [0, 1] with

* p        uniformly positive and piecewise constant,
* q, r     measure-type coefficients: a piecewise-polynomial density of
           degree <= 2 plus finitely many interior point masses (atoms),
* boundary conditions encoded by two angles (theta0, theta1) in (-pi, pi],
  one per endpoint.  theta = 0 is the essential (Dirichlet) constraint;
  otherwise the endpoint carries the real Robin coefficient
  ``boundary_coefficient(theta) = -cot(theta/2)``.

Because q - lam*r is in general only a distribution, the solver never uses
it pointwise.  Instead :func:`build_omega` forms its antiderivative with
value 0 at x = 0: a piecewise polynomial with a step at every atom.  That
single function (plus its total value ``omega1`` at x = 1) is all the
downstream shooting machinery needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ._piecewise import PiecewisePolynomial, check_grid
from .errors import (
    BadGrid,
    NonPositiveP,
    OutOfDomain,
    ProblemFormatError,
    ZeroWeight,
)

MERGE_TOL = 1e-14    # breakpoints/atoms closer than this are collapsed
MAX_DENSITY_DEGREE = 2


def boundary_coefficient(theta: float) -> float:
    """Robin coefficient -cot(theta/2); zero for the essential case theta=0."""
    if theta == 0.0:
        return 0.0
    return -1.0 / math.tan(0.5 * theta)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Uniformly positive piecewise-constant leading coefficient."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = check_grid(self.breakpoints)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size != bp.size - 1:
            raise BadGrid("need exactly one p value per interval")
        if not np.all(np.isfinite(vals)):
            raise BadGrid("p values must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    def __call__(self, x, side: str = "right"):
        return self.as_poly()(x, side)

    def as_poly(self) -> PiecewisePolynomial:
        return PiecewisePolynomial.from_values(self.breakpoints, self.values)


@dataclass(frozen=True)
class DistributionalCoefficient:
    """L2 piecewise-polynomial density plus finite interior point masses."""

    density: PiecewisePolynomial
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.density.degree > MAX_DENSITY_DEGREE:
            raise BadGrid(
                f"density degree {self.density.degree} exceeds "
                f"{MAX_DENSITY_DEGREE}")
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        for x, w in atoms:
            if not (0.0 < x < 1.0):
                raise BadGrid(f"atom location {x} not strictly inside (0, 1)")
            if not (math.isfinite(x) and math.isfinite(w)):
                raise BadGrid("atom entries must be finite")
        if len({x for x, _ in atoms}) != len(atoms):
            raise BadGrid("atom locations must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def zero(cls) -> "DistributionalCoefficient":
        return cls(PiecewisePolynomial.zero())

    @classmethod
    def constant(cls, value: float) -> "DistributionalCoefficient":
        return cls(PiecewisePolynomial((0.0, 1.0), [[float(value)]]))

    @property
    def atom_locations(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms], dtype=float)

    def is_zero(self) -> bool:
        return self.density.is_zero() and not self.atoms

    def scaled(self, c: float) -> "DistributionalCoefficient":
        dens = PiecewisePolynomial(self.density.breakpoints,
                                   c * self.density.coeffs)
        return DistributionalCoefficient(
            dens, tuple((x, c * w) for x, w in self.atoms))

    def plus(self, other: "DistributionalCoefficient",
             factor: float = 1.0) -> "DistributionalCoefficient":
        """self + factor*other with atom lists merged by location."""
        dens = self.density.combine(other.density, 1.0, factor)
        merged: dict[float, float] = {x: w for x, w in self.atoms}
        for x, w in other.atoms:
            merged[x] = merged.get(x, 0.0) + factor * w
        atoms = tuple(sorted((x, w) for x, w in merged.items() if w != 0.0))
        return DistributionalCoefficient(dens, atoms)

    def reflect(self) -> "DistributionalCoefficient":
        atoms = tuple(sorted((1.0 - x, w) for x, w in self.atoms))
        return DistributionalCoefficient(self.density.reflect(), atoms)


@dataclass(frozen=True)
class BoundaryAngles:
    """Endpoint angles in (-pi, pi]; theta = 0 is the Dirichlet constraint."""

    theta0: float
    theta1: float

    def __post_init__(self):
        for name in ("theta0", "theta1"):
            t = float(getattr(self, name))
            if not math.isfinite(t):
                raise BadGrid(f"{name} must be finite")
            object.__setattr__(self, name, t)

    @property
    def v00(self) -> float:
        return boundary_coefficient(self.theta0)

    @property
    def v11(self) -> float:
        return boundary_coefficient(self.theta1)

    @property
    def dirichlet0(self) -> bool:
        return self.theta0 == 0.0

    @property
    def dirichlet1(self) -> bool:
        return self.theta1 == 0.0

    def swapped(self) -> "BoundaryAngles":
        return BoundaryAngles(self.theta1, self.theta0)


@dataclass(frozen=True)
class Problem:
    """A validated coefficient set; construct through validate_problem."""

    p: PiecewiseConstant
    q: DistributionalCoefficient
    r: DistributionalCoefficient
    bc: BoundaryAngles

    def critical_points(self) -> np.ndarray:
        """Union of all coefficient breakpoints and atom locations."""
        pts = np.concatenate([
            self.p.breakpoints,
            self.q.density.breakpoints,
            self.r.density.breakpoints,
            self.q.atom_locations,
            self.r.atom_locations,
        ])
        return np.unique(pts)


@dataclass(frozen=True)
class OmegaFunction:
    """Antiderivative of q - lam*r, vanishing at 0, with steps at atoms.

    ``pieces`` carries the accumulated jumps (right-continuous convention),
    so ``pieces(x)`` is the full one-sided value; ``jumps`` records the
    individual steps and ``omega1`` the right limit at x = 1.
    """

    pieces: PiecewisePolynomial
    jumps: tuple[tuple[float, float], ...]
    omega1: float

    def __call__(self, x, side: str = "right"):
        return self.pieces(x, side)


# ---------------------------------------------------------------------------
# validation / normalization
# ---------------------------------------------------------------------------

def _merge_grid(breakpoints: Iterable[float],
                rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop zero-length pieces produced by (near-)duplicate breakpoints."""
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or bp.size < 2 or not np.all(np.isfinite(bp)):
        raise BadGrid("malformed breakpoint list")
    if np.any(np.diff(bp) < 0):
        raise BadGrid("breakpoints must be nondecreasing before merging")
    keep = np.concatenate([[True], np.diff(bp) > MERGE_TOL])
    bp_m = bp[keep]
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] != bp.size - 1:
        raise BadGrid("one row required per interval")
    piece_keep = keep[1:]  # piece i survives iff its right endpoint survived
    return bp_m, rows[piece_keep]


def _normalize_constant(raw: PiecewiseConstant) -> PiecewiseConstant:
    bp, rows = _merge_grid(raw.breakpoints, raw.values.reshape(-1, 1))
    return PiecewiseConstant(bp, rows[:, 0])


def _normalize_distribution(
        raw: DistributionalCoefficient) -> DistributionalCoefficient:
    bp, rows = _merge_grid(raw.density.breakpoints, raw.density.coeffs)
    merged: dict[float, float] = {}
    for x, w in raw.atoms:
        hit = next((y for y in merged if abs(y - x) <= MERGE_TOL), None)
        key = x if hit is None else hit
        merged[key] = merged.get(key, 0.0) + w
    atoms = tuple(sorted((x, w) for x, w in merged.items() if w != 0.0))
    return DistributionalCoefficient(PiecewisePolynomial(bp, rows), atoms)


def _wrap_angle(theta: float) -> float:
    """Map into (-pi, pi], keeping exact 0 and pi."""
    if -math.pi < theta <= math.pi:
        return theta
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0.0:
        t += 2.0 * math.pi
    return t - math.pi


def validate_problem(raw) -> Problem:
    """Normalize and validate a Problem (or a raw JSON-style mapping).

    Duplicate breakpoints are merged, atoms are sorted and coalesced, and
    boundary angles are wrapped into (-pi, pi].  Raises NonPositiveP,
    ZeroWeight, or BadGrid on contract violations.  Idempotent.
    """
    if isinstance(raw, Mapping):
        raw = problem_from_dict(raw)
    if not isinstance(raw, Problem):
        raise ProblemFormatError(
            f"expected Problem or mapping, got {type(raw).__name__}")
    p = _normalize_constant(raw.p)
    if p.min_value <= 0.0:
        raise NonPositiveP(f"min p value {p.min_value} is not positive")
    q = _normalize_distribution(raw.q)
    r = _normalize_distribution(raw.r)
    if r.is_zero():
        raise ZeroWeight("weight coefficient r vanishes identically")
    bc = BoundaryAngles(_wrap_angle(raw.bc.theta0), _wrap_angle(raw.bc.theta1))
    return Problem(p, q, r, bc)


# ---------------------------------------------------------------------------
# the regularized potential
# ---------------------------------------------------------------------------

def build_omega(q: DistributionalCoefficient,
                r: DistributionalCoefficient,
                lam: float) -> OmegaFunction:
    """Antiderivative of q - lam*r with value 0 at x = 0.

    Densities are integrated piece by piece (exactly, degree <= 3 result);
    every atom contributes a step of size ``w_q - lam*w_r`` at its location,
    taken with the right-continuous convention.
    """
    dens = q.density.combine(r.density, 1.0, -float(lam))
    jump_map: dict[float, float] = {}
    for x, w in q.atoms:
        jump_map[x] = jump_map.get(x, 0.0) + w
    for x, w in r.atoms:
        jump_map[x] = jump_map.get(x, 0.0) - float(lam) * w
    locs = np.array(sorted(jump_map), dtype=float)
    grid = np.union1d(dens.breakpoints, locs)
    anti = dens.on_grid(grid).antiderivative()

    coeffs = anti.coeffs.copy()
    jumps = []
    for x in locs:
        size = jump_map[x]
        jumps.append((float(x), float(size)))
        first = int(np.searchsorted(grid, x))  # piece starting at the atom
        coeffs[first:, 0] += size
    pieces = PiecewisePolynomial(grid, coeffs)
    omega1 = float(pieces(1.0, side="left"))
    return OmegaFunction(pieces, tuple(jumps), omega1)


def eval_omega(w: OmegaFunction, x: float, side: str = "right") -> float:
    """One-sided value of the regularized potential at x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise OutOfDomain(f"omega evaluation point {x} outside [0, 1]")
    return float(w.pieces(float(x), side=side))


# ---------------------------------------------------------------------------
# metamorphic constructions
# ---------------------------------------------------------------------------

def mirror_problem(problem: Problem) -> Problem:
    """The problem under x -> 1 - x with the endpoint angles swapped."""
    refl_p = problem.p.as_poly().reflect()
    return Problem(
        PiecewiseConstant(refl_p.breakpoints, refl_p.coeffs[:, 0]),
        problem.q.reflect(),
        problem.r.reflect(),
        problem.bc.swapped(),
    )


def scale_problem(problem: Problem, c: float) -> Problem:
    """(p, q, r) -> (c*p, c*q, c*r); the eigenvalues are unchanged."""
    if c <= 0.0:
        raise BadGrid("scaling factor must be positive")
    return Problem(
        PiecewiseConstant(problem.p.breakpoints, c * problem.p.values),
        problem.q.scaled(c),
        problem.r.scaled(c),
        problem.bc,
    )


def shift_potential(problem: Problem, c: float) -> Problem:
    """q -> q + c*r; translates the spectrum by +c."""
    return Problem(problem.p, problem.q.plus(problem.r, c), problem.r,
                   problem.bc)


# ---------------------------------------------------------------------------
# JSON problem files
# ---------------------------------------------------------------------------

def _require_keys(obj: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ProblemFormatError(
            f"unknown field(s) {sorted(unknown)}", field=where)


def _parse_density(obj, where: str) -> PiecewisePolynomial:
    if obj is None:
        return PiecewisePolynomial.zero()
    if not isinstance(obj, Mapping):
        raise ProblemFormatError("density must be an object", field=where)
    _require_keys(obj, {"breakpoints", "polys"}, where)
    try:
        bp = np.asarray(obj["breakpoints"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"bad breakpoints ({exc})", field=where)
    polys = obj.get("polys")
    if polys is None:
        raise ProblemFormatError("missing polys", field=where)
    rows = []
    for i, row in enumerate(polys):
        row = np.atleast_1d(np.asarray(row, dtype=float))
        if row.size > MAX_DENSITY_DEGREE + 1:
            raise ProblemFormatError(
                f"poly row {i} has degree > {MAX_DENSITY_DEGREE}", field=where)
        rows.append(np.pad(row, (0, MAX_DENSITY_DEGREE + 1 - row.size)))
    if len(rows) != bp.size - 1:
        raise ProblemFormatError(
            f"{len(rows)} poly rows for {bp.size - 1} intervals", field=where)
    try:
        return PiecewisePolynomial(bp, np.vstack(rows))
    except BadGrid as exc:
        raise ProblemFormatError(str(exc), field=where)


def _parse_distribution(obj, where: str) -> DistributionalCoefficient:
    if not isinstance(obj, Mapping):
        raise ProblemFormatError("coefficient must be an object", field=where)
    _require_keys(obj, {"density", "atoms"}, where)
    density = _parse_density(obj.get("density"), f"{where}.density")
    atoms_raw = obj.get("atoms", [])
    atoms = []
    for i, pair in enumerate(atoms_raw):
        try:
            x, w = (float(v) for v in pair)
        except (TypeError, ValueError):
            raise ProblemFormatError(
                f"atom {i} must be a [location, weight] pair",
                field=f"{where}.atoms")
        atoms.append((x, w))
    try:
        return DistributionalCoefficient(density, tuple(atoms))
    except BadGrid as exc:
        raise ProblemFormatError(str(exc), field=f"{where}.atoms")


def problem_from_dict(obj: Mapping) -> Problem:
    """Parse the documented JSON schema; unknown fields are rejected."""
    if not isinstance(obj, Mapping):
        raise ProblemFormatError("problem file must contain a JSON object")
    _require_keys(obj, {"p", "q", "r", "bc"}, "problem")
    for key in ("p", "q", "r", "bc"):
        if key not in obj:
            raise ProblemFormatError("missing required field", field=key)
    pobj = obj["p"]
    if not isinstance(pobj, Mapping):
        raise ProblemFormatError("p must be an object", field="p")
    _require_keys(pobj, {"breakpoints", "values"}, "p")
    try:
        p = PiecewiseConstant(np.asarray(pobj["breakpoints"], dtype=float),
                              np.asarray(pobj["values"], dtype=float))
    except KeyError as exc:
        raise ProblemFormatError(f"missing {exc.args[0]}", field="p")
    except (BadGrid, TypeError, ValueError) as exc:
        raise ProblemFormatError(str(exc), field="p")
    q = _parse_distribution(obj["q"], "q")
    r = _parse_distribution(obj["r"], "r")
    bcobj = obj["bc"]
    if not isinstance(bcobj, Mapping):
        raise ProblemFormatError("bc must be an object", field="bc")
    _require_keys(bcobj, {"theta0", "theta1"}, "bc")
    try:
        bc = BoundaryAngles(float(bcobj["theta0"]), float(bcobj["theta1"]))
    except KeyError as exc:
        raise ProblemFormatError(f"missing {exc.args[0]}", field="bc")
    except (BadGrid, TypeError, ValueError) as exc:
        raise ProblemFormatError(str(exc), field="bc")
    return Problem(p, q, r, bc)


def problem_to_dict(problem: Problem) -> dict:
    def dist(d: DistributionalCoefficient) -> dict:
        return {
            "density": {
                "breakpoints": d.density.breakpoints.tolist(),
                "polys": d.density.coeffs.tolist(),
            },
            "atoms": [[x, w] for x, w in d.atoms],
        }

    return {
        "p": {
            "breakpoints": problem.p.breakpoints.tolist(),
            "values": problem.p.values.tolist(),
        },
        "q": dist(problem.q),
        "r": dist(problem.r),
        "bc": {"theta0": problem.bc.theta0, "theta1": problem.bc.theta1},
    }


def load_problem(path) -> Problem:
    """Read, parse, and validate a problem JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"invalid JSON: {exc}")
    return validate_problem(problem_from_dict(obj))
