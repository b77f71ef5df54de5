"""Hat-function Galerkin forms, Sylvester inertia counts, eigencurves.

The pencil form

    a_lam[y] = int p |y'|^2 + int (q - lam r) |y|^2 + v00 |y(0)|^2
               + v11 |y(1)|^2

is discretized with piecewise-linear hats on a mesh containing every
coefficient breakpoint and atom location, so all element integrals are
exact (3-point Gauss handles density degree <= 2 against the quadratic
hat products).  An atom (x0, w) lands on a node and contributes w to the
diagonal entry of that node.  Essential (theta = 0) endpoint constraints
are imposed by deleting the endpoint row/column, which keeps inertia
exact.

Inertia is counted via LDL^T pivot signs.  For the tridiagonal matrices
produced here the count is evaluated at the two shifts +/-eps
(eps = tol * max|entry|): the negative count of A + eps*I and A - eps*I
bracket the near-null cluster, giving (negative, zero, positive) without
ever classifying an individual pivot by magnitude (pivot size is not
eigenvalue size).  Dense symmetric input falls back to the pivoted
Bunch-Kaufman LDL^T of scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _rk
from .errors import FactorizationBreakdown, MeshMismatch
from .model import Problem

INERTIA_TOL = 1e-9   # zero band, relative to the largest matrix entry
NODE_TOL = 1e-12     # node lookup tolerance


@dataclass(frozen=True)
class Mesh:
    """Sorted node set for the hat basis; includes 0, 1, and all
    coefficient breakpoints/atoms of the problem it was built for."""

    nodes: np.ndarray

    def __post_init__(self):
        nd = np.asarray(self.nodes, dtype=float)
        if nd.size < 2 or np.any(np.diff(nd) <= 0.0):
            raise MeshMismatch("mesh nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nd)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    def node_index(self, x: float, tol: float = NODE_TOL) -> int:
        i = int(np.searchsorted(self.nodes, x))
        for j in (i - 1, i, i + 1):
            if 0 <= j < self.nodes.size and abs(self.nodes[j] - x) <= tol:
                return j
        raise MeshMismatch(f"{x} is not a mesh node (refine the mesh)")

    def nearest_node(self, x: float) -> float:
        """Value of the mesh node closest to x."""
        i = np.clip(np.searchsorted(self.nodes, x), 1, self.nodes.size - 1)
        lo, hi = self.nodes[i - 1], self.nodes[i]
        return float(lo if x - lo <= hi - x else hi)


def build_mesh(problem: Problem, n: int) -> Mesh:
    """Quasi-uniform refinement of the coefficient grid with >= n interior
    nodes; every breakpoint and atom location is a node."""
    if n < 2:
        raise ValueError("mesh refinement needs n >= 2")
    crit = problem.critical_points()
    target = 1.0 / (n + 1)
    parts = [np.array([0.0])]
    for a, b in zip(crit[:-1], crit[1:]):
        k = max(1, int(np.ceil((b - a) / target)))
        parts.append(np.linspace(a, b, k + 1)[1:])
    return Mesh(np.concatenate(parts))


@dataclass(frozen=True)
class SymTridiagonal:
    """Symmetric tridiagonal matrix as (diagonal, superdiagonal) arrays."""

    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        e = np.asarray(self.off, dtype=float)
        if e.size != max(d.size - 1, 0):
            raise ValueError("off-diagonal must have length n-1")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", e)

    @property
    def n(self) -> int:
        return self.diag.size

    def maxabs(self) -> float:
        m = float(np.abs(self.diag).max()) if self.diag.size else 0.0
        if self.off.size:
            m = max(m, float(np.abs(self.off).max()))
        return m

    def section(self, i0: int, i1: int) -> "SymTridiagonal":
        return SymTridiagonal(self.diag[i0:i1],
                              self.off[i0:max(i1 - 1, i0)])

    def toarray(self) -> np.ndarray:
        A = np.diag(self.diag)
        if self.off.size:
            A += np.diag(self.off, 1) + np.diag(self.off, -1)
        return A

    def dump_coo(self, fh) -> None:
        """Debug dump in coordinate text format: row col value."""
        for i, v in enumerate(self.diag):
            fh.write(f"{i} {i} {v!r}\n")
        for i, v in enumerate(self.off):
            fh.write(f"{i} {i + 1} {v!r}\n")
            fh.write(f"{i + 1} {i} {v!r}\n")


@dataclass(frozen=True)
class FormSet:
    """Assembled form matrices on the full node set plus the active range.

    ``Mp`` discretizes int p|y'|^2, ``Mmass`` int |y|^2, ``Mq`` the full
    q-term (density plus atoms), ``Mr`` the weight term, and ``MV`` the
    boundary contribution (diagonal entries at the endpoint nodes).  The
    bookkeeping +|y|^2 of the positive operator and the -|y|^2 of the
    q-operator cancel in the pencil, but both matrices are kept so either
    grouping can be formed.  ``active0:active1`` is the node range that
    survives the essential constraints.
    """

    mesh: Mesh
    Mp: SymTridiagonal
    Mmass: SymTridiagonal
    Mq: SymTridiagonal
    MV: SymTridiagonal
    Mr: SymTridiagonal
    active0: int
    active1: int

    def constrain(self, tri: SymTridiagonal) -> SymTridiagonal:
        return tri.section(self.active0, self.active1)


_GAUSS_X = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _density_tridiag(density, nodes: np.ndarray):
    """Exact element integrals of density * phi_i * phi_j (hat basis)."""
    a = nodes[:-1]
    h = np.diff(nodes)
    xg = a[:, None] + (0.5 + 0.5 * _GAUSS_X)[None, :] * h[:, None]
    fg = density(xg.ravel()).reshape(xg.shape)
    wg = (0.5 * _GAUSS_W)[None, :] * h[:, None]
    phi_a = (nodes[1:, None] - xg) / h[:, None]
    phi_b = (xg - a[:, None]) / h[:, None]
    e_aa = np.sum(wg * fg * phi_a * phi_a, axis=1)
    e_ab = np.sum(wg * fg * phi_a * phi_b, axis=1)
    e_bb = np.sum(wg * fg * phi_b * phi_b, axis=1)
    diag = np.zeros(nodes.size)
    np.add.at(diag, np.arange(nodes.size - 1), e_aa)
    np.add.at(diag, np.arange(1, nodes.size), e_bb)
    return diag, e_ab


def assemble(problem: Problem, mesh: Mesh) -> FormSet:
    """Assemble all form matrices on the mesh.

    Raises MeshMismatch if the mesh misses a coefficient breakpoint or an
    atom location.
    """
    nodes = mesh.nodes
    for x in problem.critical_points():
        mesh.node_index(x)  # raises MeshMismatch when absent
    h = np.diff(nodes)
    m = nodes.size

    pe = problem.p(0.5 * (nodes[:-1] + nodes[1:]))
    stiff = pe / h
    Mp_diag = np.zeros(m)
    np.add.at(Mp_diag, np.arange(m - 1), stiff)
    np.add.at(Mp_diag, np.arange(1, m), stiff)
    Mp = SymTridiagonal(Mp_diag, -stiff)

    mass_diag = np.zeros(m)
    np.add.at(mass_diag, np.arange(m - 1), h / 3.0)
    np.add.at(mass_diag, np.arange(1, m), h / 3.0)
    Mmass = SymTridiagonal(mass_diag, h / 6.0)

    def distributional(dc):
        diag, off = _density_tridiag(dc.density, nodes)
        for x, w in dc.atoms:
            diag[mesh.node_index(x)] += w
        return SymTridiagonal(diag, off)

    Mq = distributional(problem.q)
    Mr = distributional(problem.r)

    mv_diag = np.zeros(m)
    mv_diag[0] = problem.bc.v00
    mv_diag[-1] = problem.bc.v11
    MV = SymTridiagonal(mv_diag, np.zeros(m - 1))

    active0 = 1 if problem.bc.dirichlet0 else 0
    active1 = m - 1 if problem.bc.dirichlet1 else m
    return FormSet(mesh, Mp, Mmass, Mq, MV, Mr, active0, active1)


def pencil_matrix(forms: FormSet, lam: float) -> SymTridiagonal:
    """A(lam) = Mp + Mq + MV - lam*Mr on the active (constrained) range."""
    diag = (forms.Mp.diag + forms.Mq.diag + forms.MV.diag
            - lam * forms.Mr.diag)
    off = forms.Mp.off + forms.Mq.off - lam * forms.Mr.off
    return SymTridiagonal(diag, off).section(forms.active0, forms.active1)


def positive_matrix(forms: FormSet) -> SymTridiagonal:
    """The uniformly positive reference form Mp + Mmass, constrained."""
    return SymTridiagonal(forms.Mp.diag + forms.Mmass.diag,
                          forms.Mp.off + forms.Mmass.off
                          ).section(forms.active0, forms.active1)


@dataclass(frozen=True)
class Inertia:
    """Counts of eigenvalues below, inside, and above the zero band."""

    negative: int
    zero: int
    positive: int

    @property
    def dim(self) -> int:
        return self.negative + self.zero + self.positive

    def is_positive(self) -> bool:
        return self.negative == 0 and self.zero == 0


def _tridiag_counts(tri: SymTridiagonal, shift: float) -> int:
    e = tri.off if tri.off.size else np.zeros(0)
    emax2 = float(np.max(e * e)) if e.size else 1.0
    pivmin = 1e-292 * max(1.0, emax2)
    return int(_rk.sturm_negative_count(tri.diag, e, shift, pivmin))


def inertia(matrix, tol: float = INERTIA_TOL) -> Inertia:
    """Sylvester inertia of a symmetric matrix with a tol zero band.

    Tridiagonal input is counted by the LDL^T pivot-sign recurrence at the
    two shifts +/- (tol * scale); dense input goes through the pivoted
    Bunch-Kaufman LDL^T with its 1x1/2x2 pivot blocks classified against
    the same band.
    """
    if isinstance(matrix, SymTridiagonal):
        n = matrix.n
        if n == 0:
            return Inertia(0, 0, 0)
        if not (np.all(np.isfinite(matrix.diag))
                and np.all(np.isfinite(matrix.off))):
            raise FactorizationBreakdown("matrix has non-finite entries")
        scale = max(matrix.maxabs(), 1e-30)
        eps = tol * scale
        below = _tridiag_counts(matrix, -eps)
        below_hi = _tridiag_counts(matrix, eps)
        return Inertia(below, below_hi - below, n - below_hi)

    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("dense inertia input must be a square matrix")
    if A.size == 0:
        return Inertia(0, 0, 0)
    if not np.all(np.isfinite(A)):
        raise FactorizationBreakdown("matrix has non-finite entries")
    scale = max(float(np.abs(A).max()), 1e-30)
    eps = tol * scale
    _, d, _ = scipy.linalg.ldl(A)
    if not np.all(np.isfinite(d)):
        raise FactorizationBreakdown("LDL^T produced non-finite pivots")
    neg = zero = pos = 0
    i = 0
    n = A.shape[0]
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
            mean = 0.5 * (a + c)
            half = np.hypot(0.5 * (a - c), b)
            for ev in (mean - half, mean + half):
                if ev < -eps:
                    neg += 1
                elif ev > eps:
                    pos += 1
                else:
                    zero += 1
            i += 2
        else:
            ev = d[i, i]
            if ev < -eps:
                neg += 1
            elif ev > eps:
                pos += 1
            else:
                zero += 1
            i += 1
    return Inertia(neg, zero, pos)


def restricted_inertia(problem: Problem, mesh: Mesh, lam: float, x: float,
                       forms: FormSet | None = None,
                       tol: float = INERTIA_TOL) -> Inertia:
    """Inertia of the pencil form restricted to functions supported on
    [0, x] and vanishing at x (theta0 endpoint handling kept).

    x must be a mesh node.  Restriction-with-hard-zero at x replaces the
    interval rescaling used in the theory; the two are congruent, so the
    inertia is the same.  At x = 1 this is the form on {y : y(1) = 0}
    regardless of theta1.
    """
    if forms is None:
        forms = assemble(problem, mesh)
    if not 0.0 < x <= 1.0:
        raise MeshMismatch(f"restriction point {x} outside (0, 1]")
    k = mesh.node_index(x)
    if k == 0:
        raise MeshMismatch("restriction point coincides with x = 0")
    diag = (forms.Mp.diag + forms.Mq.diag + forms.MV.diag
            - lam * forms.Mr.diag)
    off = forms.Mp.off + forms.Mq.off - lam * forms.Mr.off
    sub = SymTridiagonal(diag, off).section(forms.active0, k)
    return inertia(sub, tol)


def pencil_negative_count(forms: FormSet, lam: float,
                          tol: float = INERTIA_TOL) -> int:
    """Strictly negative eigenvalue count of A(lam).

    Counts pencil eigenvalues passed since the positivity point (on either
    side of it).  Uses the exact zero shift: a tolerance band here would
    bias the located count-jump point by O(tol * |A| / h), which is far
    coarser than the h^2 discretization error itself.
    """
    A = pencil_matrix(forms, lam)
    if A.n == 0:
        return 0
    if not (np.all(np.isfinite(A.diag)) and np.all(np.isfinite(A.off))):
        raise FactorizationBreakdown("matrix has non-finite entries")
    return _tridiag_counts(A, 0.0)


def eigencurve(problem: Problem, mesh: Mesh, lam: float, n: int,
               forms: FormSet | None = None, rtol: float = 1e-12,
               tol: float = INERTIA_TOL) -> float:
    """n-th smallest eigenvalue of A(lam) v = L * (Mp + Mmass) v.

    Located by bisection on the inertia of A(lam) - t*(Mp + Mmass): the
    negative count at shift t equals the number of curve values below t.
    The curves are continuous in lam and hit zero exactly at the pencil
    eigenvalues.
    """
    if n < 1:
        raise ValueError("eigencurve index must be >= 1")
    if forms is None:
        forms = assemble(problem, mesh)
    A = pencil_matrix(forms, lam)
    B = positive_matrix(forms)
    if n > A.n:
        raise ValueError(f"index {n} exceeds discrete dimension {A.n}")
    # Gershgorin floor of B (provably positive for the hat-basis form)
    gersh = B.diag.copy()
    if B.off.size:
        gersh[:-1] -= np.abs(B.off)
        gersh[1:] -= np.abs(B.off)
    bmin = float(gersh.min())
    if bmin <= 0.0:
        raise FactorizationBreakdown("reference form lost positivity")
    norm_a = float(np.abs(A.diag).max())
    if A.off.size:
        norm_a += 2.0 * float(np.abs(A.off).max())
    bound = norm_a / bmin + 1.0

    def count(t: float) -> int:
        shifted = SymTridiagonal(A.diag - t * B.diag, A.off - t * B.off)
        return _tridiag_counts(shifted, 0.0)

    lo, hi = -bound, bound
    while count(lo) >= n:
        lo *= 2.0
    while count(hi) < n:
        hi *= 2.0
    while hi - lo > rtol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if count(mid) >= n:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
