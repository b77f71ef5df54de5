"""Piecewise polynomials on breakpoint grids of [0, 1].

Coefficients are stored in ascending powers of the *global* coordinate x
(not shifted to the piece), which keeps linear combination and refinement
onto a finer grid exact: a sub-piece simply reuses its parent's coefficient
row.  On [0, 1] the global Horner evaluation is well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import BadGrid, OutOfDomain


def check_grid(breakpoints: np.ndarray) -> np.ndarray:
    """Validate a breakpoint grid: strictly increasing, spanning [0, 1]."""
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or bp.size < 2:
        raise BadGrid("breakpoint grid needs at least the two endpoints")
    if not np.all(np.isfinite(bp)):
        raise BadGrid("breakpoint grid contains non-finite values")
    if np.any(np.diff(bp) <= 0.0):
        raise BadGrid("breakpoints must be strictly increasing")
    if bp[0] != 0.0 or bp[-1] != 1.0:
        raise BadGrid("breakpoint grid must start at 0 and end at 1")
    return bp


@dataclass(frozen=True)
class PiecewisePolynomial:
    """One polynomial per interval [breakpoints[i], breakpoints[i+1])."""

    breakpoints: np.ndarray  # (m+1,) strictly increasing, 0 and 1 included
    coeffs: np.ndarray       # (m, k) ascending powers of x

    def __post_init__(self):
        bp = check_grid(self.breakpoints)
        cf = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if cf.shape[0] != bp.size - 1:
            raise BadGrid("one coefficient row required per piece")
        if not np.all(np.isfinite(cf)):
            raise BadGrid("polynomial coefficients must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coeffs", cf)

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, breakpoints=(0.0, 1.0)) -> "PiecewisePolynomial":
        bp = np.asarray(breakpoints, dtype=float)
        return cls(bp, np.zeros((bp.size - 1, 1)))

    @classmethod
    def from_values(cls, breakpoints, values) -> "PiecewisePolynomial":
        """Piecewise constant with one value per interval."""
        vals = np.asarray(values, dtype=float)
        return cls(np.asarray(breakpoints, dtype=float), vals.reshape(-1, 1))

    # -- basic queries -----------------------------------------------------
    @property
    def npieces(self) -> int:
        return self.coeffs.shape[0]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def piece_index(self, x, side: str = "right"):
        """Index of the piece whose closure contains x from the given side."""
        xv = np.asarray(x, dtype=float)
        if np.any(xv < 0.0) or np.any(xv > 1.0):
            raise OutOfDomain(f"evaluation point outside [0, 1]: {x}")
        if side == "right":
            idx = np.searchsorted(self.breakpoints, xv, side="right") - 1
        elif side == "left":
            idx = np.searchsorted(self.breakpoints, xv, side="left") - 1
        else:
            raise ValueError("side must be 'left' or 'right'")
        return np.clip(idx, 0, self.npieces - 1)

    def __call__(self, x, side: str = "right"):
        xv = np.asarray(x, dtype=float)
        idx = self.piece_index(xv, side)
        rows = self.coeffs[idx]
        out = np.zeros_like(xv)
        for j in range(self.coeffs.shape[1] - 1, -1, -1):
            out = out * xv + rows[..., j]
        return float(out) if np.isscalar(x) else out

    # -- calculus ----------------------------------------------------------
    def antiderivative(self) -> "PiecewisePolynomial":
        """Continuous antiderivative F with F(0) = 0."""
        m, k = self.coeffs.shape
        anti = np.zeros((m, k + 1))
        anti[:, 1:] = self.coeffs / np.arange(1, k + 1)
        # integration constants: F(0) = 0, then continuity at the joints
        anti[0, 0] = -_horner(anti[0], self.breakpoints[0])
        for i in range(1, m):
            a = self.breakpoints[i]
            anti[i, 0] = _horner(anti[i - 1], a) - _horner(anti[i], a)
        return PiecewisePolynomial(self.breakpoints.copy(), anti)

    def integral(self) -> float:
        """Integral over the whole of [0, 1]."""
        F = self.antiderivative()
        return float(_horner(F.coeffs[-1], 1.0))

    # -- transformations ----------------------------------------------------
    def on_grid(self, grid: np.ndarray) -> "PiecewisePolynomial":
        """Re-express on a finer grid that contains every breakpoint."""
        grid = np.asarray(grid, dtype=float)
        missing = np.setdiff1d(self.breakpoints, grid)
        if missing.size:
            raise BadGrid(f"grid is missing breakpoints {missing}")
        mids = 0.5 * (grid[:-1] + grid[1:])
        idx = np.searchsorted(self.breakpoints, mids, side="right") - 1
        return PiecewisePolynomial(grid, self.coeffs[idx])

    def combine(self, other: "PiecewisePolynomial", fa: float,
                fb: float) -> "PiecewisePolynomial":
        """Exact linear combination fa*self + fb*other on the union grid."""
        grid = np.union1d(self.breakpoints, other.breakpoints)
        a = self.on_grid(grid)
        b = other.on_grid(grid)
        k = max(a.coeffs.shape[1], b.coeffs.shape[1])
        cf = np.zeros((grid.size - 1, k))
        cf[:, : a.coeffs.shape[1]] += fa * a.coeffs
        cf[:, : b.coeffs.shape[1]] += fb * b.coeffs
        return PiecewisePolynomial(grid, cf)

    def reflect(self) -> "PiecewisePolynomial":
        """The function x -> f(1 - x) on the reflected grid."""
        m, k = self.coeffs.shape
        # coefficients of sum_j c_j (1-x)^j expanded in powers of x
        T = np.zeros((k, k))
        for j in range(k):
            for i in range(j + 1):
                T[j, i] = comb(j, i) * (-1.0) ** i
        new_bp = np.sort(1.0 - self.breakpoints)
        new_cf = (self.coeffs @ T)[::-1]
        return PiecewisePolynomial(new_bp, new_cf)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))


def _horner(coeffs: np.ndarray, x: float) -> float:
    out = 0.0
    for c in coeffs[::-1]:
        out = out * x + c
    return float(out)
