"""1-D partition-of-unity finite elements for drift-diffusion equations.

The computational domain is covered by K equal subdomains of length 2h
overlapping by h (h = span / (K+1)).  On each subdomain a C^s blending
function multiplies a local Legendre basis; the blending functions of
adjacent subdomains sum to one, so global continuity holds by
construction.  All integrands are piecewise polynomial on the K+1 cells
of width h, which makes Gauss-Legendre quadrature per cell exact.

Inside the outer half of the two end subdomains only one blending
function is alive and the partition sums to less than one; that strip is
treated as a decay buffer (the solution must be negligible there), and a
runtime diagnostic watches the mass it carries.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import AssemblyError, ParameterError, StepFailureError, UnsupportedCoefficientError

_polyval = np.polynomial.polynomial.polyval

# Blending branch g_s(z) = a0 + sum_i a_i z^(2i-1): constant plus odd
# powers, degree 2s-1, with g_s(z) + g_s(-z) = 1 and g_s(1) = 1.
_G_COEFFS = {
    1: np.array([0.5, 0.5]),
    2: np.array([0.5, 0.75, 0.0, -0.25]),
    3: np.array([0.5, 15.0 / 16.0, 0.0, -5.0 / 8.0, 0.0, 3.0 / 16.0]),
}


def _g_poly(s):
    if s not in _G_COEFFS:
        raise ParameterError(f"smoothness order must be one of {sorted(_G_COEFFS)}, got {s}")
    return _G_COEFFS[s]


def pu_mother(s, xi):
    """Mother blending function on [-1, 1]: g_s(2 xi + 1) on the left
    half, g_s(-2 xi + 1) on the right, zero outside."""
    g = _g_poly(s)
    xi = np.asarray(xi, dtype=float)
    left = _polyval(2.0 * xi + 1.0, g)
    right = _polyval(-2.0 * xi + 1.0, g)
    out = np.where(xi <= 0.0, left, right)
    out = np.where(np.abs(xi) > 1.0, 0.0, out)
    return out if out.ndim else float(out)


def pu_mother_deriv(s, xi):
    """d/dxi of the mother blending function (zero outside [-1, 1])."""
    dg = np.polynomial.polynomial.polyder(_g_poly(s))
    xi = np.asarray(xi, dtype=float)
    left = 2.0 * _polyval(2.0 * xi + 1.0, dg)
    right = -2.0 * _polyval(-2.0 * xi + 1.0, dg)
    out = np.where(xi <= 0.0, left, right)
    out = np.where(np.abs(xi) > 1.0, 0.0, out)
    return out if out.ndim else float(out)


def legendre(n, xi):
    """Legendre polynomial P_n(xi) by the three-term recurrence."""
    if n < 0:
        raise ParameterError("Legendre degree must be >= 0")
    return legendre_table(n, np.asarray(xi, dtype=float))[n]


def legendre_table(nmax, xi):
    """P_0 .. P_nmax stacked along the first axis."""
    xi = np.asarray(xi, dtype=float)
    table = np.empty((nmax + 1,) + xi.shape)
    table[0] = 1.0
    if nmax >= 1:
        table[1] = xi
    for n in range(2, nmax + 1):
        table[n] = ((2 * n - 1) * xi * table[n - 1] - (n - 1) * table[n - 2]) / n
    return table


def legendre_deriv_table(nmax, xi):
    """P'_0 .. P'_nmax via P'_n = P'_{n-2} + (2n-1) P_{n-1}."""
    xi = np.asarray(xi, dtype=float)
    values = legendre_table(nmax, xi)
    table = np.zeros_like(values)
    if nmax >= 1:
        table[1] = 1.0
    for n in range(2, nmax + 1):
        table[n] = table[n - 2] + (2 * n - 1) * values[n - 1]
    return table


@dataclass(frozen=True)
class Cover:
    """Overlapping cover of [gmin, gmax] by K subdomains of length 2h."""

    gmin: float
    gmax: float
    subdomains: int

    def __post_init__(self):
        if self.gmax <= self.gmin:
            raise ParameterError("cover bounds must satisfy gmin < gmax")
        if self.subdomains < 2:
            raise ParameterError("cover needs at least 2 subdomains")

    @property
    def h(self):
        return (self.gmax - self.gmin) / (self.subdomains + 1)

    def bounds(self, k):
        """Bounds of subdomain k (0-based)."""
        lo = self.gmin + k * self.h
        return lo, lo + 2.0 * self.h

    def center(self, k):
        return self.gmin + (k + 1) * self.h

    def to_reference(self, k, x):
        """Affine map of subdomain k onto [-1, 1]."""
        return (np.asarray(x, dtype=float) - self.center(k)) / self.h

    @property
    def n_cells(self):
        # Cells are the width-h strips between consecutive subdomain edges.
        return self.subdomains + 1

    def cell_subdomains(self, i):
        """Subdomains alive on cell i: the lower one sees its right half,
        the upper one its left half."""
        ks = []
        if i - 1 >= 0:
            ks.append(i - 1)
        if i < self.subdomains:
            ks.append(i)
        return ks

    @property
    def interior(self):
        """Interval where the blending functions sum to exactly one."""
        return self.gmin + self.h, self.gmax - self.h


@dataclass(frozen=True)
class PuBasis:
    """Blending order s plus the per-subdomain Legendre basis size."""

    smoothness: int
    local_dim: int

    def __post_init__(self):
        _g_poly(self.smoothness)
        if self.local_dim < 1:
            raise ParameterError("local basis needs at least one function")

    @property
    def shape_degree(self):
        # blending degree (2s-1) plus top local Legendre degree
        return 2 * self.smoothness - 1 + self.local_dim - 1

    def total_dof(self, cover):
        return self.local_dim * cover.subdomains

    def global_index(self, k, mu):
        """Global number of local function mu (0-based) of subdomain k."""
        return k * self.local_dim + mu


def shape_eval(basis, cover, k, mu, x):
    """Shape function u_mu^k(x) = mother(xi_k(x)) * P_mu(xi_k(x)); zero
    outside subdomain k.  ``mu`` is 0-based."""
    if not 0 <= mu < basis.local_dim:
        raise ParameterError("local index out of range")
    xi = cover.to_reference(k, x)
    out = pu_mother(basis.smoothness, xi) * legendre(mu, xi)
    return out if np.ndim(out) else float(out)


@lru_cache(maxsize=64)
def _half_tables(smoothness, local_dim, n_gauss):
    """Gauss data for one cell, canonicalised to the unit interval.

    Returns (nodes01, weights01, U_lower, dU_lower, U_upper, dU_upper)
    where the lower subdomain sees the cell as its right half
    (xi in [0, 1]) and the upper one as its left half (xi in [-1, 0]).
    Derivative tables are with respect to xi.
    """
    nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
    z = 0.5 * (nodes + 1.0)
    w = 0.5 * weights

    def tables(xi):
        p = legendre_table(local_dim - 1, xi)
        dp = legendre_deriv_table(local_dim - 1, xi)
        phi = pu_mother(smoothness, xi)
        dphi = pu_mother_deriv(smoothness, xi)
        return phi * p, dphi * p + phi * dp

    u_lo, du_lo = tables(z)          # xi in [0, 1]
    u_up, du_up = tables(z - 1.0)    # xi in [-1, 0]
    return z, w, u_lo, du_lo, u_up, du_up


class DiscreteSystem:
    """Galerkin operators on the partition-of-unity space.

    Holds the (dense, banded) mass matrix and assembles the advection-
    diffusion stiffness A(t) for polynomial drift and diffusion
    coefficients; assembly is exact Gauss-Legendre quadrature per cell.
    """

    def __init__(self, basis, cover):
        self.basis = basis
        self.cover = cover
        self.n_dof = basis.total_dof(cover)
        mass = self._assemble_bilinear(lambda x: np.ones_like(x), 0, grad_row=False, grad_col=False)
        # remove BLAS accumulation-order roundoff: the operator is symmetric
        self.mass = 0.5 * (mass + mass.T)
        try:
            self._mass_lu = sla.lu_factor(self.mass)
        except sla.LinAlgError as exc:  # pragma: no cover - valid covers are regular
            raise AssemblyError("mass matrix is singular") from exc
        # pure gradient-gradient matrix, used for diffusion terms and the
        # energy diagnostic integral of (df/dx)^2
        grad = self._assemble_bilinear(lambda x: np.ones_like(x), 0, grad_row=True, grad_col=True)
        self.grad = 0.5 * (grad + grad.T)
        self.mass_vector = self.integrate_poly_against_basis([1.0])

    # -- quadrature plumbing -------------------------------------------------

    def _gauss_order(self, extra_degree):
        d = 2 * self.basis.shape_degree + max(0, extra_degree)
        return d // 2 + 1

    def _cells(self, n_gauss):
        """Static per-cell quadrature data (built once per Gauss order)."""
        cache = getattr(self, "_cell_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_cell_cache", cache)
        if n_gauss in cache:
            return cache[n_gauss]
        z, w, u_lo, du_lo, u_up, du_up = _half_tables(
            self.basis.smoothness, self.basis.local_dim, n_gauss
        )
        h = self.cover.h
        cells = []
        for i in range(self.cover.n_cells):
            ks = self.cover.cell_subdomains(i)
            x = self.cover.gmin + (i + z) * h
            blocks_u, blocks_du, dofs = [], [], []
            for k in ks:
                if k == i - 1:      # lower subdomain, right half
                    blocks_u.append(u_lo)
                    blocks_du.append(du_lo)
                else:               # upper subdomain, left half
                    blocks_u.append(u_up)
                    blocks_du.append(du_up)
                dofs.extend(self.basis.global_index(k, mu) for mu in range(self.basis.local_dim))
            u = np.vstack(blocks_u)
            du = np.vstack(blocks_du) / h
            dofs = np.asarray(dofs)
            cells.append((x, w * h, u, du, dofs, np.ix_(dofs, dofs)))
        cache[n_gauss] = cells
        return cells

    def _stacked_nodes(self, n_gauss):
        cache = getattr(self, "_node_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_node_cache", cache)
        if n_gauss not in cache:
            cache[n_gauss] = np.concatenate([c[0] for c in self._cells(n_gauss)])
        return cache[n_gauss]

    def _assemble_bilinear(self, coeff, coeff_degree, *, grad_row, grad_col, n_gauss=None):
        if n_gauss is None:
            n_gauss = self._gauss_order(coeff_degree)
        out = np.zeros((self.n_dof, self.n_dof))
        for x, w, u, du, _, ix in self._cells(n_gauss):
            rows = du if grad_row else u
            cols = du if grad_col else u
            cw = coeff(x) * w
            out[ix] += rows @ (cw * cols).T
        return out

    # -- public operators ----------------------------------------------------

    def assemble_stiffness(self, q_coeffs, diffusion, t=None, *, n_gauss=None):
        """Weak-form matrix A with entries

            A[j, m] = int (q - B') u_m u_j' dx - int B u_m' u_j' dx,

        for polynomial advection ``q_coeffs`` (ascending powers) and a
        polynomial DiffusionField ``diffusion`` (or a plain pair of
        coefficient arrays).  Boundary terms vanish because the shape
        functions are zero on subdomain edges.
        """
        if callable(q_coeffs) or callable(diffusion):
            raise UnsupportedCoefficientError(
                "assembly requires polynomial coefficient arrays, not callables"
            )
        q = np.atleast_1d(np.asarray(q_coeffs, dtype=float))
        if hasattr(diffusion, "coeffs"):
            b = np.atleast_1d(np.asarray(diffusion.coeffs, dtype=float))
            db = np.atleast_1d(np.asarray(diffusion.dcoeffs, dtype=float)) if diffusion.dcoeffs else np.zeros(1)
        else:
            b, db = (np.atleast_1d(np.asarray(c, dtype=float)) for c in diffusion)
        for name, arr in (("drift", q), ("diffusion", b), ("diffusion derivative", db)):
            if not np.all(np.isfinite(arr)):
                raise UnsupportedCoefficientError(f"{name} coefficients must be finite polynomials")
        adv = np.polynomial.polynomial.polysub(q, db)
        degree = max(adv.size, b.size) - 1
        if n_gauss is None:
            n_gauss = self._gauss_order(degree)
        nodes = self._stacked_nodes(n_gauss)
        adv_all = _polyval(nodes, adv)
        b_all = _polyval(nodes, b)
        out = np.zeros((self.n_dof, self.n_dof))
        pos = 0
        for x, w, u, du, _, ix in self._cells(n_gauss):
            sl = slice(pos, pos + x.size)
            pos += x.size
            out[ix] += du @ ((adv_all[sl] * w) * u).T - du @ ((b_all[sl] * w) * du).T
        return out

    def integrate_poly_against_basis(self, poly_coeffs, *, n_gauss=None):
        """Vector g with g_m = int p(x) u_m(x) dx for a polynomial p."""
        p = np.atleast_1d(np.asarray(poly_coeffs, dtype=float))
        if n_gauss is None:
            n_gauss = (self.basis.shape_degree + p.size - 1) // 2 + 1
        out = np.zeros(self.n_dof)
        for x, w, u, _, dofs, _ in self._cells(n_gauss):
            out[dofs] += u @ (_polyval(x, p) * w)
        return out

    def project_initial(self, f0, *, n_gauss=None):
        """Weights of the Galerkin projection of a density f0: solve
        C w = g with g_j = int f0 u_j dx."""
        if n_gauss is None:
            n_gauss = max(self._gauss_order(0), 24)
        rhs = np.zeros(self.n_dof)
        for x, w, u, _, dofs, _ in self._cells(n_gauss):
            rhs[dofs] += u @ (np.asarray(f0(x), dtype=float) * w)
        return sla.lu_solve(self._mass_lu, rhs)

    def evaluate(self, weights, x):
        """Reconstruct f(x) = sum_m w_m u_m(x) on an arbitrary grid."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        w = np.asarray(weights, dtype=float)
        out = np.zeros_like(x)
        h = self.cover.h
        cell = np.clip(((x - self.cover.gmin) / h).astype(int), 0, self.cover.n_cells - 1)
        for k in range(self.cover.subdomains):
            mask = (cell == k) | (cell == k + 1)
            if not np.any(mask):
                continue
            xi = self.cover.to_reference(k, x[mask])
            inside = np.abs(xi) <= 1.0
            if not np.any(inside):
                continue
            xs = xi[inside]
            table = legendre_table(self.basis.local_dim - 1, xs)
            shapes = pu_mother(self.basis.smoothness, xs) * table
            sel = np.flatnonzero(mask)[inside]
            block = w[k * self.basis.local_dim:(k + 1) * self.basis.local_dim]
            out[sel] += block @ shapes
        return out

    def boundary_mass(self, weights, *, n_gauss=12):
        """Mass |f| carried by the outer half-subdomain buffer strips
        (the first and last cover cells)."""
        w = np.asarray(weights, dtype=float)
        cells = self._cells(n_gauss)
        total = 0.0
        for i in (0, self.cover.n_cells - 1):
            x, wh, u, _, dofs, _ = cells[i]
            total += float(np.abs(w[dofs] @ u) @ wh)
        return total


def assemble_mass(basis, cover):
    """Mass matrix C[j, m] = int u_m u_j dx."""
    return DiscreteSystem(basis, cover).mass


def assemble_stiffness(basis, cover, q_coeffs, diffusion, t=None):
    """One-shot stiffness assembly; prefer DiscreteSystem for repeated use."""
    return DiscreteSystem(basis, cover).assemble_stiffness(q_coeffs, diffusion, t)


def project_initial(basis, cover, f0):
    """One-shot initial projection returning the weight vector."""
    return DiscreteSystem(basis, cover).project_initial(f0)


def evaluate_pdf(basis, cover, weights, x):
    """Reconstruct the represented density on a grid."""
    return DiscreteSystem(basis, cover).evaluate(weights, x)


def cn_step(mass, a_old, a_new, w, dt):
    """Implicit trapezoid step: solve
    (C - dt/2 A(t+dt)) w+ = (C + dt/2 A(t)) w  by dense LU."""
    if dt <= 0.0:
        raise ParameterError("time step must be positive")
    lhs = mass - 0.5 * dt * a_new
    rhs = (mass + 0.5 * dt * a_old) @ np.asarray(w, dtype=float)
    try:
        out = sla.solve(lhs, rhs)
    except sla.LinAlgError as exc:
        raise StepFailureError("Crank-Nicolson system is singular") from exc
    if not np.all(np.isfinite(out)):
        raise StepFailureError("Crank-Nicolson solve produced non-finite weights")
    return out
