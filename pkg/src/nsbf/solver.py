"""Truncated-series evaluation, initial-value solutions, and eigenvalues.

The evaluator assembles the solution basis

    v1(w, y) = cos(w l)/rho + 2 sum_{k} (-1)^k alpha_{2k}(y)  j_{2k}(w l)
    v2(w, y) = sin(w l)/rho + 2 sum_{k} (-1)^k alpha_{2k+1}(y) j_{2k+1}(w l)

(truncated at order ``N_used``: even indices up to N for v1, odd up to N for
v2) together with the derivative series built from the mu coefficients and
the closed-form envelope carrying G1, G2.  Because the coefficients do not
depend on the spectral parameter, a single :class:`~nsbf.coefficients.
CoefficientSet` serves every w with uniform accuracy: initial-value problems
are the combinations c1 v1 + c2 v2, and eigenvalues of two-point boundary
problems are located as roots of the characteristic function Delta(w), whose
evaluation needs the series only at the right endpoint.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bessel import spherical_jn_matrix
from .coefficients import CoefficientSet
from .grid import SampledFn, cumulative_integral, interpolate_many
from .liouville import LiouvilleData
from .seed import SeedSolution

#: eigenvalue scan step, as a fraction of the asymptotic spacing pi/b
SCAN_STEP_FACTOR = 0.2
#: bisection narrows a bracket to this width before secant takes over
BISECT_WIDTH = 1e-6
#: secant stops when the omega update drops below this (times max(1, omega))
REFINE_TOL = 1e-13
#: allowed difference between found roots and the Weyl count estimate
WEYL_SLACK = 2


@dataclass(frozen=True)
class BoundarySpec:
    """Separated two-point boundary conditions.

    ``a1 * v(A) + a2 * v'(A) = 0`` and ``b1 * v(B) + b2 * v'(B) = 0``;
    each pair must be nontrivial.
    """

    a1: float
    a2: float
    b1: float
    b2: float

    def __post_init__(self):
        if self.a1 == 0.0 and self.a2 == 0.0:
            raise ValueError("boundary pair (a1, a2) must not be (0, 0)")
        if self.b1 == 0.0 and self.b2 == 0.0:
            raise ValueError("boundary pair (b1, b2) must not be (0, 0)")

    def initial_values(self):
        """The unit-norm initial pair (u(A), u'(A)) killing the A-form."""
        nrm = float(np.hypot(self.a1, self.a2))
        return self.a2 / nrm, -self.a1 / nrm


DIRICHLET = BoundarySpec(1.0, 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class EigenResult:
    """One eigenvalue: lam = omega**2 with the refinement diagnostics.

    ``char_residual`` is the estimated distance to the true root in omega
    units, |Delta(omega) / Delta'(omega)| with the derivative taken from the
    final secant slope.
    """

    k: int
    omega: float
    lam: float
    char_residual: float
    refinement_iterations: int


class SolutionEvaluator:
    """Evaluates v1, v2, their derivatives, IVP solutions, and eigenvalues.

    Parameters
    ----------
    coeffs : CoefficientSet
    data : LiouvilleData
    seed : SeedSolution
        The three artifacts of the construction pipeline, on one grid.
    N : int, optional
        Truncation order; defaults to ``coeffs.N_opt``.  Must not exceed
        ``coeffs.N``.

    Notes
    -----
    Instances are immutable after construction and safe to share across
    threads; evaluation at distinct spectral points is independent.
    """

    def __init__(self, coeffs: CoefficientSet, data: LiouvilleData,
                 seed: SeedSolution, N: int | None = None):
        if N is None:
            N = coeffs.N_opt
        if not 0 <= N <= coeffs.N:
            raise ValueError(f"N = {N} outside [0, {coeffs.N}]")
        self.coeffs = coeffs
        self.data = data
        self.seed = seed
        self.N_used = int(N)

        k_even = np.arange(0, N + 1, 2)
        k_odd = np.arange(1, N + 1, 2)
        w_even = (2.0 * (-1.0) ** (k_even // 2))[:, None]
        w_odd = (2.0 * (-1.0) ** (k_odd // 2))[:, None]
        G1 = coeffs.G1
        G2 = coeffs.G2
        self._grid_ing = (
            data.l.values,
            data.rho.values,
            data.rho_prime.values,
            data.sqrt_r_over_p.values,
            G1,
            G2,
            w_even * coeffs.alpha[k_even],
            w_odd * coeffs.alpha[k_odd],
            w_even * coeffs.mu[k_even],
            w_odd * coeffs.mu[k_odd],
        )
        self._end_ing = tuple(
            arr[..., -1:].copy() for arr in self._grid_ing[:6]
        ) + tuple(arr[:, -1:].copy() for arr in self._grid_ing[6:])

        rho_a = float(data.rho.values[0])
        self._rho_a = rho_a
        self._gp_a = complex(seed.g_prime.values[0])
        if self._gp_a.imag == 0.0:
            self._gp_a = self._gp_a.real
        self._sqrt_p_over_r_a = 1.0 / float(data.sqrt_r_over_p.values[0])
        self._lam0 = None

    # -- basic properties ---------------------------------------------------

    @property
    def is_real_problem(self) -> bool:
        """True when p, q, r are all real-valued (eigenvalues live on the
        real lambda axis and the characteristic function is analytically
        real for real omega)."""
        return self.data.q_s.is_real

    # -- series assembly ----------------------------------------------------

    def _point_ing(self, at):
        pts = np.atleast_1d(np.asarray(at, dtype=np.float64))
        grid = self.data.grid

        def ip(arr):
            return interpolate_many(SampledFn(grid, arr), pts)

        scalars = tuple(ip(arr) for arr in self._grid_ing[:6])
        mats = tuple(
            np.stack([ip(row) for row in block]) if block.shape[0] else
            np.zeros((0, pts.size), dtype=block.dtype)
            for block in self._grid_ing[6:]
        )
        return scalars + mats

    def _eval_all(self, omega, ing):
        l, rho, rho_p, srp, G1, G2, wae, wao, wme, wmo = ing
        z = omega * l
        J = spherical_jn_matrix(z, self.N_used)
        cosz = np.cos(z)
        sinz = np.sin(z)
        Je = J[0::2]
        Jo = J[1::2]
        v1 = cosz / rho + (wae * Je).sum(axis=0)
        v2 = sinz / rho + ((wao * Jo).sum(axis=0) if wao.shape[0] else 0.0)
        s_e = (wme * Je).sum(axis=0)
        s_o = (wmo * Jo).sum(axis=0) if wmo.shape[0] else 0.0
        v1p = srp * ((G1 * cosz - omega * sinz) / rho + s_e) \
            - (rho_p / rho) * v1
        v2p = srp * ((G2 * sinz + omega * cosz) / rho + s_o) \
            - (rho_p / rho) * v2
        return v1, v2, v1p, v2p

    def _basis(self, omega, at):
        omega = complex(omega)
        if omega.imag == 0.0:
            omega = omega.real
        if omega == 0:
            raise ValueError(
                "omega = 0 is outside the series representation; "
                "use solve_ivp, which switches to the lambda = 0 basis"
            )
        if at is None:
            return self._eval_all(omega, self._grid_ing), None
        scalar = np.ndim(at) == 0
        ing = self._end_ing if (
            scalar and float(at) == self.data.grid.b
        ) else self._point_ing(at)
        return self._eval_all(omega, ing), scalar

    @staticmethod
    def _shape(arrs, scalar):
        if scalar is None:
            return arrs
        if scalar:
            return tuple(a[0] if np.ndim(a) else a for a in arrs)
        return arrs

    def eval_basis(self, omega, at=None):
        """The truncated basis pair (v1, v2) at spectral parameter omega.

        Parameters
        ----------
        omega : real or complex, nonzero
        at : None, scalar, or array of ordinates
            ``None`` evaluates on the construction grid; otherwise the
            coefficient functions are interpolated at the given points.

        Returns
        -------
        (v1, v2) : arrays (or scalars when ``at`` is scalar)
        """
        (v1, v2, _, _), scalar = self._basis(omega, at)
        return self._shape((v1, v2), scalar)

    def eval_basis_prime(self, omega, at=None):
        """Derivatives (v1', v2') of the basis pair, same conventions."""
        (_, _, v1p, v2p), scalar = self._basis(omega, at)
        return self._shape((v1p, v2p), scalar)

    def wronskian(self, omega, at=None):
        """p * (v1 v2' - v1' v2); equals omega identically for the true
        solutions, so its flatness measures the truncation error."""
        (v1, v2, v1p, v2p), scalar = self._basis(omega, at)
        if at is None:
            p = self.data.p_s.values
        else:
            pts = np.atleast_1d(np.asarray(at, dtype=np.float64))
            p = interpolate_many(self.data.p_s, pts)
        w = p * (v1 * v2p - v1p * v2)
        return self._shape((w,), scalar)[0]

    # -- initial-value problems ----------------------------------------------

    def _combination_constants(self, omega, u_A, uprime_A):
        c1 = self._rho_a * u_A
        c2 = (uprime_A - c1 * self._gp_a) * self._rho_a \
            * self._sqrt_p_over_r_a / omega
        return c1, c2

    def _lam0_basis(self):
        """Fundamental pair at lambda = 0: (g, g * int 1/(p g^2))."""
        if self._lam0 is None:
            data, seed = self.data, self.seed
            g = seed.g.values
            gp = seed.g_prime.values
            p = data.p_s.values
            integ = cumulative_integral(
                SampledFn(data.grid, 1.0 / (p * g * g))
            ).values
            u2 = g * integ
            u2p = gp * integ + 1.0 / (p * g)
            self._lam0 = (g, u2, gp, u2p)
        return self._lam0

    def solve_ivp(self, omega, u_A, uprime_A, at=None):
        """Solution of the initial-value problem on the grid.

        Returns the pair (u, u') with u(A) = ``u_A``, u'(A) = ``uprime_A``,
        assembled as c1 v1 + c2 v2 for omega != 0 and from the exact
        lambda = 0 fundamental pair g, g*int ds/(p g^2) otherwise.  When the
        problem, omega and both initial values are real the result is
        returned real even if the internal basis is complex.
        """
        demote = (
            self.is_real_problem
            and complex(omega).imag == 0.0
            and complex(u_A).imag == 0.0
            and complex(uprime_A).imag == 0.0
        )
        if complex(omega) == 0:
            g, u2, gp, u2p = self._lam0_basis()
            c1 = self._rho_a * u_A
            c2 = (uprime_A - c1 * self._gp_a) \
                * self.data.p_s.values[0] / self._rho_a
            u = c1 * g + c2 * u2
            up = c1 * gp + c2 * u2p
            if demote:
                u, up = np.real(u), np.real(up)
            if at is None:
                return u, up
            pts = np.atleast_1d(np.asarray(at, dtype=np.float64))
            grid = self.data.grid
            u_at = interpolate_many(SampledFn(grid, u), pts)
            up_at = interpolate_many(SampledFn(grid, up), pts)
            return self._shape((u_at, up_at), np.ndim(at) == 0)
        (v1, v2, v1p, v2p), scalar = self._basis(omega, at)
        c1, c2 = self._combination_constants(complex(omega), u_A, uprime_A)
        u = c1 * v1 + c2 * v2
        up = c1 * v1p + c2 * v2p
        if demote:
            # A real problem with real data has a real solution; any
            # imaginary residue comes from the complex seed combination
            # and is rounding-level, so it is dropped here.
            u, up = np.real(u), np.real(up)
        return self._shape((u, up), scalar)

    # -- eigenvalue machinery -------------------------------------------------

    def characteristic(self, omega, bc: BoundarySpec) -> complex:
        """Delta(omega) = b1 u(B) + b2 u'(B), u the unit A-side solution.

        Analytically real for real omega on a real problem (even when the
        internal seed is a complex combination); the imaginary part is then
        rounding-level residue.
        """
        u_A, up_A = bc.initial_values()
        if complex(omega) == 0:
            g, u2, gp, u2p = self._lam0_basis()
            c1 = self._rho_a * u_A
            c2 = (up_A - c1 * self._gp_a) \
                * self.data.p_s.values[0] / self._rho_a
            uB = c1 * g[-1] + c2 * u2[-1]
            upB = c1 * gp[-1] + c2 * u2p[-1]
        else:
            (v1, v2, v1p, v2p), _ = self._basis(omega, self.data.grid.b)
            c1, c2 = self._combination_constants(complex(omega), u_A, up_A)
            uB = c1 * v1 + c2 * v2
            upB = c1 * v1p + c2 * v2p
        return complex(np.asarray(bc.b1 * uB + bc.b2 * upB).item())

    def _char_real(self, omega, bc):
        return self.characteristic(omega, bc).real

    def _refine_root(self, bc, lo, hi, flo, fhi):
        """Bisection to BISECT_WIDTH, then secant to REFINE_TOL."""
        iters = 0
        while hi - lo > BISECT_WIDTH:
            mid = 0.5 * (lo + hi)
            fm = self._char_real(mid, bc)
            iters += 1
            if fm == 0.0:
                lo = hi = mid
                flo = fhi = fm
                break
            if (fm < 0.0) == (flo < 0.0):
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
        x0, f0 = lo, flo
        x1, f1 = hi, fhi
        slope = (f1 - f0) / (x1 - x0) if x1 != x0 else 0.0
        for _ in range(60):
            if f1 == f0 or x1 == x0:
                break
            slope = (f1 - f0) / (x1 - x0)
            x2 = x1 - f1 / slope
            if not lo - BISECT_WIDTH <= x2 <= hi + BISECT_WIDTH:
                x2 = 0.5 * (x0 + x1)
            iters += 1
            f2 = self._char_real(x2, bc) if x2 > 0 else self._char0(bc)
            x0, f0, x1, f1 = x1, f1, x2, f2
            if abs(x1 - x0) <= REFINE_TOL * max(1.0, abs(x1)) or f2 == 0.0:
                break
        residual = abs(f1 / slope) if slope != 0.0 else abs(f1)
        return x1, residual, iters

    def _char0(self, bc):
        return self.characteristic(0.0, bc).real

    def _scan_roots(self, bc, omega_max, step):
        n_cells = max(2, int(np.ceil(omega_max / step)))
        ws = np.linspace(0.0, omega_max, n_cells + 1)
        fs = np.empty(n_cells + 1)
        fs[0] = self._char0(bc)
        for i in range(1, n_cells + 1):
            fs[i] = self._char_real(ws[i], bc)
        found = []
        scale = max(np.max(np.abs(fs)), np.finfo(float).tiny)
        if abs(fs[0]) <= 1e-11 * scale:
            found.append((0.0, abs(fs[0]), 0))
        for i in range(n_cells):
            if fs[i] == 0.0 and ws[i] > 0.0:
                root, res, it = self._refine_root(
                    bc, ws[i], ws[i], fs[i], fs[i]
                )
                found.append((root, res, it))
            elif fs[i] * fs[i + 1] < 0.0:
                found.append(
                    self._refine_root(bc, ws[i], ws[i + 1], fs[i], fs[i + 1])
                )
        if fs[-1] == 0.0:
            found.append((ws[-1], 0.0, 0))
        return found

    def find_eigenvalues(self, bc: BoundarySpec, omega_max=None,
                         count_hint=None):
        """Eigenvalues lam = omega^2 with omega in [0, omega_max].

        The characteristic function is sampled with step
        ``SCAN_STEP_FACTOR * pi / b`` (a fifth of the asymptotic eigenvalue
        spacing in the transformed variable), sign changes are bracketed and
        refined by bisection + secant.  When the number of roots found
        disagrees with the Weyl count estimate floor(omega_max*b/pi) by more
        than ``WEYL_SLACK``, the scan is repeated once at half step and a
        warning is emitted.  With ``count_hint`` the range grows until that
        many eigenvalues are available; the list is then truncated to it.

        Only real spectra are searched: complex q is rejected.
        """
        if not self.is_real_problem:
            raise ValueError(
                "eigenvalue search requires real p, q, r "
                "(complex problems have complex spectra)"
            )
        if omega_max is None:
            if count_hint is None:
                raise ValueError("provide omega_max or count_hint")
            omega_max = (count_hint + 3) * np.pi / self.data.b
        roots = []
        if omega_max > 0:
            step = SCAN_STEP_FACTOR * np.pi / self.data.b
            roots = self._scan_roots(bc, omega_max, step)
            expected = int(np.floor(omega_max * self.data.b / np.pi))
            if abs(len(roots) - expected) > WEYL_SLACK:
                warnings.warn(
                    f"found {len(roots)} eigenvalues where the count "
                    f"estimate gives {expected}; re-scanning at half step",
                    stacklevel=2,
                )
                roots = self._scan_roots(bc, omega_max, 0.5 * step)
        if count_hint is not None:
            grow = 0
            while len(roots) < count_hint and grow < 8:
                omega_max *= 1.3
                step = SCAN_STEP_FACTOR * np.pi / self.data.b
                roots = self._scan_roots(bc, omega_max, step)
                grow += 1
        roots.sort(key=lambda t: t[0])
        deduped = []
        for item in roots:
            if deduped and abs(item[0] - deduped[-1][0]) \
                    <= 1e-10 * max(1.0, item[0]):
                continue
            deduped.append(item)
        if count_hint is not None:
            deduped = deduped[:count_hint]
        return [
            EigenResult(k=i + 1, omega=w, lam=w * w, char_residual=res,
                        refinement_iterations=it)
            for i, (w, res, it) in enumerate(deduped)
        ]

    def find_negative_eigenvalues(self, bc: BoundarySpec, lambda_floor):
        """Roots with lam in [lambda_floor, 0), scanned as omega = i*t.

        The characteristic function restricted to the imaginary omega axis
        is real for real problems; returned results carry omega = t =
        sqrt(-lam) (so lam = -omega**2 for these entries).
        """
        if not self.is_real_problem:
            raise ValueError("eigenvalue search requires real p, q, r")
        if lambda_floor >= 0:
            raise ValueError("lambda_floor must be negative")
        t_max = float(np.sqrt(-lambda_floor))
        step = min(SCAN_STEP_FACTOR * np.pi / self.data.b, t_max / 8)
        n_cells = max(2, int(np.ceil(t_max / step)))
        ts = np.linspace(0.0, t_max, n_cells + 1)
        fs = np.empty(n_cells + 1)
        fs[0] = self._char0(bc)
        for i in range(1, n_cells + 1):
            fs[i] = self.characteristic(1j * ts[i], bc).real

        def char_im(t):
            return self.characteristic(1j * t, bc).real if t > 0 \
                else self._char0(bc)

        found = []
        for i in range(n_cells):
            if fs[i] == 0.0 and ts[i] > 0.0:
                # scan node hit the root exactly; no bracket to refine
                found.append((ts[i], 0.0, 0))
            elif fs[i] * fs[i + 1] < 0.0:
                lo, hi, flo, fhi = ts[i], ts[i + 1], fs[i], fs[i + 1]
                iters = 0
                while hi - lo > BISECT_WIDTH:
                    mid = 0.5 * (lo + hi)
                    fm = char_im(mid)
                    iters += 1
                    if (fm < 0.0) == (flo < 0.0):
                        lo, flo = mid, fm
                    else:
                        hi, fhi = mid, fm
                x0, f0, x1, f1 = lo, flo, hi, fhi
                slope = (f1 - f0) / (x1 - x0) if x1 != x0 else 0.0
                for _ in range(60):
                    if f1 == f0 or x1 == x0:
                        break
                    slope = (f1 - f0) / (x1 - x0)
                    x2 = x1 - f1 / slope
                    iters += 1
                    f2 = char_im(x2)
                    x0, f0, x1, f1 = x1, f1, x2, f2
                    if abs(x1 - x0) <= REFINE_TOL * max(1.0, abs(x1)):
                        break
                res = abs(f1 / slope) if slope else abs(f1)
                found.append((x1, res, iters))
        if fs[-1] == 0.0:
            found.append((ts[-1], 0.0, 0))
        found.sort(key=lambda t: -t[0])  # most negative lambda first
        return [
            EigenResult(k=-(i + 1), omega=t, lam=-t * t, char_residual=res,
                        refinement_iterations=it)
            for i, (t, res, it) in enumerate(found)
        ]
