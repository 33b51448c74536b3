"""Zero-free seed solution of the homogeneous equation and formal powers.

The coefficient construction needs one solution g of (p g')' - q g = 0 that
never vanishes on [A, B], normalized to g(A) = 1/rho(A).  Two real-data
solutions are integrated; if the first is already bounded away from zero it
is used directly (real fast path), otherwise the combination g1 + i*g2 is
formed, which cannot vanish for real q because g1 and g2 never vanish
simultaneously.

Formal powers are the iterated weighted antiderivatives built on g; they
feed the closed-form coefficient cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.integrate import solve_ivp

from .errors import SeedError
from .grid import SampledFn, cumulative_integral, differentiate
from .liouville import LiouvilleData, SLProblem

#: prefer the real seed only when it stays this far away from zero,
#: relative to its maximum (conditioning of the 1/g^2 ladders)
_REAL_PREFERENCE = 1e-3
#: hard certificate: any accepted seed must satisfy min|g| > this * max|g|
_CERTIFICATE = 1e-12


@dataclass(frozen=True)
class SeedSolution:
    """Non-vanishing seed g with g(A) = 1/rho(A).

    ``h`` is the Robin-type constant sqrt(p(A)/r(A)) * (g'(A)/g(A)
    + rho'(A)/rho(A)) that enters every coefficient formula downstream.
    """

    g: SampledFn
    g_prime: SampledFn
    h: complex
    used_complex_combination: bool
    min_abs_g: float


def compute_seed(
    problem: SLProblem, data: LiouvilleData, tol: float = 1e-13
) -> SeedSolution:
    """Integrate the homogeneous equation and pick a zero-free seed.

    Raises :class:`SeedError` if even the complex combination comes closer
    to zero than the certificate threshold allows (possible only for
    complex q).
    """
    grid = data.grid
    p = problem.p
    q = problem.q
    q0 = q(grid.a)
    is_complex = np.iscomplexobj(np.asarray(q0)) or np.iscomplexobj(
        data.q_s.values
    )

    def rhs(y, s):
        py = p(y)
        qy = q(y)
        return [s[1] / py, qy * s[0], s[3] / py, qy * s[2]]

    y0 = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex if is_complex else float)
    rtol = max(tol, 2.3e-14)
    sol = solve_ivp(
        rhs,
        (grid.a, grid.b),
        y0,
        method="DOP853",
        t_eval=grid.points,
        rtol=rtol,
        atol=rtol,
    )
    if not sol.success:
        raise SeedError(f"homogeneous integration failed: {sol.message}")
    g1, w1, g2, w2 = sol.y
    g1[0], w1[0], g2[0], w2[0] = 1.0, 0.0, 0.0, 1.0  # initial data is exact

    rho_a = float(data.rho.values[0])
    abs_g1 = np.abs(g1)
    sign_definite = bool(np.all(g1.real > 0.0) or np.all(g1.real < 0.0))
    use_real = (
        not is_complex
        and sign_definite
        and np.min(abs_g1) > _REAL_PREFERENCE * np.max(abs_g1)
    )

    if use_real:
        g_vals = g1 / rho_a
        w_vals = w1 / rho_a
        used_complex = False
    else:
        g_vals = (g1 + 1j * g2) / rho_a
        w_vals = (w1 + 1j * w2) / rho_a
        used_complex = True

    abs_g = np.abs(g_vals)
    min_abs = float(np.min(abs_g))
    if min_abs <= _CERTIFICATE * float(np.max(abs_g)):
        idx = int(np.argmin(abs_g))
        raise SeedError(
            f"seed solution nearly vanishes at node {idx} "
            f"(y = {grid.points[idx]!r}, |g| = {min_abs:.3e})"
        )

    g = SampledFn(grid, g_vals)
    p_vals = data.p_s.values
    g_prime = SampledFn(grid, w_vals / p_vals)

    rho = data.rho.values
    rho_prime = data.rho_prime.values
    sqrt_p_over_r_a = 1.0 / float(data.sqrt_r_over_p.values[0])
    h = sqrt_p_over_r_a * (
        g_prime.values[0] / g_vals[0] + rho_prime[0] / rho[0]
    )
    h = complex(h)
    if h.imag == 0.0:
        h = h.real  # keep the real fast path when it exists
    return SeedSolution(
        g=g,
        g_prime=g_prime,
        h=h,
        used_complex_combination=used_complex,
        min_abs_g=min_abs,
    )


def seed_residual(seed: SeedSolution, data: LiouvilleData) -> float:
    """Normalized residual of (p g')' - q g on interior nodes."""
    pgp = data.p_s * seed.g_prime
    res = differentiate(pgp) - data.q_s * seed.g
    scale = max(1.0, float(np.max(np.abs((data.q_s * seed.g).values))))
    return float(np.max(np.abs(res.values[3:-3]))) / scale


@dataclass(frozen=True)
class FormalPowers:
    """Iterated antiderivative ladders Phi_k, Psi_k built on the seed.

    Phi_0 = g and Phi_k(y) ~ (y - A)^k as y -> A; in the trivial case
    p = r = 1, q = 0 they are exactly (y - A)^k.  Internally the ladders are
    stored divided by k! to delay overflow; the exposed functions carry the
    usual normalization.
    """

    K: int
    Phi: list
    Psi: list


def formal_powers(
    seed: SeedSolution, data: LiouvilleData, K: int
) -> FormalPowers:
    """Build formal powers up to degree K.

    Raises OverflowError if an exposed ladder value would exceed 1e300
    (use a smaller K).
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    grid = data.grid
    g = seed.g
    g_sq = g * g
    w_down = 1.0 / (g_sq * data.p_s)  # weight for the X-type step
    w_up = g_sq * data.r_s  # weight for the X-tilde-type step

    one = SampledFn(grid, np.ones(grid.m))
    # chain Y: odd steps use w_down, even steps use w_up
    Y = [one]
    # chain Y~: odd steps use w_up, even steps use w_down
    Yt = [one]
    for n in range(1, K + 1):
        odd = n % 2 == 1
        Y.append(cumulative_integral(Y[-1] * (w_down if odd else w_up)))
        Yt.append(cumulative_integral(Yt[-1] * (w_up if odd else w_down)))

    inv_g = 1.0 / g
    Phi = []
    Psi = []
    for k in range(K + 1):
        fk = float(factorial(k)) if k < 171 else np.inf
        src = Y[k] if k % 2 == 1 else Yt[k]
        src_t = Yt[k] if k % 2 == 1 else Y[k]
        phi_peak = fk * float(np.max(np.abs(src.values)))
        psi_peak = fk * float(np.max(np.abs(src_t.values)))
        if not np.isfinite(phi_peak) or max(phi_peak, psi_peak) > 1e300:
            raise OverflowError(
                f"formal power ladder overflows at degree {k}; use smaller K"
            )
        Phi.append(g * (src * fk))
        Psi.append(inv_g * (src_t * fk))
    return FormalPowers(K=K, Phi=Phi, Psi=Psi)
