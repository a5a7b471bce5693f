"""Damped Newton solvers for the discrete stationary equation.

Fixed frequency: F(x) = (K+B) x + omega M x + N(x) = 0 with the lumped
defocusing force N.  Fixed mass: the bordered system in (x, omega) that
appends the constraint (x' M x - mu^2)/2 = 0 and the multiplier column M x;
its steps are formed by block elimination so the sparse factorization only
ever sees the banded Jacobian.

Globalization is affine-invariant damping: a step is accepted when the
simplified Newton correction at the trial point (computed with the current
factorization) contracts, which is far more robust for stiff FEM systems
than monitoring the raw residual norm, whose rows scale with 1/h.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .discretize import DiscreteSystem
from .errors import NoConvergenceError

# a Newton step damped below this makes no useful progress; bail out fast
# so continuation ladders can shorten their step instead
_MIN_DAMPING = 1e-4
_MAX_TINY_STEPS = 2


@dataclass
class NewtonResult:
    x: np.ndarray
    omega: float
    residual: float
    iterations: int


def _residual(sys: DiscreteSystem, x, omega):
    Ax = sys.operator @ x
    Mx = sys.M_red @ x
    Nx = sys.nonlinear_force(x)
    F = Ax + omega * Mx + Nx
    scale = max(
        1.0,
        float(np.linalg.norm(Ax))
        + abs(omega) * float(np.linalg.norm(Mx))
        + float(np.linalg.norm(Nx)),
    )
    return F, Mx, scale


def _jacobian(sys: DiscreteSystem, x, omega):
    diag_full = sys.force_jacobian_diag(x)
    D = sparse.diags_array(diag_full, format="csr")
    C = sys.constraint_basis
    if sys._identity_basis:
        Dr = D
    else:
        Dr = (C.T @ D @ C).tocsr()
    return (sys.operator + omega * sys.M_red + Dr).tocsc()


def solve_fixed_frequency(
    sys: DiscreteSystem,
    omega: float,
    x0,
    tol_rel: float = 1e-10,
    max_iter: int = 60,
) -> NewtonResult:
    """Newton on F(x) = 0 at fixed omega; raises NoConvergenceError."""
    x = np.array(x0, dtype=float, copy=True)
    F, _, scale = _residual(sys, x, omega)
    tiny_steps = 0
    for it in range(1, max_iter + 1):
        fnorm = float(np.linalg.norm(F))
        if fnorm <= tol_rel * scale:
            return NewtonResult(x, omega, fnorm, it - 1)
        J = _jacobian(sys, x, omega)
        try:
            lu = splu(J)
        except RuntimeError as exc:
            raise NoConvergenceError(f"singular Jacobian: {exc}") from exc
        step = -lu.solve(F)
        snorm = float(np.linalg.norm(step))
        lam = 1.0
        accepted = False
        while lam >= _MIN_DAMPING:
            xn = x + lam * step
            Fn, _, scale_n = _residual(sys, xn, omega)
            corr = -lu.solve(Fn)
            cn = float(np.linalg.norm(corr))
            if np.isfinite(cn) and cn <= (1.0 - 0.5 * lam) * snorm:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise NoConvergenceError("Newton damping stalled (fixed frequency)")
        tiny_steps = tiny_steps + 1 if lam <= 8 * _MIN_DAMPING else 0
        if tiny_steps > _MAX_TINY_STEPS:
            raise NoConvergenceError("Newton crawling (fixed frequency)")
        x, F, scale = xn, Fn, scale_n
    fnorm = float(np.linalg.norm(F))
    if fnorm <= tol_rel * scale:
        return NewtonResult(x, omega, fnorm, max_iter)
    raise NoConvergenceError(
        f"no convergence in {max_iter} Newton steps (residual {fnorm:.3e})"
    )


def _constrained_residual(sys, x, omega, mu):
    F, Mx, scale = _residual(sys, x, omega)
    c = 0.5 * (float(x @ Mx) - mu * mu)
    return F, c, Mx, max(scale, mu * mu)


def solve_fixed_mass(
    sys: DiscreteSystem,
    mu: float,
    x0,
    omega0: float,
    tol_rel: float = 1e-12,
    max_iter: int = 60,
) -> NewtonResult:
    """Bordered Newton for a stationary state with prescribed mass mu.

    The bordered matrix [[J, Mx], [Mx', 0]] is factored directly; it stays
    well conditioned where J alone degenerates (the branch tangent near a
    vanishing multiplier), which is exactly the regime threshold detection
    cares about.
    """
    n = sys.n_dofs
    x = np.array(x0, dtype=float, copy=True)
    omega = float(omega0)
    F, c, Mx, scale = _constrained_residual(sys, x, omega, mu)
    tiny_steps = 0

    for it in range(1, max_iter + 1):
        fnorm = float(np.sqrt(np.linalg.norm(F) ** 2 + c * c))
        if fnorm <= tol_rel * scale:
            return NewtonResult(x, omega, fnorm, it - 1)
        J = _jacobian(sys, x, omega)
        col = sparse.csc_array(Mx.reshape(-1, 1))
        row = sparse.csc_array(Mx.reshape(1, -1))
        bordered = sparse.bmat([[J, col], [row, None]], format="csc")
        try:
            lu = splu(bordered)
        except RuntimeError as exc:
            raise NoConvergenceError(f"singular bordered Jacobian: {exc}") from exc
        step = -lu.solve(np.concatenate([F, [c]]))
        snorm = float(np.linalg.norm(step))
        lam = 1.0
        accepted = False
        while lam >= _MIN_DAMPING:
            xn = x + lam * step[:n]
            on = omega + lam * float(step[n])
            Fn, cn, Mxn, scale_n = _constrained_residual(sys, xn, on, mu)
            corr = lu.solve(np.concatenate([Fn, [cn]]))
            cnorm = float(np.linalg.norm(corr))
            if np.isfinite(cnorm) and cnorm <= (1.0 - 0.5 * lam) * snorm:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            raise NoConvergenceError("Newton damping stalled (fixed mass)")
        tiny_steps = tiny_steps + 1 if lam <= 8 * _MIN_DAMPING else 0
        if tiny_steps > _MAX_TINY_STEPS:
            raise NoConvergenceError("Newton crawling (fixed mass)")
        x, omega, F, c, Mx, scale = xn, on, Fn, cn, Mxn, scale_n

    fnorm = float(np.sqrt(np.linalg.norm(F) ** 2 + c * c))
    if fnorm <= tol_rel * scale:
        return NewtonResult(x, omega, fnorm, max_iter)
    raise NoConvergenceError(
        f"no convergence in {max_iter} bordered Newton steps (residual {fnorm:.3e})"
    )
