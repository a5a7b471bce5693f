"""Multiple stationary states at fixed frequency or fixed mass.

Every eigenpair of the linearization with eigenvalue below -omega spawns a
negative well of the action along its eigendirection; damped Newton
continuation from a seed of amplitude

    eps_j = ((-lambda_j - omega) / ||phi_j||_{p+1}^{p+1})^(1/(p-1))

(the stationary point of the scalar model
(lambda_j + omega) t^2 / 2 + ||phi_j||_{p+1}^{p+1} t^(p+1)/(p+1)) lands in
that well and certifies a concrete representative with a checkable
residual.  Fixed-mass families run the bordered Newton with the mass
constraint appended and the multiplier as an unknown.  States that agree up
to sign within a relative L2 tolerance are merged as one orbit.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import _newton, spectral
from .discretize import DiscreteSystem, GraphFunction
from .errors import (
    ConvergedToZeroError,
    FrequencyOutOfRangeError,
    GraphNLSError,
    NoConvergenceError,
    SmallnessViolatedWarning,
    ZeroMassError,
)
from .spectral import SpectralResult
from .variational import nehari_residual

__all__ = [
    "StationaryState",
    "action",
    "newton_stationary",
    "enumerate_branches",
    "normalized_family",
]

log = logging.getLogger(__name__)

DISTINCT_TOL = 1e-4
ZERO_MASS_FRACTION = 1e-6


@dataclass(frozen=True)
class StationaryState:
    psi: GraphFunction
    omega: float
    action: float
    energy: float
    mass: float
    newton_residual: float
    seed_index: int         # eigenpair that seeded the branch; -1 if explicit


def action(sys: DiscreteSystem, psi, omega: float) -> float:
    """Action at frequency omega: energy plus (omega/2) mass^2."""
    x = sys._resolve(psi)
    return sys.energy(x) + 0.5 * omega * float(x @ (sys.M_red @ x))


def _state_from(sys, x, omega, residual, seed_index) -> StationaryState:
    E = sys.energy(x)
    m = sys.mass_norm(x)
    return StationaryState(
        psi=sys.function(x),
        omega=omega,
        action=E + 0.5 * omega * m * m,
        energy=E,
        mass=m,
        newton_residual=residual,
        seed_index=seed_index,
    )


def newton_stationary(
    sys: DiscreteSystem,
    omega: float,
    seed,
    l_h: float | None = None,
    tol_rel: float = 1e-10,
    seed_index: int = -1,
) -> StationaryState:
    """Damped Newton for the stationary equation at fixed frequency.

    Valid frequencies are 0 < omega < -l_h; outside that range the zero
    function is the only solution.  A run that collapses below a mass of
    ZERO_MASS_FRACTION times the seed mass raises ConvergedToZeroError.
    """
    if l_h is None:
        l_h, _ = spectral.bottom_of_spectrum(sys)
    if not 0.0 < omega < -l_h:
        raise FrequencyOutOfRangeError(
            f"omega = {omega} outside (0, {-l_h:g}): only the zero state exists"
        )
    x0 = sys._resolve(seed)
    seed_mass = sys.mass_norm(x0)
    if seed_mass == 0.0:
        raise ConvergedToZeroError("zero seed is a stationary point of Newton")
    res = _newton.solve_fixed_frequency(sys, omega, x0, tol_rel=tol_rel)
    if sys.mass_norm(res.x) < ZERO_MASS_FRACTION * max(1.0, seed_mass):
        raise ConvergedToZeroError("Newton collapsed onto the trivial solution")
    return _state_from(sys, res.x, omega, res.residual, seed_index)


def _aligned_distance(sys, a: np.ndarray, b: np.ndarray) -> float:
    """Relative M-distance after sign alignment; 0 for the same orbit."""
    sign = 1.0 if float(a @ (sys.M_red @ b)) >= 0 else -1.0
    num = sys.mass_norm(a - sign * b)
    den = max(sys.mass_norm(a), sys.mass_norm(b), 1e-300)
    return num / den


def _deduplicate(sys, states: list[StationaryState]) -> list[StationaryState]:
    kept: list[StationaryState] = []
    for s in states:
        if all(_aligned_distance(sys, s.psi.values, k.psi.values) >= DISTINCT_TOL
               for k in kept):
            kept.append(s)
    return kept


def enumerate_branches(
    sys: DiscreteSystem,
    omega: float,
    spec: SpectralResult,
    tol_rel: float = 1e-10,
) -> list[StationaryState]:
    """Distinct nontrivial stationary states at frequency omega.

    One +/- seed pair per eigenvalue below -omega; converged duplicates and
    states without a negative action are dropped (per-seed failures are
    logged, never fatal).  Returns states sorted by action.
    """
    if omega <= 0:
        raise FrequencyOutOfRangeError(f"omega = {omega} must be positive")
    found: list[StationaryState] = []
    for j, (lam, phi) in enumerate(spec.eigenpairs):
        if lam >= -omega:
            continue
        gamma = sys.lp1(phi.values)
        eps = ((-lam - omega) / gamma) ** (1.0 / (sys.p - 1.0))
        for sign in (+1.0, -1.0):
            try:
                st = newton_stationary(
                    sys, omega, sign * eps * phi.values,
                    l_h=spec.l_h, tol_rel=tol_rel, seed_index=j,
                )
            except (NoConvergenceError, ConvergedToZeroError) as exc:
                log.warning("seed %+d*phi_%d at omega=%g failed: %s", sign, j, omega, exc)
                continue
            if st.action >= 0:
                log.warning("seed %+d*phi_%d converged to nonnegative action %g",
                            sign, j, st.action)
                continue
            found.append(st)
    distinct = _deduplicate(sys, found)
    return sorted(distinct, key=lambda s: s.action)


def normalized_family(
    sys: DiscreteSystem,
    mu: float,
    spec: SpectralResult,
    tol_rel: float = 1e-12,
) -> list[StationaryState]:
    """Distinct stationary states of prescribed mass mu, seeded per eigenpair.

    Keeps converged states with negative energy and multiplier inside
    (0, -l_h); a converged nonpositive multiplier signals that mu is outside
    the small-mass regime and fires SmallnessViolatedWarning.
    """
    if not mu > 0:
        raise ZeroMassError(f"mass {mu} must be positive")
    if spec.k_negative < 1:
        raise GraphNLSError("normalized families require a negative eigenvalue")
    found: list[StationaryState] = []
    for j, (lam, phi) in enumerate(spec.eigenpairs):
        if lam >= 0:
            continue
        seed = (mu / sys.mass_norm(phi.values)) * phi.values
        try:
            res = _newton.solve_fixed_mass(sys, mu, seed, -lam, tol_rel=tol_rel)
        except NoConvergenceError as exc:
            log.warning("normalized seed phi_%d at mu=%g failed: %s", j, mu, exc)
            continue
        st = _state_from(sys, res.x, res.omega, res.residual, j)
        if st.omega <= 0:
            warnings.warn(
                f"seed {j}: converged multiplier {st.omega:.3e} <= 0; mass "
                f"mu = {mu} is outside the small-mass regime",
                SmallnessViolatedWarning,
            )
            continue
        if st.omega >= -spec.l_h or st.energy >= 0:
            log.warning("normalized seed phi_%d rejected (omega=%g, energy=%g)",
                        j, st.omega, st.energy)
            continue
        found.append(st)
    distinct = _deduplicate(sys, found)
    return sorted(distinct, key=lambda s: s.energy)


def stationarity_residual(sys: DiscreteSystem, psi, omega: float) -> float:
    """Euclidean norm of (K+B) x + omega M x + N(x), for verification."""
    x = sys._resolve(psi)
    F, _, _ = _newton._residual_parts(sys, x, omega)
    return float(np.linalg.norm(F))


def identity_residual(sys: DiscreteSystem, psi, omega: float) -> float:
    """Relative defect of the multiplier identity at (psi, omega)."""
    return nehari_residual(sys, psi, omega)
