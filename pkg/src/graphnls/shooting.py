"""Exact stationary states on star graphs with an attractive delta vertex.

On a half-line the decaying solutions of psi'' = omega psi + |psi|^(p-1) psi
form a one-parameter family: for omega > 0

    phi(x) = ((p+1) omega / 2)^(1/(p-1)) * sinh(beta x + a)^(-2/(p-1)),
    beta = (p-1) sqrt(omega) / 2,  a > 0,

and for omega = 0 (subcritical p < 5 only)

    phi(x) = (2(p+1)/(p-1)^2)^(1/(p-1)) * (x + b)^(-2/(p-1)),  b > 0.

Both satisfy the pointwise decay identity
phi'^2 = omega phi^2 + 2 phi^(p+1)/(p+1), and the logarithmic derivative at
the vertex is phi'(0)/phi(0) = -sqrt(omega) coth(a), independent of p.  On
an E-edge star with a delta vertex of strength alpha < 0, the symmetric
glued state therefore exists exactly for 0 < omega < (alpha/E)^2, with the
shift solving coth(a) = -alpha / (E sqrt(omega)).  The matching is done by a
safeguarded Newton iteration on t = tanh(a) in (0, 1), which conditions
well as omega approaches the upper end of its range.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (
    DivergentMassError,
    FrequencyOutOfRangeError,
    InsufficientSamplesError,
    NegativeOmegaError,
    NoConvergenceError,
    SupercriticalZeroFrequencyError,
)

__all__ = [
    "HalflineProfile",
    "ShootingSolution",
    "MassFrequencyCurve",
    "BifurcationFit",
    "halfline_state",
    "halfline_tail_mass",
    "solve_star_delta",
    "mass_frequency_curve",
    "check_bifurcation",
    "star_spectrum_bottom",
    "star_eigenfunction_lp1",
]


@dataclass(frozen=True)
class HalflineProfile:
    """One decaying half-line profile; ``shift`` is a (omega>0) or b (omega=0)."""

    omega: float
    p: float
    shift: float

    def __post_init__(self):
        if self.omega < 0:
            raise NegativeOmegaError(f"omega = {self.omega} < 0 admits no decaying state")
        if self.omega == 0 and self.p >= 5:
            raise SupercriticalZeroFrequencyError(
                f"p = {self.p} >= 5: the only zero-frequency half-line state is 0"
            )
        if not self.shift > 0:
            raise FrequencyOutOfRangeError(f"shift {self.shift} must be positive")
        if not self.p > 1:
            raise FrequencyOutOfRangeError(f"exponent p = {self.p} must exceed 1")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.omega > 0:
            beta = 0.5 * (self.p - 1.0) * math.sqrt(self.omega)
            amp = ((self.p + 1.0) * self.omega / 2.0) ** (1.0 / (self.p - 1.0))
            u = beta * x + self.shift
            # sinh(u)^(-2/(p-1)) in log space; u > 0, no overflow for large x
            log_sinh = u + np.log1p(-np.exp(-2.0 * u)) - math.log(2.0)
            return amp * np.exp(-2.0 / (self.p - 1.0) * log_sinh)
        amp = (2.0 * (self.p + 1.0) / (self.p - 1.0) ** 2) ** (1.0 / (self.p - 1.0))
        return amp * (x + self.shift) ** (-2.0 / (self.p - 1.0))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.omega > 0:
            beta = 0.5 * (self.p - 1.0) * math.sqrt(self.omega)
            return -math.sqrt(self.omega) / np.tanh(beta * x + self.shift) * self.value(x)
        return -2.0 / ((self.p - 1.0) * (x + self.shift)) * self.value(x)

    def decay_identity_residual(self, x):
        """phi'^2 - omega phi^2 - 2 phi^(p+1)/(p+1); zero for exact profiles."""
        v = self.value(x)
        d = self.derivative(x)
        return d**2 - self.omega * v**2 - 2.0 * v ** (self.p + 1.0) / (self.p + 1.0)


def halfline_state(omega: float, p: float, shift: float, x):
    """Value and derivative of the decaying half-line profile at x >= 0."""
    prof = HalflineProfile(omega, p, shift)
    return prof.value(x), prof.derivative(x)


def halfline_tail_mass(omega: float, p: float, shift: float) -> float:
    """Squared L2 norm of the half-line profile.

    p = 3, omega > 0 has the closed form 2 sqrt(omega) (coth(shift) - 1);
    omega = 0 integrates to a power law; anything else goes through adaptive
    quadrature split at 10/sqrt(omega) where the tail turns exponential.
    """
    prof = HalflineProfile(omega, p, shift)
    if omega == 0:
        expo = 4.0 / (p - 1.0)
        if expo <= 1.0:
            raise DivergentMassError(
                f"zero-frequency profile with p = {p} >= 5 is not square integrable"
            )
        amp = (2.0 * (p + 1.0) / (p - 1.0) ** 2) ** (1.0 / (p - 1.0))
        return amp**2 * shift ** (1.0 - expo) / (expo - 1.0)
    if p == 3.0:
        return 2.0 * math.sqrt(omega) * (1.0 / math.tanh(shift) - 1.0)
    split = 10.0 / math.sqrt(omega)
    f = lambda x: float(prof.value(x)) ** 2
    head, _ = quad(f, 0.0, split, epsabs=1e-12, epsrel=1e-12, limit=200)
    tail, _ = quad(f, split, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)
    return head + tail


@dataclass(frozen=True)
class ShootingSolution:
    """Symmetric stationary star state glued from identical half-line profiles."""

    edge_count: int
    alpha: float
    p: float
    omega: float
    shifts: tuple[float, ...]
    vertex_value: float
    total_mass: float      # L2 norm over the whole star
    flux_residual: float
    profile: HalflineProfile

    @property
    def shift(self) -> float:
        return self.shifts[0]

    @property
    def mass_squared(self) -> float:
        return self.total_mass**2

    def value(self, x):
        """Profile value at distance x from the vertex (any edge)."""
        return self.profile.value(x)


def star_spectrum_bottom(edge_count: int, alpha: float) -> float:
    """Bottom of the spectrum of the E-edge star with one delta vertex.

    The attractive vertex binds a single exponential mode e^(-kappa x) per
    edge with kappa = -alpha/E, so the bottom is -(alpha/E)^2; a repulsive
    or Kirchhoff vertex binds nothing and the bottom is 0.
    """
    if alpha >= 0:
        return 0.0
    return -((alpha / edge_count) ** 2)


def star_eigenfunction_lp1(edge_count: int, alpha: float, p: float) -> float:
    """||phi0||_{p+1}^{p+1} of the normalized linear ground state of the star."""
    if alpha >= 0:
        raise FrequencyOutOfRangeError("no linear ground state for alpha >= 0")
    kappa = -alpha / edge_count
    c = math.sqrt(2.0 * kappa / edge_count)
    return edge_count * c ** (p + 1.0) / ((p + 1.0) * kappa)


def _match_shift(edge_count: int, alpha: float, omega: float, t0: float | None) -> float:
    """Safeguarded Newton on t = tanh(a) for E phi'(0) = alpha phi(0).

    The residual r(t) = -E sqrt(omega)/t - alpha is increasing on (0, 1) and
    brackets its root strictly inside, so Newton steps that leave the
    bracket fall back to bisection.
    """
    sw = math.sqrt(omega)
    lo, hi = 1e-300, 1.0
    t = 0.5 if t0 is None else min(max(t0, 1e-6), 1 - 1e-6)
    for _ in range(100):
        r = -edge_count * sw / t - alpha
        if abs(r) <= 1e-14 * (abs(alpha) + edge_count * sw):
            return math.atanh(t)
        if r > 0:
            hi = t
        else:
            lo = t
        drdt = edge_count * sw / (t * t)
        t_new = t - r / drdt
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        t = t_new
    raise NoConvergenceError("vertex matching did not converge")


def solve_star_delta(
    edge_count: int,
    alpha: float,
    p: float,
    omega: float,
    t0: float | None = None,
) -> ShootingSolution:
    """Exact symmetric stationary state on the E-star with delta strength alpha.

    Requires alpha < 0 and 0 < omega < (alpha/E)^2; outside that range the
    only solution is zero and FrequencyOutOfRangeError is raised.
    """
    if edge_count < 1:
        raise FrequencyOutOfRangeError("edge count must be at least 1")
    if alpha >= 0:
        raise FrequencyOutOfRangeError(
            f"alpha = {alpha} >= 0 binds no state; attractive vertex required"
        )
    top = star_spectrum_bottom(edge_count, alpha)
    if not 0.0 < omega < -top:
        raise FrequencyOutOfRangeError(
            f"omega = {omega} outside (0, {-top}): no nontrivial state"
        )
    a = _match_shift(edge_count, alpha, omega, t0)
    prof = HalflineProfile(omega, p, a)
    v0 = float(prof.value(0.0))
    d0 = float(prof.derivative(0.0))
    flux_residual = abs(edge_count * d0 - alpha * v0)
    msq = edge_count * halfline_tail_mass(omega, p, a)
    return ShootingSolution(
        edge_count=edge_count,
        alpha=alpha,
        p=p,
        omega=omega,
        shifts=(a,) * edge_count,
        vertex_value=v0,
        total_mass=math.sqrt(msq),
        flux_residual=flux_residual,
        profile=prof,
    )


@dataclass(frozen=True)
class MassFrequencyCurve:
    edge_count: int
    alpha: float
    p: float
    omegas: np.ndarray
    mass_squared: np.ndarray

    def rows(self):
        return list(zip(self.omegas.tolist(), self.mass_squared.tolist()))


def mass_frequency_curve(
    edge_count: int,
    alpha: float,
    p: float,
    omega_grid,
    jobs: int = 1,
) -> MassFrequencyCurve:
    """m(omega) = squared mass of the star state over a frequency grid."""
    omegas = np.asarray(omega_grid, dtype=float)

    def one(om: float) -> float:
        return solve_star_delta(edge_count, alpha, p, float(om)).mass_squared

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            msq = list(pool.map(one, omegas))
    else:
        msq = [one(om) for om in omegas]
    return MassFrequencyCurve(edge_count, alpha, p, omegas, np.asarray(msq))


@dataclass(frozen=True)
class BifurcationFit:
    slope: float
    expected_slope: float
    ratio_at_closest: float
    window_points: int
    slope_ok: bool
    ratio_ok: bool

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.ratio_ok


def check_bifurcation(
    curve: MassFrequencyCurve,
    l_h: float,
    phi0_lp1_norm: float,
    window: float = 0.12,
    slope_rtol: float = 0.02,
    ratio_rtol: float = 0.05,
) -> BifurcationFit:
    """Fit m(omega) against its small-amplitude leading term near -l_h.

    The branch that detaches from the zero solution at the bottom of the
    spectrum has m(omega) ~ ((-(omega + l_h)) / ||phi0||_{p+1}^{p+1})^(2/(p-1)),
    so on a log-log plot of m against -(omega + l_h) the slope tends to
    2/(p-1) and the ratio to the leading term tends to 1.  Points with
    -(omega + l_h) <= window * |l_h| are used for the fit.
    """
    gap = -(curve.omegas + l_h)
    mask = (gap > 0) & (gap <= window * abs(l_h))
    if int(mask.sum()) < 4:
        raise InsufficientSamplesError(
            f"{int(mask.sum())} samples with -(omega + l_h) <= {window * abs(l_h):g}; "
            "at least 4 required"
        )
    gaps = gap[mask]
    msq = curve.mass_squared[mask]
    slope = float(np.polyfit(np.log(gaps), np.log(msq), 1)[0])
    expected = 2.0 / (curve.p - 1.0)
    closest = int(np.argmin(gaps))
    leading = (gaps[closest] / phi0_lp1_norm) ** expected
    ratio = float(msq[closest] / leading)
    return BifurcationFit(
        slope=slope,
        expected_slope=expected,
        ratio_at_closest=ratio,
        window_points=int(mask.sum()),
        slope_ok=abs(slope - expected) <= slope_rtol * expected,
        ratio_ok=abs(ratio - 1.0) <= ratio_rtol,
    )
