"""Mass-constrained and global energy minimization.

The fixed-mass solver is projected gradient descent on the mass sphere
{ ||x||_M = mu }: each step moves against the M-preconditioned tangential
gradient with a Barzilai-Borwein initial step and Armijo backtracking on
the energy, then renormalizes back to the sphere.  Once the tangential
residual is small the iterate is handed to a bordered Newton polish, which
shares the termination criterion (tangential gradient M-norm below the
tolerance) but reaches it in a handful of sparse solves.

The multiplier of a state is recovered from the stationarity identity
omega = -(Q + ||psi||_{p+1}^{p+1}) / mass^2, the existence threshold is
located by bisection on the sign of omega(mu), and the global minimum is an
unconstrained descent from the scaled linear ground state.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _newton, spectral
from .discretize import (
    AdaptiveTruncation,
    DiscreteSystem,
    FixedTruncation,
    GraphFunction,
    TruncatedGraph,
    assemble,
    truncate,
)
from .errors import (
    GraphNLSError,
    MaxIterationsError,
    NoConvergenceError,
    NoDescentError,
    NoSignChangeError,
    NonNegativeSpectrumWarning,
    SupercriticalExponentError,
    TruncationWarning,
    ZeroMassError,
)
from .graphs import MetricGraph

__all__ = [
    "SolveOptions",
    "GroundStateResult",
    "TauPoint",
    "TauCurve",
    "ThresholdEstimate",
    "GlobalMinimum",
    "lagrange_multiplier",
    "minimize_fixed_mass",
    "tau_curve",
    "detect_threshold",
    "threshold_with_truncation",
    "minimize_global",
    "nehari_residual",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-8          # on the tangential gradient M-norm, scaled by max(1,|E|)
    max_iter: int = 50_000
    armijo: float = 1e-4
    newton_polish: bool = True
    # hand over to Newton once descent has localized the basin; the M-metric
    # gradient flow is O(1/h^2) stiff, so it should not grind out the tail
    polish_trigger: float = 3e-2
    # reject polish results further than this relative M-distance from the
    # iterate (a sign flip sits at distance 2)
    polish_locality: float = 1.5


@dataclass(frozen=True)
class GroundStateResult:
    psi: GraphFunction
    tau: float
    omega: float
    mu: float
    iterations: int
    grad_residual: float
    boundary_mass_fraction: float
    energy_monotone: bool = True
    polished: bool = False


@dataclass(frozen=True)
class TauPoint:
    mu: float
    tau: float
    omega: float
    grad_residual: float
    boundary_mass_fraction: float
    ok: bool = True
    error: str = ""


@dataclass(frozen=True)
class TauCurve:
    rows: tuple[TauPoint, ...]

    @property
    def mus(self):
        return np.array([r.mu for r in self.rows])

    @property
    def taus(self):
        return np.array([r.tau for r in self.rows])

    @property
    def omegas(self):
        return np.array([r.omega for r in self.rows])


@dataclass(frozen=True)
class ThresholdEstimate:
    mu1: float
    method: str
    bracket: tuple[float, float]
    notes: str = ""


@dataclass(frozen=True)
class GlobalMinimum:
    psi: GraphFunction
    tau_min: float
    mass: float
    iterations: int = 0


def lagrange_multiplier(sys: DiscreteSystem, psi) -> float:
    """Multiplier omega = -(Q + ||psi||_{p+1}^{p+1}) / mass^2."""
    x = sys._resolve(psi)
    msq = float(x @ (sys.M_red @ x))
    if msq <= 0.0:
        raise ZeroMassError("multiplier is undefined for the zero function")
    return -(sys.quadratic_form(x) + sys.lp1(x)) / msq


def nehari_residual(sys: DiscreteSystem, psi, omega: float) -> float:
    """Relative defect of Q + omega mass^2 + ||psi||_{p+1}^{p+1} = 0."""
    x = sys._resolve(psi)
    Q = sys.quadratic_form(x)
    msq = float(x @ (sys.M_red @ x))
    lp1 = sys.lp1(x)
    return abs(Q + omega * msq + lp1) / max(abs(Q) + msq + lp1, 1e-300)


def _auto_init(sys: DiscreteSystem, mu: float) -> np.ndarray:
    l_h, phi0 = spectral.bottom_of_spectrum(sys)
    if l_h >= -1e-12:
        warnings.warn(
            "bottom of the spectrum is nonnegative; no constrained minimizer "
            "is expected on a noncompact graph",
            NonNegativeSpectrumWarning,
        )
    x = phi0.values
    return (mu / sys.mass_norm(x)) * x


def _tangential(sys: DiscreteSystem, x, grad, musq):
    """M-preconditioned gradient projected onto the sphere tangent space."""
    d = sys.mass_solve(grad)
    lam = float(x @ grad) / musq
    gt = d - lam * x
    gt_sq = max(float(gt @ grad), 0.0)  # equals <gt, gt>_M by M-orthogonality
    return gt, math.sqrt(gt_sq), gt_sq


def minimize_fixed_mass(
    sys: DiscreteSystem,
    mu: float,
    init=None,
    opts: SolveOptions | None = None,
    omega_hint: float | None = None,
) -> GroundStateResult:
    """Minimize the energy over functions of prescribed mass mu.

    ``init`` warm-starts the descent (a zero or missing init falls back to
    the scaled linear ground state); ``omega_hint`` carries the multiplier
    of a neighbouring solve and makes warm-started Newton polishing robust.
    Cold starts far from the small-mass regime are reached by continuation
    along the mass ladder before the main descent runs.
    """
    if not mu > 0:
        raise ZeroMassError(f"mass {mu} must be positive")
    opts = opts or SolveOptions()

    if init is not None:
        x0 = sys._resolve(init)
        if sys.mass_norm(x0) <= 1e-14 * mu:
            x0 = None
        else:
            x0 = x0.copy()
    else:
        x0 = None
    if x0 is None and opts.newton_polish:
        x0, omega_hint = _continuation_init(sys, mu, opts)
    if x0 is None:
        x0 = _auto_init(sys, mu)
    return _descend_fixed_mass(sys, mu, x0, opts, omega_hint)


def _continuation_init(sys, mu, opts):
    """Walk the ground-state branch from the small-mass regime up to mu.

    Returns a warm iterate and its multiplier, or (None, None) when even the
    small-mass start is unavailable (nonnegative spectrum bottom).
    """
    l_h, phi0 = spectral.bottom_of_spectrum(sys)
    if l_h >= -1e-12:
        return None, None
    gamma = sys.lp1(phi0.values)
    # mass at which the multiplier has moved ~30% into (0, -l_h): the
    # scaled eigenfunction is still an excellent seed there
    mu_small = (0.3 * (-l_h) / gamma) ** (1.0 / (sys.p - 1.0))
    if mu <= mu_small:
        return (mu / sys.mass_norm(phi0.values)) * phi0.values, -l_h
    x = (mu_small / sys.mass_norm(phi0.values)) * phi0.values
    try:
        res = _newton.solve_fixed_mass(sys, mu_small, x, -l_h)
    except NoConvergenceError:
        return None, None
    x, omega, m_cur = res.x, res.omega, mu_small
    budget = 120
    while m_cur < mu and budget > 0:
        m_next = min(mu, 1.5 * m_cur)
        advanced = False
        while budget > 0 and not advanced:
            budget -= 1
            try:
                res = _newton.solve_fixed_mass(sys, m_next, (m_next / m_cur) * x, omega)
                x, omega, m_cur = res.x, res.omega, m_next
                advanced = True
            except NoConvergenceError:
                m_mid = math.sqrt(m_cur * m_next)
                if m_mid / m_cur < 1.0 + 1e-4:
                    budget = 0  # branch will not advance; hand over best iterate
                else:
                    m_next = m_mid
    return (mu / m_cur) * x, omega


def _descend_fixed_mass(sys, mu, x0, opts, omega_hint):
    musq = mu * mu
    x = (mu / sys.mass_norm(x0)) * x0
    E = sys.energy(x)
    grad = sys.energy_gradient(x)
    gt, gt_norm, gt_sq = _tangential(sys, x, grad, musq)

    monotone = True
    polished = False
    step = None
    prev_x = prev_gt = None
    polish_barrier = np.inf

    def try_polish(x, E):
        """Bordered Newton from the current iterate; None when not usable."""
        try:
            omega0 = omega_hint if omega_hint is not None else lagrange_multiplier(sys, x)
            res = _newton.solve_fixed_mass(sys, mu, x, omega0)
        except (NoConvergenceError, ZeroMassError):
            return None
        En = sys.energy(res.x)
        gradn = sys.energy_gradient(res.x)
        _, gtn_norm, _ = _tangential(sys, res.x, gradn, musq)
        moved = sys.mass_norm(res.x - x) / mu
        if (
            gtn_norm <= opts.tol * max(1.0, abs(En))
            and En <= E + 1e-9 * (1.0 + abs(E))
            and moved <= opts.polish_locality
        ):
            return res.x, En, gtn_norm, res.iterations
        return None

    it = 0
    next_scheduled = 20
    while it < opts.max_iter:
        tol_scaled = opts.tol * max(1.0, abs(E))
        if gt_norm <= tol_scaled:
            break

        want_polish = opts.newton_polish and (
            it >= next_scheduled
            or (
                gt_norm <= opts.polish_trigger * max(1.0, abs(E))
                and gt_norm < polish_barrier
            )
        )
        if want_polish:
            polish = try_polish(x, E)
            if polish is not None:
                x, E, gt_norm, extra = polish
                polished = True
                it += extra
                break
            # polish declined; only retry after real progress
            polish_barrier = gt_norm / 10.0
            next_scheduled = max(next_scheduled * 3, it + 1)

        if step is None:
            # curvature-matched first step along the tangential direction
            h_gt = sys.operator @ gt + sys.from_full(
                sys.force_jacobian_diag(x) * sys.to_full(gt)
            )
            curv = float(gt @ h_gt)
            step = gt_sq / curv if curv > 0 else 1e-3
        elif prev_x is not None:
            dx = x - prev_x
            dg = gt - prev_gt
            denom = float(dx @ dg)
            step = float(dx @ dx) / denom if denom > 0 else step * 2.0
        step = min(max(step, 1e-14), 1e14)

        accepted = False
        s = step
        for _ in range(70):
            z = x - s * gt
            mz = sys.mass_norm(z)
            if mz > 0:
                xn = (mu / mz) * z
                En = sys.energy(xn)
                if np.isfinite(En) and En <= E - opts.armijo * s * gt_sq:
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            if opts.newton_polish:
                polish = try_polish(x, E)
                if polish is not None:
                    x, E, gt_norm, extra = polish
                    polished = True
                    it += extra
                    break
            raise NoDescentError(
                f"line search failed at iteration {it} (|gt| = {gt_norm:.3e})"
            )

        monotone = monotone and (En <= E + 1e-15 * (1.0 + abs(E)))
        prev_x, prev_gt = x, gt
        x, E = xn, En
        grad = sys.energy_gradient(x)
        gt, gt_norm, gt_sq = _tangential(sys, x, grad, musq)
        it += 1
    else:
        raise MaxIterationsError(
            f"fixed-mass descent did not converge in {opts.max_iter} iterations "
            f"(|gt| = {gt_norm:.3e})"
        )

    omega = lagrange_multiplier(sys, x)
    return GroundStateResult(
        psi=sys.function(x),
        tau=sys.energy(x),
        omega=omega,
        mu=sys.mass_norm(x),
        iterations=it,
        grad_residual=gt_norm,
        boundary_mass_fraction=sys.boundary_mass_fraction(x),
        energy_monotone=monotone,
        polished=polished,
    )


def tau_curve(sys: DiscreteSystem, mu_grid, opts: SolveOptions | None = None) -> TauCurve:
    """Sequential fixed-mass solves over an increasing mass grid, warm-started."""
    mu_grid = np.asarray(mu_grid, dtype=float)
    if np.any(mu_grid <= 0) or np.any(np.diff(mu_grid) <= 0):
        raise GraphNLSError("mass grid must be positive and strictly increasing")
    rows = []
    warm = None
    omega_hint = None
    for mu in mu_grid:
        try:
            init = None if warm is None else (mu / sys.mass_norm(warm)) * warm
            res = minimize_fixed_mass(sys, float(mu), init=init, opts=opts,
                                      omega_hint=omega_hint)
            warm = res.psi.values
            omega_hint = res.omega
            rows.append(
                TauPoint(
                    mu=res.mu, tau=res.tau, omega=res.omega,
                    grad_residual=res.grad_residual,
                    boundary_mass_fraction=res.boundary_mass_fraction,
                )
            )
        except GraphNLSError as exc:
            log.warning("tau_curve row mu=%g failed: %s", mu, exc)
            rows.append(
                TauPoint(mu=float(mu), tau=np.nan, omega=np.nan,
                         grad_residual=np.nan, boundary_mass_fraction=np.nan,
                         ok=False, error=str(exc))
            )
    return TauCurve(tuple(rows))


@dataclass(frozen=True)
class ThresholdOptions:
    mu_tol: float = 0.01
    solver: SolveOptions = field(default_factory=SolveOptions)
    bmf_flag: float = 0.05


def detect_threshold(
    sys: DiscreteSystem,
    search: tuple[float, float],
    opts: ThresholdOptions | None = None,
) -> ThresholdEstimate:
    """Bisection on the sign of omega(mu) over the bracket ``search``.

    Positive multiplier marks the existence regime; the threshold is the
    crossing.  Subcritical exponents only: with p >= 5 the multiplier stays
    positive for every mass and there is nothing to detect.
    """
    opts = opts or ThresholdOptions()
    if sys.p >= 5.0:
        raise SupercriticalExponentError(
            f"p = {sys.p}: no finite threshold in the (super)critical regime"
        )
    l_h, _ = spectral.bottom_of_spectrum(sys)
    if l_h >= 0:
        raise GraphNLSError("threshold detection requires a negative spectrum bottom")

    lo, hi = float(search[0]), float(search[1])
    if not 0 < lo < hi:
        raise GraphNLSError(f"invalid search bracket {search}")

    cache: dict[float, GroundStateResult] = {}

    def solve(mu: float) -> GroundStateResult:
        if mu in cache:
            return cache[mu]
        warm = hint = None
        if cache:
            nearest = min(cache, key=lambda m: abs(m - mu))
            warm = (mu / cache[nearest].mu) * cache[nearest].psi.values
            hint = cache[nearest].omega
        res = minimize_fixed_mass(sys, mu, init=warm, opts=opts.solver, omega_hint=hint)
        cache[mu] = res
        return res

    r_lo, r_hi = solve(lo), solve(hi)
    if r_lo.omega <= 0:
        raise NoSignChangeError(
            f"omega({lo}) = {r_lo.omega:.3e} <= 0: bracket starts past the threshold"
        )
    if r_hi.omega > 0:
        raise NoSignChangeError(
            f"omega positive on the whole bracket ({lo}, {hi}); "
            f"omega({hi}) = {r_hi.omega:.3e}"
        )

    worst_bmf = 0.0
    while hi - lo > opts.mu_tol:
        mid = 0.5 * (lo + hi)
        r = solve(mid)
        if r.omega > 0:
            lo = mid
        else:
            hi = mid
            worst_bmf = max(worst_bmf, r.boundary_mass_fraction)

    notes = f"omega-sign bisection to bracket width {hi - lo:.3e}"
    if worst_bmf > opts.bmf_flag:
        notes += (
            f"; boundary mass fraction up to {worst_bmf:.3f} beyond the threshold "
            "(mass leaking to the truncated ends, consistent with nonexistence)"
        )
        warnings.warn(notes, TruncationWarning)
    return ThresholdEstimate(
        mu1=0.5 * (lo + hi), method="omega_crossing", bracket=(lo, hi), notes=notes
    )


def threshold_with_truncation(
    g: MetricGraph,
    h: float,
    search: tuple[float, float],
    start: float = 40.0,
    tail_tol: float = 0.02,
    mu_tol: float = 0.01,
    max_doublings: int = 4,
    solver: SolveOptions | None = None,
) -> ThresholdEstimate:
    """Threshold detection with the doubling truncation policy."""
    opts = ThresholdOptions(mu_tol=mu_tol, solver=solver or SolveOptions())
    L = start
    prev: ThresholdEstimate | None = None
    for _ in range(max_doublings + 1):
        sys = assemble(truncate(g, FixedTruncation(L)), h)
        est = detect_threshold(sys, search, opts)
        est = replace(est, notes=est.notes + f"; truncation length {L:g}")
        if prev is not None and abs(est.mu1 - prev.mu1) < tail_tol:
            return est
        prev = est
        L *= 2.0
    warnings.warn(
        f"threshold estimate still moving after {max_doublings} doublings",
        TruncationWarning,
    )
    return prev


def minimize_global(sys: DiscreteSystem, opts: SolveOptions | None = None) -> GlobalMinimum:
    """Unconstrained minimum of the energy.

    With a nonnegative spectrum bottom the minimum is the zero function at
    level 0.  Otherwise descend from the linear ground state scaled to the
    exact minimizer of the energy along that ray, then Newton-polish the
    zero-multiplier stationarity equation.
    """
    opts = opts or SolveOptions()
    l_h, phi0 = spectral.bottom_of_spectrum(sys)
    if l_h >= 0:
        return GlobalMinimum(psi=sys.zero(), tau_min=0.0, mass=0.0)

    x = phi0.values
    Q0 = sys.quadratic_form(x)
    P0 = sys.lp1(x)
    t = (-Q0 / P0) ** (1.0 / (sys.p - 1.0))
    x = t * x
    E = sys.energy(x)

    grad = sys.energy_gradient(x)
    d = sys.mass_solve(grad)
    g_norm = math.sqrt(max(float(grad @ d), 0.0))
    step = None
    prev_x = prev_d = None
    polish_barrier = np.inf

    def try_polish(x, E):
        try:
            res = _newton.solve_fixed_frequency(sys, 0.0, x)
        except NoConvergenceError:
            return None
        En = sys.energy(res.x)
        if En <= E + 1e-9 * (1.0 + abs(E)) and sys.mass_norm(res.x) > 0:
            gradn = sys.energy_gradient(res.x)
            gn = math.sqrt(max(float(gradn @ sys.mass_solve(gradn)), 0.0))
            if gn <= opts.tol * max(1.0, abs(En)):
                return res.x, En, gn, res.iterations
        return None

    it = 0
    next_scheduled = 20
    while it < opts.max_iter:
        if g_norm <= opts.tol * max(1.0, abs(E)):
            break
        want_polish = opts.newton_polish and (
            it >= next_scheduled
            or (
                g_norm <= opts.polish_trigger * max(1.0, abs(E))
                and g_norm < polish_barrier
            )
        )
        if want_polish:
            polish = try_polish(x, E)
            if polish is not None:
                x, E, g_norm, extra = polish
                it += extra
                break
            polish_barrier = g_norm / 10.0
            next_scheduled = max(next_scheduled * 3, it + 1)
        if step is None:
            h_d = sys.operator @ d + sys.from_full(
                sys.force_jacobian_diag(x) * sys.to_full(d)
            )
            curv = float(d @ h_d)
            step = g_norm**2 / curv if curv > 0 else 1e-3
        elif prev_x is not None:
            dx = x - prev_x
            dd = d - prev_d
            denom = float(dx @ dd)
            step = float(dx @ dx) / denom if denom > 0 else step * 2.0
        step = min(max(step, 1e-14), 1e14)
        s = step
        accepted = False
        for _ in range(70):
            xn = x - s * d
            En = sys.energy(xn)
            if np.isfinite(En) and En <= E - opts.armijo * s * g_norm**2:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            if opts.newton_polish:
                polish = try_polish(x, E)
                if polish is not None:
                    x, E, g_norm, extra = polish
                    it += extra
                    break
            raise NoDescentError(f"global descent stalled (|g| = {g_norm:.3e})")
        prev_x, prev_d = x, d
        x, E = xn, En
        grad = sys.energy_gradient(x)
        d = sys.mass_solve(grad)
        g_norm = math.sqrt(max(float(grad @ d), 0.0))
        it += 1
    else:
        raise MaxIterationsError(
            f"global descent did not converge in {opts.max_iter} iterations"
        )

    return GlobalMinimum(
        psi=sys.function(x), tau_min=sys.energy(x), mass=sys.mass_norm(x), iterations=it
    )
