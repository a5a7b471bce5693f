"""Hot numeric kernels: numba-jitted inner loops with numpy fallbacks.

These are the operations that dominate solver runtime: the pointwise
defocusing force w*|u|^(p-1)*u, its energy sum, and fused
matvec-plus-force evaluations over CSR matrices.  Everything else in the
package goes through scipy.

Call sites pass scipy CSR matrices; the numba path unpacks their raw
arrays.  `numpy_impl` and `numba_impl` expose both variants unconditionally
so the benchmark (and the cross-backend tests) can compare them directly;
the module-level names are bound once according to ``_backend.BACKEND``.
"""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ._backend import BACKEND, HAVE_NUMBA

__all__ = [
    "nonlinear_force",
    "nonlinear_energy",
    "energy_gradient",
    "stationary_residual",
    "backend_name",
    "numpy_impl",
    "numba_impl",
    "use_backend",
]


# ---------------------------------------------------------------------------
# numpy implementations

def _nl_force_np(u, w, pm1):
    return w * np.abs(u) ** pm1 * u


def _nl_energy_np(u, w, pp1):
    return float(np.sum(w * np.abs(u) ** pp1))


def _gradient_np(A, x, w, pm1):
    return A @ x + w * np.abs(x) ** pm1 * x


def _residual_np(A, M, x, w, pm1, omega):
    return A @ x + omega * (M @ x) + w * np.abs(x) ** pm1 * x


numpy_impl = SimpleNamespace(
    nonlinear_force=_nl_force_np,
    nonlinear_energy=_nl_energy_np,
    energy_gradient=_gradient_np,
    stationary_residual=_residual_np,
)


# ---------------------------------------------------------------------------
# numba implementations

numba_impl = None

if HAVE_NUMBA:
    import numba as nb

    _njit = nb.njit(cache=True, fastmath=True, nogil=True)

    @_njit
    def _nl_force_raw(u, w, pm1):
        out = np.empty_like(u)
        for i in range(u.size):
            out[i] = w[i] * abs(u[i]) ** pm1 * u[i]
        return out

    @_njit
    def _nl_energy_raw(u, w, pp1):
        s = 0.0
        for i in range(u.size):
            s += w[i] * abs(u[i]) ** pp1
        return s

    @_njit
    def _gradient_raw(data, indices, indptr, x, w, pm1):
        n = x.size
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * x[indices[k]]
            out[i] = acc + w[i] * abs(x[i]) ** pm1 * x[i]
        return out

    @_njit
    def _residual_raw(adata, aind, aptr, mdata, mind, mptr, x, w, pm1, omega):
        n = x.size
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for k in range(aptr[i], aptr[i + 1]):
                acc += adata[k] * x[aind[k]]
            for k in range(mptr[i], mptr[i + 1]):
                acc += omega * mdata[k] * x[mind[k]]
            out[i] = acc + w[i] * abs(x[i]) ** pm1 * x[i]
        return out

    def _nl_force_nb(u, w, pm1):
        return _nl_force_raw(u, w, pm1)

    def _nl_energy_nb(u, w, pp1):
        return _nl_energy_raw(u, w, pp1)

    def _gradient_nb(A, x, w, pm1):
        return _gradient_raw(A.data, A.indices, A.indptr, x, w, pm1)

    def _residual_nb(A, M, x, w, pm1, omega):
        return _residual_raw(
            A.data, A.indices, A.indptr, M.data, M.indices, M.indptr,
            x, w, pm1, omega,
        )

    numba_impl = SimpleNamespace(
        nonlinear_force=_nl_force_nb,
        nonlinear_energy=_nl_energy_nb,
        energy_gradient=_gradient_nb,
        stationary_residual=_residual_nb,
    )


# ---------------------------------------------------------------------------
# dispatch

_active = BACKEND


def use_backend(name: str) -> str:
    """Rebind the module-level kernels; returns the previously active name.

    Intended for the benchmark and tests.  Normal selection happens once at
    import via GRAPHNLS_BACKEND.
    """
    global _active, nonlinear_force, nonlinear_energy
    global energy_gradient, stationary_residual
    if name == "numba":
        if numba_impl is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        impl = numba_impl
    elif name == "numpy":
        impl = numpy_impl
    else:
        raise ValueError(f"unknown backend {name!r}")
    previous = _active
    nonlinear_force = impl.nonlinear_force
    nonlinear_energy = impl.nonlinear_energy
    energy_gradient = impl.energy_gradient
    stationary_residual = impl.stationary_residual
    _active = name
    return previous


def backend_name() -> str:
    return _active


_impl = numba_impl if HAVE_NUMBA else numpy_impl
nonlinear_force = _impl.nonlinear_force
nonlinear_energy = _impl.nonlinear_energy
energy_gradient = _impl.energy_gradient
stationary_residual = _impl.stationary_residual
