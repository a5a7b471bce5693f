"""Truncation and P1 finite-element assembly on metric graphs.

Half-lines are truncated to finite intervals with a homogeneous Dirichlet
condition at the far end; solvers that need more length re-assemble at a
doubled truncation (the adaptive policy).  Each edge carries a uniform mesh
of size <= h.  Degrees of freedom are numbered vertex slots first, then
edge interiors:

* delta/Kirchhoff vertices own a single shared dof (continuity built in),
* general-condition vertices own one dof per incident edge slot, and their
  Dirichlet-projector constraints are eliminated afterwards through an
  orthonormal null-space basis (``constraint_basis``),
* far ends of truncated half-lines never receive a dof.

The assembled matrices are the stiffness K (integral of products of first
derivatives), the vertex coupling B (projector/coupling or delta terms) and
the consistent mass M.  The |u|^(p+1) term is integrated with lumped-mass
weights, which keeps the defocusing force diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import splu

from . import kernels
from .errors import (
    InvalidConditionError,
    MeshTooCoarseError,
    NonPositiveLengthError,
    SystemMismatchError,
)
from .graphs import (
    DeltaCondition,
    GeneralCondition,
    MetricGraph,
    validate_vertex_condition,
    vertex_coupling_matrix,
)

__all__ = [
    "FixedTruncation",
    "AdaptiveTruncation",
    "TruncationPolicy",
    "TruncatedGraph",
    "DiscreteSystem",
    "GraphFunction",
    "Functionals",
    "truncate",
    "assemble",
    "functionals",
    "suggested_length",
]

FAR_ZONE_FRACTION = 0.10


@dataclass(frozen=True)
class FixedTruncation:
    length: float


@dataclass(frozen=True)
class AdaptiveTruncation:
    """Doubling policy: solvers re-run until the observable moves < tail_tol."""

    tail_tol: float = 0.02
    start: float = 40.0


TruncationPolicy = Union[FixedTruncation, AdaptiveTruncation]


@dataclass(frozen=True)
class TruncatedGraph:
    base: MetricGraph
    lengths: Mapping[str, float]
    policy: TruncationPolicy

    @property
    def truncated_edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.base.infinite_edges)

    def rescaled(self, factor: float) -> "TruncatedGraph":
        """Same graph with every truncation length multiplied by factor."""
        new = dict(self.lengths)
        for eid in self.truncated_edge_ids:
            new[eid] = new[eid] * factor
        return TruncatedGraph(self.base, new, self.policy)


def truncate(g: MetricGraph, policy: TruncationPolicy) -> TruncatedGraph:
    """Assign a meshing length to every edge; compact graphs pass through."""
    if isinstance(policy, FixedTruncation):
        if not policy.length > 0:
            raise NonPositiveLengthError(f"truncation length {policy.length} <= 0")
        L = policy.length
    elif isinstance(policy, AdaptiveTruncation):
        if not policy.tail_tol > 0:
            raise NonPositiveLengthError(f"tail tolerance {policy.tail_tol} <= 0")
        if not policy.start > 0:
            raise NonPositiveLengthError(f"starting length {policy.start} <= 0")
        L = policy.start
    else:  # pragma: no cover - defensive
        raise TypeError(f"unknown truncation policy {policy!r}")
    lengths = {e.id: (L if e.is_infinite else e.length) for e in g.edges}
    return TruncatedGraph(g, lengths, policy)


def suggested_length(omega_expected: float | None = None) -> float:
    """Truncation default: tails decay like exp(-sqrt(omega) x)."""
    if omega_expected is None or omega_expected <= 0:
        return 40.0
    return 20.0 / math.sqrt(omega_expected)


@dataclass(frozen=True, eq=False)
class GraphFunction:
    """A real function on the graph, stored on the constrained dofs."""

    values: NDArray[np.float64]
    system: "DiscreteSystem"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.system.n_dofs,):
            raise SystemMismatchError(
                f"value vector of length {v.shape} does not fit a system "
                f"with {self.system.n_dofs} dofs"
            )
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Functionals:
    Q: float
    E: float
    mass: float
    lp1: float


class DiscreteSystem:
    """Assembled matrices and dof bookkeeping for one truncated graph.

    Treat instances as immutable; solvers only read them, so one system can
    be shared across concurrent solves.
    """

    def __init__(self, tg: TruncatedGraph, h: float):
        g = tg.base
        self.graph = g
        self.truncation = tg
        self.h = float(h)
        self.p = g.p

        lengths = dict(tg.lengths)
        if not lengths:
            raise NonPositiveLengthError("graph has no edges")
        shortest = min(lengths.values())
        if not h > 0:
            raise NonPositiveLengthError(f"mesh size {h} <= 0")
        if h > shortest * (1 + 1e-12):
            raise MeshTooCoarseError(
                f"mesh size {h} exceeds shortest edge length {shortest}"
            )

        for v in g.vertices:
            report = validate_vertex_condition(g.conditions[v])
            if not report.valid:
                raise InvalidConditionError(
                    f"vertex {v!r}: {', '.join(report.failures)}"
                )

        # --- dof numbering: vertex slots first, then edge interiors
        vertex_dof: dict[str, int] = {}
        slot_dof: dict[tuple[str, str], int] = {}
        next_id = 0
        general_vertices: list[str] = []
        for v in g.vertices:
            cond = g.conditions[v]
            if isinstance(cond, DeltaCondition):
                vertex_dof[v] = next_id
                next_id += 1
            else:
                general_vertices.append(v)
                order = cond.edge_order or g.incident[v]
                for eid in order:
                    slot_dof[(v, eid)] = next_id
                    next_id += 1

        def endpoint_dof(v: str | None, eid: str) -> int:
            if v is None:
                return -1  # truncated far end, homogeneous Dirichlet
            if v in vertex_dof:
                return vertex_dof[v]
            return slot_dof[(v, eid)]

        edge_nodes: dict[str, NDArray[np.int64]] = {}
        edge_coords: dict[str, NDArray[np.float64]] = {}
        edge_h: dict[str, float] = {}
        for e in g.edges:
            ell = lengths[e.id]
            n = max(1, int(math.ceil(ell / h - 1e-9)))
            he = ell / n
            ids = np.empty(n + 1, dtype=np.int64)
            ids[0] = endpoint_dof(e.tail, e.id)
            ids[n] = endpoint_dof(e.head, e.id)
            ids[1:n] = np.arange(next_id, next_id + n - 1)
            next_id += n - 1
            edge_nodes[e.id] = ids
            edge_coords[e.id] = np.linspace(0.0, ell, n + 1)
            edge_h[e.id] = he

        n_full = next_id
        self.dof_map = edge_nodes
        self.node_coords = edge_coords
        self.edge_mesh_size = edge_h
        self.edge_lengths = lengths
        self.n_full = n_full

        # --- K and M assembly (COO over full dofs; -1 rows/cols dropped)
        ki, kj, kv = [], [], []
        mi, mj, mv = [], [], []
        for e in g.edges:
            ids = edge_nodes[e.id]
            he = edge_h[e.id]
            a, b = ids[:-1], ids[1:]
            k_loc = 1.0 / he
            m_diag = he / 3.0
            m_off = he / 6.0
            for (r, c, val, acc) in (
                (a, a, k_loc, "k"), (b, b, k_loc, "k"),
                (a, b, -k_loc, "k"), (b, a, -k_loc, "k"),
            ):
                keep = (r >= 0) & (c >= 0)
                ki.append(r[keep]); kj.append(c[keep])
                kv.append(np.full(keep.sum(), val))
            for (r, c, val) in (
                (a, a, m_diag), (b, b, m_diag), (a, b, m_off), (b, a, m_off),
            ):
                keep = (r >= 0) & (c >= 0)
                mi.append(r[keep]); mj.append(c[keep])
                mv.append(np.full(keep.sum(), val))

        def _coo(rows, cols, vals):
            return sparse.coo_array(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n_full, n_full),
            ).tocsr()

        K = _coo(ki, kj, kv)
        M = _coo(mi, mj, mv)

        bi, bj, bv = [], [], []
        for v in g.vertices:
            cond = g.conditions[v]
            if isinstance(cond, DeltaCondition):
                if cond.alpha != 0.0:
                    bi.append(vertex_dof[v]); bj.append(vertex_dof[v])
                    bv.append(cond.alpha)
            else:
                order = cond.edge_order or g.incident[v]
                ids = [slot_dof[(v, eid)] for eid in order]
                Bv = vertex_coupling_matrix(cond, len(ids))
                for r, gi in enumerate(ids):
                    for c, gj in enumerate(ids):
                        if Bv[r, c] != 0.0:
                            bi.append(gi); bj.append(gj); bv.append(Bv[r, c])
        if bi:
            B = sparse.coo_array(
                (np.array(bv), (np.array(bi), np.array(bj))), shape=(n_full, n_full)
            ).tocsr()
        else:
            B = sparse.csr_array((n_full, n_full))

        self.K = K
        self.B = B
        self.M = M

        # --- constraint basis eliminating general-vertex Dirichlet parts
        if general_vertices:
            ci, cj, cv = [], [], []
            n_red = 0
            constrained = np.zeros(n_full, dtype=bool)
            for v in general_vertices:
                cond = g.conditions[v]
                order = cond.edge_order or g.incident[v]
                ids = [slot_dof[(v, eid)] for eid in order]
                constrained[ids] = True
                evals, evecs = np.linalg.eigh(cond.p_d)
                N = evecs[:, evals < 0.5]  # orthonormal basis of ker(p_d)
                for col in range(N.shape[1]):
                    for row, gi in enumerate(ids):
                        if N[row, col] != 0.0:
                            ci.append(gi); cj.append(n_red); cv.append(N[row, col])
                    n_red += 1
            free = np.flatnonzero(~constrained)
            for gi in free:
                ci.append(gi); cj.append(n_red); cv.append(1.0)
                n_red += 1
            C = sparse.coo_array(
                (np.array(cv), (np.array(ci), np.array(cj))), shape=(n_full, n_red)
            ).tocsr()
            self.constraint_basis = C
            self._identity_basis = False
            self.n_dofs = n_red
        else:
            self.constraint_basis = sparse.identity(n_full, format="csr")
            self._identity_basis = True
            self.n_dofs = n_full

        C = self.constraint_basis
        if self._identity_basis:
            self.K_red, self.B_red, self.M_red = K, B, M
        else:
            self.K_red = (C.T @ K @ C).tocsr()
            self.B_red = (C.T @ B @ C).tocsr()
            self.M_red = (C.T @ M @ C).tocsr()
        self.operator = (self.K_red + self.B_red).tocsr()

        # lumped weights on full dofs (row sums of M); the quadrature for
        # the |u|^(p+1) term
        self.weights_full = np.asarray(M.sum(axis=1)).ravel()

        # far-zone mask: nodes in the outer FAR_ZONE_FRACTION of truncated edges
        far = np.zeros(n_full, dtype=bool)
        for eid in tg.truncated_edge_ids:
            ids = edge_nodes[eid]
            xs = edge_coords[eid]
            keep = (ids >= 0) & (xs > (1.0 - FAR_ZONE_FRACTION) * lengths[eid])
            far[ids[keep]] = True
        self.far_zone_full = far

        self._mass_lu = None
        self._spectral_cache: dict = {}

    # ------------------------------------------------------------------
    # basic linear algebra helpers

    def to_full(self, x: NDArray) -> NDArray:
        return x if self._identity_basis else self.constraint_basis @ x

    def from_full(self, u: NDArray) -> NDArray:
        return u if self._identity_basis else self.constraint_basis.T @ u

    def mass_solve(self, rhs: NDArray) -> NDArray:
        if self._mass_lu is None:
            self._mass_lu = splu(self.M_red.tocsc())
        return self._mass_lu.solve(rhs)

    def mass_norm(self, x: NDArray) -> float:
        return math.sqrt(max(float(x @ (self.M_red @ x)), 0.0))

    def quadratic_form(self, x: NDArray) -> float:
        return float(x @ (self.operator @ x))

    def lp1(self, x: NDArray) -> float:
        u = self.to_full(x)
        return kernels.nonlinear_energy(u, self.weights_full, self.p + 1.0)

    def energy(self, x: NDArray) -> float:
        return 0.5 * self.quadratic_form(x) + self.lp1(x) / (self.p + 1.0)

    def energy_gradient(self, x: NDArray) -> NDArray:
        """Gradient of energy: operator @ x plus the lumped defocusing force."""
        if self._identity_basis:
            return kernels.energy_gradient(
                self.operator, x, self.weights_full, self.p - 1.0
            )
        u = self.constraint_basis @ x
        force = kernels.nonlinear_force(u, self.weights_full, self.p - 1.0)
        return self.operator @ x + self.constraint_basis.T @ force

    def nonlinear_force(self, x: NDArray) -> NDArray:
        u = self.to_full(x)
        force = kernels.nonlinear_force(u, self.weights_full, self.p - 1.0)
        return self.from_full(force)

    def force_jacobian_diag(self, x: NDArray) -> NDArray:
        """Full-dof diagonal of the linearized defocusing force."""
        u = self.to_full(x)
        return self.p * self.weights_full * np.abs(u) ** (self.p - 1.0)

    def boundary_mass_fraction(self, x: NDArray) -> float:
        """Share of squared mass in the outer 10% of every truncated edge."""
        u = self.to_full(x)
        total = float(x @ (self.M_red @ x))
        if total <= 0:
            return 0.0
        far = float(np.sum(self.weights_full[self.far_zone_full]
                           * u[self.far_zone_full] ** 2))
        return far / total

    # ------------------------------------------------------------------
    # construction of grid functions

    def function(self, values: NDArray) -> GraphFunction:
        return GraphFunction(np.asarray(values, dtype=float), self)

    def zero(self) -> GraphFunction:
        return self.function(np.zeros(self.n_dofs))

    def interpolate(self, fn: Callable[[str, NDArray], NDArray]) -> GraphFunction:
        """Nodal interpolation of ``fn(edge_id, coords) -> values``.

        At delta vertices the value is taken from the first incident edge (a
        continuous fn gives the same value from every edge); far-end Dirichlet
        nodes are dropped.  With general conditions the full nodal vector is
        projected onto the constrained subspace.
        """
        u = np.zeros(self.n_full)
        for eid, ids in self.dof_map.items():
            vals = np.asarray(fn(eid, self.node_coords[eid]), dtype=float)
            keep = ids >= 0
            u[ids[keep]] = vals[keep]
        return self.function(self.from_full(u))

    def _resolve(self, psi) -> NDArray:
        if isinstance(psi, GraphFunction):
            if psi.system is not self:
                raise SystemMismatchError("grid function belongs to another system")
            return psi.values
        x = np.asarray(psi, dtype=float)
        if x.shape != (self.n_dofs,):
            raise SystemMismatchError(
                f"vector of shape {x.shape} does not fit {self.n_dofs} dofs"
            )
        return x


def assemble(tg: TruncatedGraph, h: float) -> DiscreteSystem:
    """Mesh a truncated graph with P1 elements of size <= h."""
    return DiscreteSystem(tg, h)


def functionals(sys: DiscreteSystem, psi) -> Functionals:
    """Quadratic form, energy, mass (the L2 norm) and the |u|^(p+1) integral."""
    x = sys._resolve(psi)
    Q = sys.quadratic_form(x)
    lp1 = sys.lp1(x)
    mass = sys.mass_norm(x)
    E = 0.5 * Q + lp1 / (sys.p + 1.0)
    return Functionals(Q=Q, E=E, mass=mass, lp1=lp1)
