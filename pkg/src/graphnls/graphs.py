"""Metric graphs with self-adjoint vertex conditions.

A metric graph here is a finite collection of vertices joined by edges that
are either finite intervals or half-lines, together with one boundary
condition per vertex and a nonlinearity exponent p > 1.  Two kinds of
vertex condition are supported:

* ``DeltaCondition(alpha)``: continuity across the vertex plus a flux jump
  sum of outgoing derivatives = alpha * value.  ``alpha = 0`` is the
  Kirchhoff case and is kept as a flag on this type rather than as a
  degenerate projector form, because the projector form requires an
  invertible coupling map.

* ``GeneralCondition(p_d, p_n, p_r, coupling)``: the projector
  parametrization of a self-adjoint vertex.  ``p_d``, ``p_n``, ``p_r`` are
  mutually orthogonal symmetric projectors summing to the identity on the
  d_v endpoint slots; ``coupling`` is a d_v x d_v real symmetric matrix
  whose restriction to range(p_r) is the (invertible) Robin map.  The
  quadratic-form contribution of the vertex is
  ``values @ p_r coupling p_r @ values``.

Only real matrices are accepted; complex Hermitian data is rejected since
every solver in this package works over the real field.

Edge order at a vertex is the declaration order of the edges (or the
explicit ``edge_order`` of a general condition) and fixes the coordinate
slots of the endpoint-value vector.  Graphs are immutable once built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Union

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ComplexConditionError,
    DanglingEdgeError,
    DimensionMismatchError,
    DisconnectedGraphError,
    InvalidConditionError,
    InvalidExponentError,
    NonPositiveLengthError,
    UnsupportedTopologyError,
    ZeroAlphaError,
)

__all__ = [
    "DeltaCondition",
    "GeneralCondition",
    "VertexCondition",
    "Edge",
    "EdgeSpec",
    "VertexSpec",
    "GraphSpec",
    "MetricGraph",
    "ValidationReport",
    "build_graph",
    "validate_vertex_condition",
    "delta_as_general",
    "min_half_edge_length",
    "vertex_coupling_matrix",
    "vertex_form_value",
]

DEFAULT_CONDITION_TOL = 1e-10


@dataclass(frozen=True)
class DeltaCondition:
    """Delta vertex of strength alpha (1/length units); alpha=0 is Kirchhoff."""

    alpha: float

    @property
    def is_kirchhoff(self) -> bool:
        return self.alpha == 0.0


def _as_real_matrix(m, name: str) -> NDArray[np.float64]:
    arr = np.asarray(m)
    if np.iscomplexobj(arr):
        if np.any(np.abs(arr.imag) > 0):
            raise ComplexConditionError(
                f"{name} has complex entries; only real symmetric vertex "
                "conditions are supported"
            )
        arr = arr.real
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} must be a square matrix")
    return arr


@dataclass(frozen=True)
class GeneralCondition:
    """Projector form of a self-adjoint vertex condition.

    ``edge_order`` optionally names the incident edges in the slot order the
    matrices refer to; by default the declaration order of the edges is used.
    """

    p_d: NDArray[np.float64]
    p_n: NDArray[np.float64]
    p_r: NDArray[np.float64]
    coupling: NDArray[np.float64]
    edge_order: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("p_d", "p_n", "p_r", "coupling"):
            object.__setattr__(self, name, _as_real_matrix(getattr(self, name), name))
        d = self.p_d.shape[0]
        for name in ("p_n", "p_r", "coupling"):
            if getattr(self, name).shape[0] != d:
                raise DimensionMismatchError(
                    "all matrices of a general condition must share one dimension"
                )
        if self.edge_order is not None:
            object.__setattr__(self, "edge_order", tuple(self.edge_order))

    @property
    def dim(self) -> int:
        return self.p_d.shape[0]


VertexCondition = Union[DeltaCondition, GeneralCondition]


@dataclass(frozen=True)
class Edge:
    """An edge of the graph; ``head is None`` marks a half-line from tail."""

    id: str
    tail: str
    head: str | None
    length: float

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.length)

    @property
    def endpoints(self) -> tuple[str, str | None]:
        return (self.tail, self.head)


# ---------------------------------------------------------------------------
# build input (produced by the file parser or constructed in code)

@dataclass(frozen=True)
class VertexSpec:
    id: str
    condition: VertexCondition


@dataclass(frozen=True)
class EdgeSpec:
    id: str
    tail: str
    head: str | None
    length: float


@dataclass(frozen=True)
class GraphSpec:
    vertices: tuple[VertexSpec, ...]
    edges: tuple[EdgeSpec, ...]
    p: float


@dataclass(frozen=True)
class MetricGraph:
    """Immutable metric graph; see module docstring for conventions."""

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    conditions: Mapping[str, VertexCondition]
    p: float
    incident: Mapping[str, tuple[str, ...]] = field(repr=False)

    def edge(self, edge_id: str) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    def degree(self, vertex: str) -> int:
        return len(self.incident[vertex])

    @property
    def finite_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if not e.is_infinite)

    @property
    def infinite_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.is_infinite)

    @property
    def is_compact(self) -> bool:
        return not self.infinite_edges

    @property
    def delta_only(self) -> bool:
        return all(isinstance(c, DeltaCondition) for c in self.conditions.values())


def build_graph(spec: GraphSpec) -> MetricGraph:
    """Validate a graph description and freeze it into a MetricGraph.

    Raises DisconnectedGraphError, DanglingEdgeError, NonPositiveLengthError,
    InvalidExponentError, UnsupportedTopologyError, DimensionMismatchError or
    InvalidConditionError as appropriate.
    """
    if not spec.p > 1.0:
        raise InvalidExponentError(f"nonlinearity exponent p = {spec.p} must exceed 1")

    vertex_ids = [v.id for v in spec.vertices]
    if len(set(vertex_ids)) != len(vertex_ids):
        dupes = sorted({v for v in vertex_ids if vertex_ids.count(v) > 1})
        raise UnsupportedTopologyError(f"duplicate vertex ids: {dupes}")
    vset = set(vertex_ids)

    edges = []
    seen_pairs: set[frozenset] = set()
    incident: dict[str, list[str]] = {v: [] for v in vertex_ids}
    for es in spec.edges:
        if es.tail not in vset:
            raise DanglingEdgeError(f"edge {es.id!r}: unknown vertex {es.tail!r}")
        if es.head is not None and es.head not in vset:
            raise DanglingEdgeError(f"edge {es.id!r}: unknown vertex {es.head!r}")
        infinite = es.head is None
        if infinite:
            if not math.isinf(es.length):
                raise NonPositiveLengthError(
                    f"edge {es.id!r}: a half-line must have infinite length"
                )
        else:
            if math.isinf(es.length):
                raise NonPositiveLengthError(
                    f"edge {es.id!r}: an infinite edge must have exactly one endpoint"
                )
            if not es.length > 0:
                raise NonPositiveLengthError(
                    f"edge {es.id!r}: length {es.length} must be positive"
                )
            if es.head == es.tail:
                raise UnsupportedTopologyError(f"edge {es.id!r} is a loop")
            pair = frozenset((es.tail, es.head))
            if pair in seen_pairs:
                raise UnsupportedTopologyError(
                    f"multiple edges between {es.tail!r} and {es.head!r}"
                )
            seen_pairs.add(pair)
        edges.append(Edge(es.id, es.tail, es.head, float(es.length)))
        incident[es.tail].append(es.id)
        if es.head is not None:
            incident[es.head].append(es.id)

    edge_ids = [e.id for e in edges]
    if len(set(edge_ids)) != len(edge_ids):
        raise UnsupportedTopologyError("duplicate edge ids")

    for v in vertex_ids:
        if not incident[v]:
            raise DisconnectedGraphError(f"vertex {v!r} has degree 0")

    # connectivity over the vertex set
    if vertex_ids:
        reached = {vertex_ids[0]}
        frontier = [vertex_ids[0]]
        while frontier:
            v = frontier.pop()
            for e in edges:
                if e.head is None:
                    continue
                for a, b in ((e.tail, e.head), (e.head, e.tail)):
                    if a == v and b not in reached:
                        reached.add(b)
                        frontier.append(b)
        if reached != vset:
            missing = sorted(vset - reached)
            raise DisconnectedGraphError(f"vertices unreachable from root: {missing}")

    conditions: dict[str, VertexCondition] = {}
    for vs in spec.vertices:
        cond = vs.condition
        d = len(incident[vs.id])
        if isinstance(cond, GeneralCondition):
            if cond.dim != d:
                raise DimensionMismatchError(
                    f"vertex {vs.id!r}: condition dimension {cond.dim} != degree {d}"
                )
            if cond.edge_order is not None:
                if sorted(cond.edge_order) != sorted(incident[vs.id]):
                    raise DanglingEdgeError(
                        f"vertex {vs.id!r}: edge_order must be a permutation of "
                        f"the incident edges {incident[vs.id]}"
                    )
            report = validate_vertex_condition(cond)
            if not report.valid:
                raise InvalidConditionError(
                    f"vertex {vs.id!r}: invalid condition ({', '.join(report.failures)})"
                )
        conditions[vs.id] = cond

    return MetricGraph(
        vertices=tuple(vertex_ids),
        edges=tuple(edges),
        conditions=MappingProxyType(conditions),
        p=float(spec.p),
        incident=MappingProxyType({v: tuple(ids) for v, ids in incident.items()}),
    )


# ---------------------------------------------------------------------------
# condition validation

@dataclass(frozen=True)
class ValidationReport:
    """Residuals of every projector/coupling property of a vertex condition."""

    valid: bool
    residuals: Mapping[str, float]
    failures: tuple[str, ...]
    dim: int
    robin_rank: int


def _robin_range_basis(p_r: NDArray, tol: float) -> NDArray:
    # orthonormal basis of range(p_r) from its near-unit eigenvalues
    evals, evecs = np.linalg.eigh((p_r + p_r.T) / 2.0)
    return evecs[:, evals > 0.5]


def validate_vertex_condition(
    cond: VertexCondition, tol: float = DEFAULT_CONDITION_TOL
) -> ValidationReport:
    """Check the projector/coupling properties of a vertex condition.

    Delta conditions are valid by construction.  For the general form the
    report lists idempotency, symmetry, mutual orthogonality, completeness
    and the invertibility of the coupling on range(p_r); ``valid`` holds
    exactly when every residual is <= tol.
    """
    if isinstance(cond, DeltaCondition):
        return ValidationReport(True, MappingProxyType({}), (), 0, 0)

    d = cond.dim
    residuals: dict[str, float] = {}
    projectors = {"p_d": cond.p_d, "p_n": cond.p_n, "p_r": cond.p_r}
    for name, P in projectors.items():
        residuals[f"{name}_idempotent"] = float(np.linalg.norm(P @ P - P))
        residuals[f"{name}_symmetric"] = float(np.linalg.norm(P - P.T))
    for a, b in (("p_d", "p_n"), ("p_d", "p_r"), ("p_n", "p_r")):
        residuals[f"{a}_{b}_orthogonal"] = float(
            np.linalg.norm(projectors[a] @ projectors[b])
        )
    residuals["completeness"] = float(
        np.linalg.norm(cond.p_d + cond.p_n + cond.p_r - np.eye(d))
    )
    residuals["coupling_symmetric"] = float(np.linalg.norm(cond.coupling - cond.coupling.T))

    basis = _robin_range_basis(cond.p_r, tol)
    rank = basis.shape[1]
    if rank > 0:
        restricted = basis.T @ cond.coupling @ basis
        smin = float(np.linalg.svd(restricted, compute_uv=False).min())
        # invertibility measured as distance from singular, so the residual
        # convention (small is good) applies uniformly
        residuals["coupling_invertible"] = 0.0 if smin > tol else float(tol - smin + 1.0)
    failures = tuple(name for name, r in residuals.items() if r > tol)
    return ValidationReport(
        valid=not failures,
        residuals=MappingProxyType(residuals),
        failures=failures,
        dim=d,
        robin_rank=rank,
    )


def delta_as_general(alpha: float, d: int) -> GeneralCondition:
    """Projector image of a delta vertex of strength alpha on d slots.

    p_d = I - J/d enforces continuity, p_r = J/d carries the flux coupling,
    and the coupling acts as alpha/d on the continuous direction so that the
    form value on a constant slot vector (c, ..., c) equals alpha*c^2.
    """
    if d < 1:
        raise DimensionMismatchError("vertex degree must be at least 1")
    if alpha == 0.0:
        raise ZeroAlphaError(
            "alpha = 0 has no invertible coupling; keep DeltaCondition(0.0)"
        )
    J = np.full((d, d), 1.0 / d)
    return GeneralCondition(
        p_d=np.eye(d) - J,
        p_n=np.zeros((d, d)),
        p_r=J,
        coupling=(alpha / d) * np.eye(d),
    )


def vertex_coupling_matrix(cond: VertexCondition, d: int) -> NDArray[np.float64]:
    """The d x d matrix B_v with form contribution values @ B_v @ values.

    For a delta vertex this is the rank-one matrix alpha * J / d^2 acting on
    the (continuous) slot vector; for a general condition it is
    p_r coupling p_r, symmetrized.
    """
    if isinstance(cond, DeltaCondition):
        return cond.alpha * np.full((d, d), 1.0 / (d * d))
    if cond.dim != d:
        raise DimensionMismatchError(f"condition dimension {cond.dim} != degree {d}")
    B = cond.p_r @ cond.coupling @ cond.p_r
    return (B + B.T) / 2.0


def vertex_form_value(cond: VertexCondition, values) -> float:
    """Quadratic-form contribution of one vertex on an endpoint-value vector."""
    values = np.asarray(values, dtype=float)
    B = vertex_coupling_matrix(cond, values.size)
    return float(values @ B @ values)


def min_half_edge_length(g: MetricGraph) -> float:
    """Half of min(shortest finite edge length, 1); 1/2 when no finite edges."""
    finite = [e.length for e in g.finite_edges]
    shortest = min(finite) if finite else math.inf
    return 0.5 * min(shortest, 1.0)
