"""Heterogeneous check-in hypergraph: typed node space, the three
hyperedge families as sparse incidence matrices, and their symmetrically
normalized propagation operators.

Relations:

* ``temporal``   - one hyperedge per distinct (poi, category, slot) triple.
* ``spatial``    - one hyperedge per same-category POI pair within delta km.
* ``preference`` - one hyperedge per (user, category) with the user's
  distinct POIs of that category.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geo import SpatialGridIndex, haversine_km
from .records import CheckinRecord, DataError, Vocab

RELATIONS = ("temporal", "spatial", "preference")


@dataclass(frozen=True)
class NodeSpace:
    """Contiguous global index blocks for the four node types.

    Order is poi, user, category, slot; offsets are strictly increasing.
    """

    n_pois: int
    n_users: int
    n_categories: int
    n_slots: int

    @classmethod
    def from_vocab(cls, vocab: Vocab) -> "NodeSpace":
        return cls(vocab.poi_count, vocab.user_count, vocab.category_count, vocab.slot_count)

    @property
    def total(self) -> int:
        return self.n_pois + self.n_users + self.n_categories + self.n_slots

    @property
    def user_offset(self) -> int:
        return self.n_pois

    @property
    def category_offset(self) -> int:
        return self.n_pois + self.n_users

    @property
    def slot_offset(self) -> int:
        return self.n_pois + self.n_users + self.n_categories

    def poi(self, i: int) -> int:
        return i

    def user(self, i: int) -> int:
        return self.user_offset + i

    def category(self, i: int) -> int:
        return self.category_offset + i

    def slot(self, i: int) -> int:
        return self.slot_offset + i


@dataclass
class IncidenceMatrix:
    """Binary node-by-hyperedge membership matrix for one relation."""

    relation: str
    matrix: sp.csc_matrix  # |V| x |E|, entries in {0, 1}

    @property
    def n_edges(self) -> int:
        return self.matrix.shape[1]

    def column_members(self, e: int) -> list[int]:
        start, stop = self.matrix.indptr[e], self.matrix.indptr[e + 1]
        return list(self.matrix.indices[start:stop])


def _incidence_from_columns(relation: str, n_nodes: int, columns: list[list[int]]) -> IncidenceMatrix:
    indptr = [0]
    indices: list[int] = []
    for col in columns:
        members = sorted(set(col))
        if len(members) != len(col):
            raise DataError(f"{relation} hyperedge with repeated node: {col}")
        indices.extend(members)
        indptr.append(len(indices))
    mat = sp.csc_matrix(
        (np.ones(len(indices), dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(n_nodes, len(columns)),
    )
    return IncidenceMatrix(relation=relation, matrix=mat)


def build_temporal_edges(records: list[CheckinRecord], nodes: NodeSpace) -> IncidenceMatrix:
    """One hyperedge per distinct observed (poi, category, slot) triple."""
    seen: dict[tuple[int, int, int], None] = {}
    for r in records:
        seen.setdefault((r.poi, r.category, r.time_slot), None)
    columns = [
        [nodes.poi(p), nodes.category(c), nodes.slot(t)] for (p, c, t) in seen
    ]
    return _incidence_from_columns("temporal", nodes.total, columns)


def build_spatial_edges(
    vocab: Vocab,
    delta_km: float,
    nodes: NodeSpace | None = None,
    index: SpatialGridIndex | None = None,
) -> IncidenceMatrix:
    """One hyperedge per same-category POI pair within `delta_km`.

    Uses the grid index to limit candidate pairs; output is identical to a
    brute-force all-pairs scan.
    """
    if delta_km <= 0:
        raise DataError(f"distance threshold must be positive, got {delta_km}")
    nodes = nodes if nodes is not None else NodeSpace.from_vocab(vocab)
    if index is None:
        index = SpatialGridIndex(vocab.poi_lat, vocab.poi_lon, cell_km=delta_km)
    columns = []
    for i, j in index.candidate_pairs():
        c = vocab.poi_category[i]
        if c != vocab.poi_category[j]:
            continue
        if haversine_km(vocab.poi_lat[i], vocab.poi_lon[i], vocab.poi_lat[j], vocab.poi_lon[j]) <= delta_km:
            columns.append([nodes.poi(i), nodes.poi(j), nodes.category(c)])
    columns.sort()
    return _incidence_from_columns("spatial", nodes.total, columns)


def build_spatial_edges_bruteforce(vocab: Vocab, delta_km: float, nodes: NodeSpace | None = None) -> IncidenceMatrix:
    """Reference all-pairs construction; the oracle for the grid path."""
    if delta_km <= 0:
        raise DataError(f"distance threshold must be positive, got {delta_km}")
    nodes = nodes if nodes is not None else NodeSpace.from_vocab(vocab)
    columns = []
    for i in range(vocab.poi_count):
        for j in range(i + 1, vocab.poi_count):
            if vocab.poi_category[i] != vocab.poi_category[j]:
                continue
            d = haversine_km(vocab.poi_lat[i], vocab.poi_lon[i], vocab.poi_lat[j], vocab.poi_lon[j])
            if d <= delta_km:
                columns.append([nodes.poi(i), nodes.poi(j), nodes.category(vocab.poi_category[i])])
    columns.sort()
    return _incidence_from_columns("spatial", nodes.total, columns)


def build_preference_edges(records: list[CheckinRecord], nodes: NodeSpace) -> IncidenceMatrix:
    """One hyperedge per (user, category) pair grouping the user's distinct
    visited POIs of that category."""
    groups: dict[tuple[int, int], dict[int, None]] = {}
    for r in records:
        groups.setdefault((r.user, r.category), {}).setdefault(r.poi, None)
    columns = [
        [nodes.user(u), nodes.category(c)] + [nodes.poi(p) for p in pois]
        for (u, c), pois in groups.items()
    ]
    return _incidence_from_columns("preference", nodes.total, columns)


@dataclass
class PropagationOperator:
    """Symmetrically normalized node-to-node smoothing operator.

    A = D_v^{-1/2} H D_e^{-1} H^T D_v^{-1/2}, with 0^{-1/2} := 0 and
    0^{-1} := 0 so isolated nodes and empty edges stay identically zero.
    """

    relation: str
    matrix: sp.csr_matrix  # |V| x |V|, symmetric, nonnegative
    node_degrees: np.ndarray
    edge_degrees: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


def normalize(incidence: IncidenceMatrix) -> PropagationOperator:
    """Build the propagation operator for one incidence matrix."""
    h = incidence.matrix
    dv = np.asarray(h.sum(axis=1)).ravel()
    de = np.asarray(h.sum(axis=0)).ravel()
    with np.errstate(divide="ignore"):
        inv_sqrt_dv = np.where(dv > 0, 1.0 / np.sqrt(dv), 0.0)
        inv_sqrt_de = np.where(de > 0, 1.0 / np.sqrt(de), 0.0)
    b = sp.diags(inv_sqrt_dv) @ h @ sp.diags(inv_sqrt_de)
    b = b.tocsr()
    a = b @ b.T
    a = ((a + a.T) * 0.5).tocsr()
    a.sort_indices()
    return PropagationOperator(
        relation=incidence.relation,
        matrix=a,
        node_degrees=dv,
        edge_degrees=de,
    )


def zero_operator(nodes: NodeSpace, relation: str) -> PropagationOperator:
    """An all-zero operator; ablations may use it instead of dropping a matrix."""
    n = nodes.total
    return PropagationOperator(
        relation=relation,
        matrix=sp.csr_matrix((n, n), dtype=np.float64),
        node_degrees=np.zeros(n),
        edge_degrees=np.zeros(0),
    )


def build_operators(
    records: list[CheckinRecord],
    vocab: Vocab,
    delta_km: float,
    nodes: NodeSpace | None = None,
    drop: str | None = None,
) -> dict[str, PropagationOperator | None]:
    """Build all three propagation operators; `drop` removes one relation."""
    nodes = nodes if nodes is not None else NodeSpace.from_vocab(vocab)
    ops: dict[str, PropagationOperator | None] = {}
    for rel in RELATIONS:
        if rel == drop:
            ops[rel] = None
        elif rel == "temporal":
            ops[rel] = normalize(build_temporal_edges(records, nodes))
        elif rel == "spatial":
            ops[rel] = normalize(build_spatial_edges(vocab, delta_km, nodes))
        else:
            ops[rel] = normalize(build_preference_edges(records, nodes))
    return ops


def export_incidence(incidence: IncidenceMatrix, path: str | Path) -> None:
    """Debug dump as sorted `relation,row,col` coordinate triples."""
    coo = incidence.matrix.tocoo()
    triples = sorted(zip(coo.row.tolist(), coo.col.tolist()))
    with Path(path).open("w", encoding="utf-8") as fh:
        for row, col in triples:
            fh.write(f"{incidence.relation},{row},{col}\n")
