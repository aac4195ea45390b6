"""Graph and tensor-network data model plus the exact contraction oracle.

A TensorNetwork is a simple graph (no self-loops, no parallel edges) whose
vertices hold DenseTensors.  A closed network's tensors have exactly the
incident edge ids as legs; the PEPS form additionally carries one physical
leg per site, with id ``phys_leg(v)``.

Exact contraction is a greedy pairwise contraction used as ground truth at
desk scale -- correctness over speed.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from .errors import (DimensionMismatch, MissingPhysicalLeg, OverlappingRegions,
                     RegionMismatch, TooLarge)
from .tensor import DenseTensor, Leg, contract_network

DEFAULT_SIZE_CAP = 2 ** 26


def phys_leg(v) -> str:
    """Leg id of the physical leg at vertex v (PEPS form)."""
    return f"p:{v}"


class Graph:
    """Undirected simple graph with string vertex and edge ids."""

    def __init__(self, vertices, edges):
        """``edges`` maps edge id -> (u, v)."""
        self.vertices = sorted(str(v) for v in vertices)
        vset = set(self.vertices)
        self.edges = {}
        seen_pairs = set()
        for e, (u, v) in edges.items():
            e, u, v = str(e), str(u), str(v)
            if u == v:
                raise DimensionMismatch(f"edge {e!r} is a self-loop at {u!r}")
            if u not in vset or v not in vset:
                raise DimensionMismatch(f"edge {e!r} touches unknown vertex")
            pair = frozenset((u, v))
            if pair in seen_pairs:
                raise DimensionMismatch(f"parallel edge {e!r} between {u!r},{v!r}")
            seen_pairs.add(pair)
            self.edges[e] = (u, v)
        self._adj = {v: [] for v in self.vertices}
        for e, (u, v) in self.edges.items():
            self._adj[u].append((e, v))
            self._adj[v].append((e, u))
        for v in self._adj:
            self._adj[v].sort()

    def neighbors(self, v):
        return [w for (_, w) in self._adj[str(v)]]

    def incident(self, v):
        """Sorted list of (edge id, neighbor) pairs at v."""
        return list(self._adj[str(v)])

    def degree(self, v) -> int:
        return len(self._adj[str(v)])

    @property
    def max_degree(self) -> int:
        return max((self.degree(v) for v in self.vertices), default=0)

    def endpoints(self, e):
        return self.edges[str(e)]

    def other_end(self, e, v):
        u, w = self.edges[str(e)]
        return w if u == str(v) else u

    def edge_between(self, u, v):
        for (e, w) in self._adj[str(u)]:
            if w == str(v):
                return e
        return None


class TensorNetwork:
    """Graph + per-edge bond dims + per-vertex tensors (+ physical dims)."""

    def __init__(self, graph: Graph, bond_dims: dict, tensors: dict,
                 phys_dims: dict | None = None):
        self.graph = graph
        self.bond_dims = {str(e): int(d) for e, d in bond_dims.items()}
        self.phys_dims = {str(v): int(d) for v, d in (phys_dims or {}).items()}
        self.tensors = {str(v): t for v, t in tensors.items()}
        self._validate()

    def _validate(self):
        if set(self.bond_dims) != set(self.graph.edges):
            raise DimensionMismatch("bond_dims keys must equal edge ids")
        if set(self.tensors) != set(self.graph.vertices):
            raise DimensionMismatch("tensors keys must equal vertex ids")
        for v, t in self.tensors.items():
            want = {e for (e, _) in self.graph.incident(v)}
            if v in self.phys_dims:
                want.add(phys_leg(v))
            if set(t.leg_ids) != want:
                raise DimensionMismatch(
                    f"vertex {v!r}: tensor legs {sorted(t.leg_ids)} != "
                    f"incident legs {sorted(want)}")
            for l in t.legs:
                if l.id in self.bond_dims and l.dim != self.bond_dims[l.id]:
                    raise DimensionMismatch(
                        f"vertex {v!r}, leg {l.id!r}: dim {l.dim} != "
                        f"bond dim {self.bond_dims[l.id]}")
                if l.id == phys_leg(v) and l.dim != self.phys_dims.get(v):
                    raise DimensionMismatch(
                        f"vertex {v!r}: physical dim {l.dim} != declared "
                        f"{self.phys_dims.get(v)}")

    @property
    def is_closed(self) -> bool:
        return not self.phys_dims

    def replace_tensors(self, replacements: dict) -> "TensorNetwork":
        tensors = dict(self.tensors)
        for v, t in replacements.items():
            tensors[str(v)] = t
        return TensorNetwork(self.graph, self.bond_dims, tensors, self.phys_dims)


class OperatorInsertion:
    """A region of vertices with one physical-space matrix per vertex."""

    def __init__(self, site_operators: dict):
        self.site_operators = {
            str(v): np.asarray(m, dtype=complex) for v, m in site_operators.items()}
        self.region = frozenset(self.site_operators)

    def operator(self, v):
        return self.site_operators[str(v)]


def exact_contract(tn: TensorNetwork, size_cap: int = DEFAULT_SIZE_CAP) -> complex:
    """Full contraction of a closed network; ground-truth oracle."""
    if not tn.is_closed:
        raise MissingPhysicalLeg("exact_contract needs a closed network")
    result = contract_network(tn.tensors.values(), size_cap=size_cap)
    return result.item()


def _double_tensor(t: DenseTensor, pid: str, op=None) -> DenseTensor:
    """Pair a site tensor with its conjugate over the physical leg.

    With ``op`` given, sandwiches the matrix between bra and ket:
    sum_{i,j} conj(T)_i op[i,j] T_j.  Each bond leg e of dimension D
    becomes a fused leg of dimension D^2, fused ket-major.
    """
    ids = t.leg_ids
    p_ax = ids.index(pid)
    ket = t.data
    if op is not None:
        op = np.asarray(op, dtype=complex)
        ket = np.moveaxis(np.tensordot(ket, op, axes=([p_ax], [1])), -1, p_ax)
    d = np.tensordot(ket, np.conj(t.data), axes=(p_ax, p_ax))
    bond_legs = [l for l in t.legs if l.id != pid]
    k = len(bond_legs)
    # interleave (ket_1, bra_1, ket_2, bra_2, ...) then fuse each pair
    perm = [x for i in range(k) for x in (i, i + k)]
    d = np.transpose(d, perm).reshape([l.dim ** 2 for l in bond_legs])
    return DenseTensor([Leg(l.id, l.dim ** 2) for l in bond_legs], d)


def build_norm_network(peps: TensorNetwork) -> TensorNetwork:
    """Closed network for <psi|psi> with per-site double tensors."""
    missing = [v for v in peps.graph.vertices if v not in peps.phys_dims]
    if missing:
        raise MissingPhysicalLeg(f"no physical leg at vertices {missing}")
    tensors = {v: _double_tensor(peps.tensors[v], phys_leg(v))
               for v in peps.graph.vertices}
    bond_dims = {e: d * d for e, d in peps.bond_dims.items()}
    return TensorNetwork(peps.graph, bond_dims, tensors)


def _check_region(peps: TensorNetwork, ins: OperatorInsertion):
    for v in ins.region:
        if v not in peps.phys_dims:
            raise RegionMismatch(f"vertex {v!r} not in network or not physical")
        d = peps.phys_dims[v]
        if ins.operator(v).shape != (d, d):
            raise RegionMismatch(
                f"vertex {v!r}: operator shape {ins.operator(v).shape} "
                f"!= ({d}, {d})")


def insert_operator(tn_norm: TensorNetwork, peps: TensorNetwork,
                    ins: OperatorInsertion) -> TensorNetwork:
    """The Z^A network: double tensors on A sandwich O_v; others shared."""
    _check_region(peps, ins)
    repl = {v: _double_tensor(peps.tensors[v], phys_leg(v), ins.operator(v))
            for v in ins.region}
    return tn_norm.replace_tensors(repl)


def _expm(m):
    """Matrix exponential by eigendecomposition (dense, desk scale)."""
    w, vr = np.linalg.eig(np.asarray(m, dtype=complex))
    return (vr * np.exp(w)) @ np.linalg.inv(vr)


def perturbed_network(tn_norm: TensorNetwork, peps: TensorNetwork,
                      ins_list) -> TensorNetwork:
    """Insert exp(lambda_i O_i) on pairwise disjoint regions.

    Single-site regions get a per-site matrix exponential.  Multi-site
    regions exponentiate the regional operator (the tensor product of the
    site matrices) densely; the resulting non-factorized gate is absorbed
    by merging the region into a supervertex, so the returned network is
    meant for exact contraction (finite-difference oracles).
    """
    seen = set()
    for ins, _lam in ins_list:
        _check_region(peps, ins)
        if seen & ins.region:
            raise OverlappingRegions(f"regions overlap at {sorted(seen & ins.region)}")
        seen |= ins.region
    out = tn_norm
    for ins, lam in ins_list:
        if len(ins.region) == 1:
            (v,) = ins.region
            gate = _expm(lam * ins.operator(v))
            out = out.replace_tensors(
                {v: _double_tensor(peps.tensors[v], phys_leg(v), gate)})
        else:
            out = _merge_perturbed_region(out, peps, ins, lam)
    return out


def _merge_perturbed_region(tn_norm, peps, ins, lam):
    """Replace a multi-site region by one supervertex carrying exp(lam*O)."""
    region = sorted(ins.region)
    # joint ket over the region: contract internal bonds, keep physical legs
    ket = contract_network([peps.tensors[v] for v in region])
    pids = [phys_leg(v) for v in region]
    pdims = [peps.phys_dims[v] for v in region]
    ids = ket.leg_ids
    p_axes = [ids.index(p) for p in pids]
    bond_legs = [l for l in ket.legs if l.id not in pids]
    # move physical axes to the back, in region order
    rest = [i for i in range(len(ids)) if i not in p_axes]
    data = np.transpose(ket.data, rest + p_axes)
    bshape = [l.dim for l in bond_legs]
    data = data.reshape(bshape + [int(np.prod(pdims))])
    op = np.array([[1.0 + 0j]])
    for v in region:
        op = np.kron(op, ins.operator(v))
    gate = _expm(lam * op)
    data = np.tensordot(data, gate, axes=([len(bshape)], [1]))
    # pair with the conjugate joint ket over the joint physical index
    bra = np.transpose(ket.data, rest + p_axes).reshape(
        bshape + [int(np.prod(pdims))])
    d = np.tensordot(data, np.conj(bra), axes=(len(bshape), len(bshape)))
    k = len(bond_legs)
    perm = [x for i in range(k) for x in (i, i + k)]
    d = np.transpose(d, perm).reshape([l.dim ** 2 for l in bond_legs])
    super_t = DenseTensor([Leg(l.id, l.dim ** 2) for l in bond_legs], d)
    merged, fused, new_id = merge_region(
        tn_norm, region, supertensor=super_t)
    return merged


def merge_region(tn: TensorNetwork, region, supertensor: DenseTensor | None = None,
                 new_id: str | None = None):
    """Merge a vertex set into one supervertex on a closed network.

    Internal edges are contracted exactly; groups of edges from the region
    to a common outside neighbor are fused into a single edge (product
    dimension) so the result stays a simple graph.  ``supertensor``
    overrides the contraction of the region's own tensors (it must carry
    the boundary edge ids as legs, pre-fusion).

    Returns (merged network, fused-edge map {kept id: [original ids]},
    supervertex id).
    """
    region = sorted(str(v) for v in region)
    rset = set(region)
    g = tn.graph
    if new_id is None:
        new_id = "+".join(region)
    if supertensor is None:
        supertensor = contract_network([tn.tensors[v] for v in region])
    # boundary edges grouped by outside neighbor
    groups = {}  # outside vertex -> sorted list of edge ids
    internal = set()
    for v in region:
        for (e, w) in g.incident(v):
            if w in rset:
                internal.add(e)
            else:
                groups.setdefault(w, []).append(e)
    for w in groups:
        groups[w].sort()
    fused = {es[0]: es for es in groups.values() if len(es) > 1}

    def fuse(t: DenseTensor) -> DenseTensor:
        for kept, es in fused.items():
            if kept not in t.leg_ids:
                continue
            ids = t.leg_ids
            axes = [ids.index(e) for e in es]
            rest = [i for i in range(len(ids)) if i not in axes]
            data = np.transpose(t.data, rest + axes)
            dims = [t.dim(e) for e in es]
            data = data.reshape([t.legs[i].dim for i in rest] + [int(np.prod(dims))])
            legs = [t.legs[i] for i in rest] + [Leg(kept, int(np.prod(dims)))]
            t = DenseTensor(legs, data)
        return t

    vertices = [v for v in g.vertices if v not in rset] + [new_id]
    edges, bond_dims = {}, {}
    for e, (u, v) in g.edges.items():
        if e in internal:
            continue
        if u in rset or v in rset:
            w = v if u in rset else u
            kept = groups[w][0]
            if e != kept:
                continue  # absorbed into the fused edge
            edges[kept] = (new_id, w)
            bond_dims[kept] = int(np.prod([tn.bond_dims[x] for x in groups[w]]))
        else:
            edges[e] = (u, v)
            bond_dims[e] = tn.bond_dims[e]
    tensors = {new_id: fuse(supertensor)}
    touched = set(groups)
    for v in g.vertices:
        if v in rset:
            continue
        tensors[v] = fuse(tn.tensors[v]) if v in touched else tn.tensors[v]
    merged = TensorNetwork(Graph(vertices, edges), bond_dims, tensors)
    return merged, fused, new_id


def graph_distance(g: Graph, A, B):
    """Min BFS distance between vertex sets; inf when disconnected."""
    A = {str(a) for a in A}
    B = {str(b) for b in B}
    if not A or not B:
        raise RegionMismatch("graph_distance needs nonempty vertex sets")
    if A & B:
        return 0
    dist = {a: 0 for a in A}
    q = deque(A)
    while q:
        v = q.popleft()
        for w in g.neighbors(v):
            if w not in dist:
                dist[w] = dist[v] + 1
                if w in B:
                    return dist[w]
                q.append(w)
    return math.inf
