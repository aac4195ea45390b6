"""Test-network generators and the classical-Ising analytic oracles.

The classical 2D Ising partition function is written as a closed tensor
network with one tensor per site: a spin-diagonal core dressed with the
symmetric square root of the bond transfer matrix

    M(beta) = [[e^beta, e^-beta], [e^-beta, e^beta]]

on every incident edge.  This gauge makes the paramagnetic BP fixed point
exactly the uniform message (1,1)/sqrt(2), and even-loop weights decay as
tanh(beta)^|l|.

Small-L periodic lattices produce doubled bonds (L=2 wrap-around); a
doubled bond is represented as a single edge whose transfer matrix is the
elementwise product, i.e. M(2*beta).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bp import MessageSet, uniform_messages
from .errors import FieldNonzero
from .network import Graph, TensorNetwork, phys_leg
from .tensor import DenseTensor, Leg


# --- classical Ising -------------------------------------------------------

@dataclass
class IsingParams:
    L: int
    beta: float
    h: float = 0.0
    topology: str = "torus"
    site_fields: dict = field(default_factory=dict)  # extra per-site fields

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L >= 2 required")
        if self.beta <= 0:
            raise ValueError("beta > 0 required")
        if self.topology not in ("torus", "cylinder"):
            raise ValueError(f"unknown topology {self.topology!r}")


def _sqrt_bond_matrix(beta: float) -> np.ndarray:
    """Symmetric square root of M(beta); eigenbasis is the Hadamard pair."""
    lam_plus = 2.0 * math.cosh(beta)
    lam_minus = 2.0 * math.sinh(beta)
    q = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    return q @ np.diag([math.sqrt(lam_plus), math.sqrt(lam_minus)]) @ q.T


def _ising_pairs(p: IsingParams):
    """Adjacent-site pairs with multiplicities (doubled on L=2 wraps)."""
    L = p.L
    pairs = {}

    def add(a, b):
        key = frozenset((a, b))
        pairs[key] = pairs.get(key, 0) + 1

    for i in range(L):
        for j in range(L):
            v = f"{i},{j}"
            add(v, f"{i},{(j + 1) % L}")                     # right (periodic)
            if p.topology == "torus" or i + 1 < L:
                add(v, f"{(i + 1) % L},{j}")                 # down
    return pairs


def _ising_tn(vertices, pairs: dict, beta: float, fields: dict) -> TensorNetwork:
    """Closed Ising TN from a pair->multiplicity map."""
    edges, bond_dims, roots = {}, {}, {}
    for key, mult in sorted(pairs.items(), key=lambda kv: sorted(kv[0])):
        u, v = sorted(key)
        e = f"{u}|{v}"
        edges[e] = (u, v)
        bond_dims[e] = 2
        roots[e] = _sqrt_bond_matrix(mult * beta)
    graph = Graph(vertices, edges)
    tensors = {}
    for v in graph.vertices:
        inc = graph.incident(v)
        hv = fields.get(v, 0.0)
        data = np.zeros((2,) * len(inc), dtype=complex)
        for si, s in enumerate((+1, -1)):
            w = math.exp(beta * hv * s)
            block = np.array(w, dtype=complex)
            for (e, _) in inc:
                block = np.multiply.outer(block, roots[e][si])
            data += block
        tensors[v] = DenseTensor([Leg(e, 2) for (e, _) in inc], data)
    return TensorNetwork(graph, bond_dims, tensors)


def ising_network(p: IsingParams) -> TensorNetwork:
    """L x L classical Ising partition-function network."""
    vertices = [f"{i},{j}" for i in range(p.L) for j in range(p.L)]
    fields = {v: p.h for v in vertices}
    for v, extra in p.site_fields.items():
        fields[str(v)] = fields.get(str(v), 0.0) + extra
    return _ising_tn(vertices, _ising_pairs(p), p.beta, fields)


def ising_network_3d(shape, beta: float) -> TensorNetwork:
    """Small cubic-torus Ising variant (max degree 6) for enumeration tests."""
    nx, ny, nz = shape
    vertices = [f"{x},{y},{z}" for x in range(nx) for y in range(ny)
                for z in range(nz)]
    pairs = {}

    def add(a, b):
        key = frozenset((a, b))
        pairs[key] = pairs.get(key, 0) + 1

    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                v = f"{x},{y},{z}"
                add(v, f"{(x + 1) % nx},{y},{z}")
                add(v, f"{x},{(y + 1) % ny},{z}")
                add(v, f"{x},{y},{(z + 1) % nz}")
    return _ising_tn(vertices, pairs, beta, {})


def ising_paramagnetic_messages(p: IsingParams, tn=None) -> MessageSet:
    """The analytic symmetric fixed point: uniform messages on every edge."""
    if p.h != 0.0 or any(v != 0.0 for v in p.site_fields.values()):
        raise FieldNonzero("paramagnetic fixed point requires zero field")
    if tn is None:
        tn = ising_network(p)
    return uniform_messages(tn)


def ising_insertion(tn: TensorNetwork, p: IsingParams, gates: dict) -> dict:
    """Replacement site tensors for classical observables.

    ``gates`` maps vertex -> 2x2 matrix G acting on the spin seen by the
    bonds:  T^G_v = sum_{s,t} G[t,s] w(s) prod_e sqrtM_e[t, i_e].
    G = diag(1,-1) is the magnetization insertion (sigma_z analog);
    G = [[0,1],[1,0]] flips the spin seen by the bonds (sigma_x analog);
    G = identity returns the original tensor.
    """
    # recover per-edge multiplicities to rebuild the sqrt factors
    pairs = _ising_pairs(p)
    roots = {}
    for key, mult in pairs.items():
        u, v = sorted(key)
        roots[f"{u}|{v}"] = _sqrt_bond_matrix(mult * p.beta)
    fields = {f"{i},{j}": p.h for i in range(p.L) for j in range(p.L)}
    for v, extra in p.site_fields.items():
        fields[str(v)] = fields.get(str(v), 0.0) + extra
    out = {}
    for v, gate in gates.items():
        v = str(v)
        gate = np.asarray(gate, dtype=complex)
        inc = tn.graph.incident(v)
        data = np.zeros((2,) * len(inc), dtype=complex)
        for si, s in enumerate((+1, -1)):
            w = math.exp(p.beta * fields.get(v, 0.0) * s)
            for ti in range(2):
                if gate[ti, si] == 0:
                    continue
                block = np.array(gate[ti, si] * w, dtype=complex)
                for (e, _) in inc:
                    block = np.multiply.outer(block, roots[e][ti])
                data += block
        out[v] = DenseTensor([Leg(e, 2) for (e, _) in inc], data)
    return out


def ising_exact_logZ(p: IsingParams) -> float:
    """Exact log Z: brute-force spin sum (L <= 4) or transfer matrix."""
    L = p.L
    fields = {f"{i},{j}": p.h for i in range(L) for j in range(L)}
    for v, extra in p.site_fields.items():
        fields[str(v)] = fields.get(str(v), 0.0) + extra
    if L * L <= 16:
        pairs = _ising_pairs(p)
        n = L * L
        idx = {f"{i},{j}": i * L + j for i in range(L) for j in range(L)}
        spins = 1 - 2 * ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1)
        energy = np.zeros(2 ** n)
        for key, mult in pairs.items():
            u, v = sorted(key)
            energy += mult * spins[:, idx[u]] * spins[:, idx[v]]
        site = np.zeros(2 ** n)
        for v, hv in fields.items():
            site += hv * spins[:, idx[v]]
        w = p.beta * (energy + site)
        wmax = w.max()
        return float(wmax + math.log(np.exp(w - wmax).sum()))
    if p.site_fields or p.topology != "torus":
        raise ValueError("transfer-matrix oracle: uniform torus only")
    # column-to-column transfer matrix on the torus
    confs = np.array(list(itertools.product((1, -1), repeat=L)))
    intra = np.einsum("ci,ci->c", confs, np.roll(confs, -1, axis=1))
    fieldt = confs.sum(axis=1)
    inter = confs @ confs.T
    logT = (p.beta * inter
            + 0.5 * p.beta * (intra[:, None] + intra[None, :])
            + 0.5 * p.beta * p.h * (fieldt[:, None] + fieldt[None, :]))
    m = logT.max()
    T = np.exp(logT - m)
    evals = np.linalg.eigvalsh(T)
    lam_max = evals.max()
    return float(L * m + L * math.log(lam_max)
                 + math.log(np.sum((evals / lam_max) ** L)))


# --- toys, PEPS, trees -----------------------------------------------------

def single_loop_network(n: int, seed=0) -> TensorNetwork:
    """Random n-cycle with D=2, dominated by the identity so BP converges."""
    if n < 3:
        raise ValueError("n >= 3 required")
    rng = np.random.default_rng(seed)
    vertices = [f"v{i}" for i in range(n)]
    edges = {f"e{i}": (f"v{i}", f"v{(i + 1) % n}") for i in range(n)}
    graph = Graph(vertices, edges)
    tensors = {}
    for i in range(n):
        left, right = f"e{(i - 1) % n}", f"e{i}"
        data = np.eye(2) + 0.3 * (rng.standard_normal((2, 2))
                                  + 1j * rng.standard_normal((2, 2)))
        tensors[f"v{i}"] = DenseTensor([Leg(left, 2), Leg(right, 2)], data)
    return TensorNetwork(graph, {e: 2 for e in edges}, tensors)


def random_peps(rows: int, cols: int, D: int = 2, phys_dim: int = 2,
                perturbation: float = 0.1, seed=0) -> TensorNetwork:
    """Open-boundary PEPS: product |0> plus a Gaussian perturbation."""
    rng = np.random.default_rng(seed)
    vertices = [f"{i},{j}" for i in range(rows) for j in range(cols)]
    edges = {}
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                edges[f"{i},{j}|{i},{j + 1}"] = (f"{i},{j}", f"{i},{j + 1}")
            if i + 1 < rows:
                edges[f"{i},{j}|{i + 1},{j}"] = (f"{i},{j}", f"{i + 1},{j}")
    graph = Graph(vertices, edges)
    tensors, phys = {}, {}
    for v in vertices:
        inc = graph.incident(v)
        legs = [Leg(e, D) for (e, _) in inc] + [Leg(phys_leg(v), phys_dim)]
        shape = tuple(l.dim for l in legs)
        data = perturbation * (rng.standard_normal(shape)
                               + 1j * rng.standard_normal(shape))
        base = np.zeros(shape, dtype=complex)
        base[(0,) * len(shape)] = 1.0  # product |0> on trivial bond sector
        tensors[v] = DenseTensor(legs, base + data)
        phys[v] = phys_dim
    return TensorNetwork(graph, {e: D for e in edges}, tensors, phys)


def peps_statevector(peps: TensorNetwork) -> DenseTensor:
    """Full state tensor over the physical legs (statevector oracle)."""
    from .tensor import contract_network

    return contract_network(peps.tensors.values())


def random_tree_network(n: int, D: int = 2, seed=0) -> TensorNetwork:
    """Random-attachment tree with random complex tensors."""
    rng = np.random.default_rng(seed)
    vertices = [f"v{i}" for i in range(n)]
    edges = {}
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges[f"e{i}"] = (f"v{j}", f"v{i}")
    graph = Graph(vertices, edges)
    tensors = {}
    for v in vertices:
        inc = graph.incident(v)
        shape = (D,) * len(inc)
        data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        data /= np.linalg.norm(data)
        tensors[v] = DenseTensor([Leg(e, D) for (e, _) in inc], data)
    return TensorNetwork(graph, {e: D for e in edges}, tensors)
