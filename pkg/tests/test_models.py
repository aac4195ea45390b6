import itertools
import math

import numpy as np
import pytest

from bptn.bp import bp_iterate, self_consistency_residual, uniform_messages
from bptn.errors import FieldNonzero
from bptn.models import (IsingParams, ising_exact_logZ, ising_insertion,
                         ising_network, ising_network_3d,
                         ising_paramagnetic_messages, peps_statevector,
                         random_peps, random_tree_network,
                         single_loop_network)
from bptn.network import build_norm_network, exact_contract
from bptn.tnio import load_network, save_network


def _spin_sum_logZ(p: IsingParams):
    """Independent oracle: explicit sum over all spin configurations."""
    L = p.L
    sites = [(i, j) for i in range(L) for j in range(L)]
    idx = {s: k for k, s in enumerate(sites)}
    bonds = {}
    for i, j in sites:
        for di, dj in ((0, 1), (1, 0)):
            a, b = idx[(i, j)], idx[((i + di) % L, (j + dj) % L)]
            if a == b:
                continue
            key = frozenset((a, b))
            bonds[key] = bonds.get(key, 0) + 1
    n = L * L
    spins = 1 - 2 * ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1)
    energy = np.zeros(2 ** n)
    for key, mult in bonds.items():
        a, b = tuple(key)
        energy += mult * spins[:, a] * spins[:, b]
    energy += p.h * spins.sum(axis=1)
    w = p.beta * energy
    wmax = w.max()
    return float(wmax + math.log(np.exp(w - wmax).sum()))


@pytest.mark.parametrize("L,beta,h", [(2, 0.3, 0.0), (3, 0.25, 0.1),
                                      (4, 0.2, 0.0)])
def test_ising_network_contracts_to_exact_logZ(L, beta, h):
    p = IsingParams(L=L, beta=beta, h=h)
    tn = ising_network(p)
    z = exact_contract(tn)
    assert abs(z.imag) < 1e-10 * abs(z)
    assert abs(math.log(z.real) - ising_exact_logZ(p)) < 1e-10


def test_ising_exact_logZ_vs_independent_spin_sum():
    for L, beta, h in [(2, 0.4, 0.0), (3, 0.2, 0.15)]:
        p = IsingParams(L=L, beta=beta, h=h)
        assert abs(ising_exact_logZ(p) - _spin_sum_logZ(p)) < 1e-10


def test_transfer_matrix_branch_matches_tensor_contraction():
    """The transfer-matrix branch (L=5 > brute-force cutoff) against exact
    contraction of the partition-function network."""
    p = IsingParams(L=5, beta=0.25, h=0.1)
    z = exact_contract(ising_network(p))
    assert abs(ising_exact_logZ(p) - math.log(z.real)) < 1e-9


def test_paramagnetic_messages_are_fixed_point():
    p = IsingParams(L=4, beta=0.35)
    tn = ising_network(p)
    ms = ising_paramagnetic_messages(p, tn)
    assert self_consistency_residual(tn, ms) < 1e-14


def test_paramagnetic_messages_require_zero_field():
    with pytest.raises(FieldNonzero):
        ising_paramagnetic_messages(IsingParams(L=4, beta=0.3, h=0.1))
    with pytest.raises(FieldNonzero):
        ising_paramagnetic_messages(
            IsingParams(L=4, beta=0.3, site_fields={"0,0": 0.2}))


def test_ising_insertion_identity_gate_is_noop():
    p = IsingParams(L=3, beta=0.3, h=0.1)
    tn = ising_network(p)
    out = ising_insertion(tn, p, {"1,1": np.eye(2)})
    assert np.allclose(out["1,1"].data, tn.tensors["1,1"].data)


def test_ising_insertion_magnetization_oracle():
    """<sigma_z> at one site from the decorated network equals the spin-sum
    expectation."""
    p = IsingParams(L=3, beta=0.25, h=0.2)
    tn = ising_network(p)
    gates = ising_insertion(tn, p, {"1,1": np.diag([1.0, -1.0])})
    dec = tn.replace_tensors(gates)
    got = exact_contract(dec) / exact_contract(tn)
    # spin-sum oracle
    L = 3
    sites = [(i, j) for i in range(L) for j in range(L)]
    idx = {s: k for k, s in enumerate(sites)}
    num = den = 0.0
    for conf in itertools.product((1, -1), repeat=L * L):
        e = 0.0
        for i, j in sites:
            e += conf[idx[(i, j)]] * conf[idx[(i, (j + 1) % L)]]
            e += conf[idx[(i, j)]] * conf[idx[((i + 1) % L, j)]]
        e += p.h * sum(conf)
        w = math.exp(p.beta * e)
        den += w
        num += w * conf[idx[(1, 1)]]
    assert abs(got - num / den) < 1e-10


def test_ising_insertion_flip_gate_identity_at_zero_field():
    """The spin-flip gate leaves Z invariant at h=0 (global Z2 symmetry)."""
    p = IsingParams(L=3, beta=0.3)
    tn = ising_network(p)
    gates = ising_insertion(tn, p, {"0,0": np.array([[0.0, 1.0], [1.0, 0.0]])})
    dec = tn.replace_tensors(gates)
    z0, z1 = exact_contract(tn), exact_contract(dec)
    assert abs(z1 - z0) < 1e-10 * abs(z0)


def test_ising_3d_degree_six():
    tn = ising_network_3d((2, 2, 2), beta=0.2)
    assert tn.graph.max_degree == 3  # 2x2x2 torus has doubled bonds fused
    tn2 = ising_network_3d((3, 3, 2), beta=0.2)
    degs = {tn2.graph.degree(v) for v in tn2.graph.vertices}
    assert degs == {5}  # z-direction wrap doubles at nz=2
    tn3 = ising_network_3d((3, 3, 3), beta=0.15)
    assert all(tn3.graph.degree(v) == 6 for v in tn3.graph.vertices)


def test_single_loop_network_converges():
    tn = single_loop_network(7, seed=1)
    res = bp_iterate(tn, uniform_messages(tn), tol=1e-12)
    assert res.converged


def test_random_tree_shape():
    tn = random_tree_network(9, D=3, seed=2)
    assert len(tn.graph.edges) == 8  # a tree
    assert all(d == 3 for d in tn.bond_dims.values())


def test_random_peps_norm_positive_and_statevector():
    peps = random_peps(2, 2, D=2, perturbation=0.2, seed=3)
    tn = build_norm_network(peps)
    norm = exact_contract(tn)
    psi = peps_statevector(peps)
    assert abs(norm - np.sum(np.abs(psi.data) ** 2)) < 1e-10 * abs(norm)
    assert norm.real > 0


def test_generators_roundtrip_through_interchange_format(tmp_path):
    cases = [
        ising_network(IsingParams(L=3, beta=0.3, h=0.1)),
        random_peps(2, 2, D=2, perturbation=0.3, seed=5),
        random_tree_network(6, D=2, seed=6),
        single_loop_network(5, seed=7),
    ]
    for i, tn in enumerate(cases):
        path = tmp_path / f"case{i}.json"
        save_network(path, tn)
        back = load_network(path)
        assert back.bond_dims == tn.bond_dims
        assert back.phys_dims == tn.phys_dims
        for v in tn.graph.vertices:
            assert np.array_equal(back.tensors[v].data, tn.tensors[v].data)
