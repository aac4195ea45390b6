import itertools
import math

import numpy as np
import pytest

from bptn.bp import bp_iterate, bp_log_partition, uniform_messages
from bptn.errors import CombinatorialBudgetExceeded
from bptn.loops import (GeneralizedLoop, connected_edge_subsets,
                        enumerate_loops, enumerate_strings,
                        evaluate_weights, excitation_weight, local_factors,
                        loop_decay_profile)
from bptn.models import (IsingParams, ising_network,
                         ising_paramagnetic_messages, random_tree_network,
                         single_loop_network)
from bptn.network import exact_contract


def brute_force_connected_subsets(g, max_weight):
    """Oracle: scan all edge subsets, keep connected ones."""
    edges = sorted(g.edges)
    out = set()
    for r in range(1, max_weight + 1):
        for combo in itertools.combinations(edges, r):
            # connectivity via union-find over touched vertices
            verts = {}
            for e in combo:
                u, v = g.endpoints(e)
                verts.setdefault(u, u)
                verts.setdefault(v, v)

            def find(x):
                while verts[x] != x:
                    verts[x] = verts[verts[x]]
                    x = verts[x]
                return x

            for e in combo:
                u, v = g.endpoints(e)
                verts[find(u)] = find(v)
            roots = {find(x) for x in verts}
            if len(roots) == 1:
                out.add(frozenset(combo))
    return out


def test_connected_subsets_exactly_once_vs_brute_force():
    p = IsingParams(L=3, beta=0.2)
    g = ising_network(p).graph
    got = list(connected_edge_subsets(g, 4))
    want = brute_force_connected_subsets(g, 4)
    assert len(got) == len(set(map(frozenset, got))), "duplicates emitted"
    assert set(map(frozenset, got)) == want


def test_enumerate_loops_min_degree_two():
    p = IsingParams(L=4, beta=0.2)
    g = ising_network(p).graph
    loops = enumerate_loops(g, 4)
    # weight-4 loops on the 4x4 torus: 16 plaquettes + 8 winding cycles
    assert len(loops) == 24
    assert all(l.weight == 4 for l in loops)
    # against the brute-force degree filter
    want = {s for s in brute_force_connected_subsets(g, 4)
            if all(d >= 2 for d in _degrees(g, s).values())}
    assert {l.edges for l in loops} == want


def _degrees(g, edges):
    deg = {}
    for e in edges:
        u, v = g.endpoints(e)
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    return deg


def test_enumeration_budget():
    p = IsingParams(L=4, beta=0.2)
    g = ising_network(p).graph
    with pytest.raises(CombinatorialBudgetExceeded):
        list(connected_edge_subsets(g, 8, budget=100))


def test_tree_has_no_loops():
    tn = random_tree_network(10, D=2, seed=0)
    assert enumerate_loops(tn.graph, 10) == []


def test_single_loop_network_has_one_loop():
    tn = single_loop_network(6)
    loops = enumerate_loops(tn.graph, 6)
    assert len(loops) == 1 and loops[0].weight == 6


def test_single_loop_weight_is_exact_correction():
    tn = single_loop_network(6, seed=2)
    res = bp_iterate(tn, uniform_messages(tn), tol=1e-13)
    assert res.converged
    (loop,) = enumerate_loops(tn.graph, 6)
    zl = excitation_weight(tn, res.messages, loop).value
    z = exact_contract(tn)
    z_bp = np.exp(bp_log_partition(tn, res.messages))
    assert abs(z / z_bp - (1 + zl)) < 1e-12


def test_plaquette_weight_tanh_oracle():
    """Ising plaquette weight at the symmetric point is tanh(beta)^4."""
    p = IsingParams(L=4, beta=0.2)
    tn = ising_network(p)
    ms = ising_paramagnetic_messages(p, tn)
    loops = enumerate_loops(tn.graph, 4)
    for l in loops:
        w = excitation_weight(tn, ms, l).value
        assert abs(w - math.tanh(0.2) ** 4) < 1e-14


def test_open_strings_vanish_without_insertion():
    p = IsingParams(L=4, beta=0.2)
    tn = ising_network(p)
    ms = ising_paramagnetic_messages(p, tn)
    strings = enumerate_strings(tn.graph, [{"0,0"}, {"2,2"}], 5)
    opens = [s for s in strings if s.kind == "string"]
    assert opens, "expected open strings in scope"
    for s in opens[:40]:
        assert abs(excitation_weight(tn, ms, s).value) < 1e-13


def test_enumerate_strings_includes_closed_loops():
    p = IsingParams(L=4, beta=0.2)
    g = ising_network(p).graph
    strings = enumerate_strings(g, [{"0,0"}], 4)
    closed = [s for s in strings if s.kind == "closed"]
    assert {s.edges for s in closed} == {l.edges
                                         for l in enumerate_loops(g, 4)}
    # terminals recorded for anything touching the region
    for s in strings:
        assert (0 in s.terminals) == bool(s.vertices & {"0,0"})


def test_weight_locality_matches_global_contraction():
    """Support-local weight equals the full-network projected contraction."""
    tn = single_loop_network(5, seed=4)
    res = bp_iterate(tn, uniform_messages(tn), tol=1e-13)
    (loop,) = enumerate_loops(tn.graph, 5)
    local = excitation_weight(tn, res.messages, loop).value
    # global: on the single loop the support is the whole network, so the
    # locally computed value must reproduce Z/Z_BP - 1
    z = exact_contract(tn)
    z_bp = np.exp(bp_log_partition(tn, res.messages))
    assert abs(local - (z / z_bp - 1)) < 1e-12


def test_evaluate_weights_threaded_matches_serial():
    p = IsingParams(L=4, beta=0.25)
    tn = ising_network(p)
    ms = ising_paramagnetic_messages(p, tn)
    loops = enumerate_loops(tn.graph, 6)
    serial = evaluate_weights(tn, ms, loops, threads=1)
    threaded = evaluate_weights(tn, ms, loops, threads=4)
    for a, b in zip(serial, threaded):
        assert a.loop.key == b.loop.key and a.value == b.value


def test_loop_decay_profile_analytic():
    p = IsingParams(L=4, beta=0.2)
    tn = ising_network(p)
    ms = ising_paramagnetic_messages(p, tn)
    loops = enumerate_loops(tn.graph, 6)
    rows, notes = loop_decay_profile(evaluate_weights(tn, ms, loops))
    c_expected = -math.log(math.tanh(0.2))
    for row in rows:
        assert row["parity"] == "even"
        assert abs(row["c_estimate"] - c_expected) < 1e-10
