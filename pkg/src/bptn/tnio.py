"""TN interchange file (JSON) load/save, plus message serialization.

Format:
    {"vertices": [ids],
     "edges": [{"id", "u", "v", "dim"}],
     "tensors": {vertex: {"legs": [leg ids], "dims": [ints],
                          "re": [floats], "im": [floats]}},
     "physical": {vertex: dim},
     "messages": {"v->w": {"re": [...], "im": [...]}}}   # optional

Data is row-major in the listed leg order.  Floats are serialized with
shortest round-trip repr, so save/load is bit-exact.  The loader validates
every invariant and rejects on the first violation with a path-qualified
message.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InvalidNetworkFile
from .network import Graph, TensorNetwork
from .tensor import DenseTensor, Leg


def network_to_dict(tn: TensorNetwork, messages=None) -> dict:
    doc = {
        "vertices": list(tn.graph.vertices),
        "edges": [{"id": e, "u": u, "v": v, "dim": tn.bond_dims[e]}
                  for e, (u, v) in sorted(tn.graph.edges.items())],
        "tensors": {},
    }
    for v in tn.graph.vertices:
        t = tn.tensors[v]
        doc["tensors"][v] = {
            "legs": t.leg_ids,
            "dims": [l.dim for l in t.legs],
            "re": np.real(t.data).ravel().tolist(),
            "im": np.imag(t.data).ravel().tolist(),
        }
    if tn.phys_dims:
        doc["physical"] = dict(tn.phys_dims)
    if messages is not None:
        doc["messages"] = {
            f"{v}->{w}": {
                "re": np.real(m.data).ravel().tolist(),
                "im": np.imag(m.data).ravel().tolist(),
            }
            for (v, w), m in sorted(messages.messages.items())
        }
    return doc


def save_network(path, tn: TensorNetwork, messages=None):
    with open(path, "w") as f:
        json.dump(network_to_dict(tn, messages), f)
        f.write("\n")


def _fail(path, msg):
    raise InvalidNetworkFile(f"{path}: {msg}")


def network_from_dict(doc: dict) -> TensorNetwork:
    for key in ("vertices", "edges", "tensors"):
        if key not in doc:
            _fail(key, "missing required section")
    vertices = [str(v) for v in doc["vertices"]]
    if len(set(vertices)) != len(vertices):
        _fail("vertices", "duplicate vertex ids")
    edges, bond_dims = {}, {}
    for i, rec in enumerate(doc["edges"]):
        for key in ("id", "u", "v", "dim"):
            if key not in rec:
                _fail(f"edges[{i}]", f"missing field {key!r}")
        e = str(rec["id"])
        if e in edges:
            _fail(f"edges[{i}]", f"duplicate edge id {e!r}")
        if int(rec["dim"]) < 1:
            _fail(f"edges[{i}]", f"dim must be >= 1, got {rec['dim']}")
        edges[e] = (str(rec["u"]), str(rec["v"]))
        bond_dims[e] = int(rec["dim"])
    try:
        graph = Graph(vertices, edges)
    except Exception as exc:
        _fail("edges", str(exc))
    phys = {str(v): int(d) for v, d in doc.get("physical", {}).items()}
    for v in phys:
        if v not in graph._adj:
            _fail(f"physical/{v}", "unknown vertex")
    tensors = {}
    for v in vertices:
        if v not in doc["tensors"]:
            _fail(f"tensors/{v}", "missing tensor")
        rec = doc["tensors"][v]
        legs = [str(x) for x in rec.get("legs", [])]
        dims = [int(x) for x in rec.get("dims", [])]
        if len(legs) != len(dims):
            _fail(f"tensors/{v}", "legs and dims length mismatch")
        re = np.asarray(rec.get("re", []), dtype=float)
        im = np.asarray(rec.get("im", []), dtype=float)
        if re.shape != im.shape:
            _fail(f"tensors/{v}", "re and im length mismatch")
        want = int(np.prod(dims)) if dims else 1
        if re.size != want:
            _fail(f"tensors/{v}", f"data length {re.size} != prod(dims) {want}")
        try:
            tensors[v] = DenseTensor(
                [Leg(l, d) for l, d in zip(legs, dims)],
                re + 1j * im)
        except Exception as exc:
            _fail(f"tensors/{v}", str(exc))
    try:
        return TensorNetwork(graph, bond_dims, tensors, phys)
    except Exception as exc:
        _fail("network", str(exc))


def load_network(path) -> TensorNetwork:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            _fail(path, f"not valid JSON ({exc})")
    try:
        return network_from_dict(doc)
    except InvalidNetworkFile as exc:
        raise InvalidNetworkFile(f"{path}: {exc}") from None


def load_messages(path, tn: TensorNetwork):
    """Load the optional message section; returns a MessageSet or None."""
    from .bp import MessageSet

    with open(path) as f:
        doc = json.load(f)
    if "messages" not in doc:
        return None
    msgs = {}
    for key, rec in doc["messages"].items():
        if "->" not in key:
            _fail(f"messages/{key}", "key must be 'v->w'")
        v, w = key.split("->", 1)
        e = tn.graph.edge_between(v, w)
        if e is None:
            _fail(f"messages/{key}", "no such edge")
        data = np.asarray(rec["re"], dtype=float) + 1j * np.asarray(rec["im"], dtype=float)
        if data.size != tn.bond_dims[e]:
            _fail(f"messages/{key}", "length does not match bond dim")
        msgs[(v, w)] = DenseTensor([Leg(e, tn.bond_dims[e])], data)
    return MessageSet(tn, msgs)
