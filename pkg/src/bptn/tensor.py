"""Minimal dense labeled-leg tensor kernel.

Tensors carry an ordered list of legs, each a (string id, dimension) pair,
and a complex ndarray whose axes follow the leg order.  After every
operation legs are brought to canonical (sorted-by-id) order, so equality
of tensors is independent of construction history.

The pairing used throughout is the *bilinear* star contraction -- no
complex conjugation is ever implied.  All operations are pure.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, LegCollision


class Leg:
    """A labeled tensor leg. ``id`` is a string, ``dim`` a positive int."""

    __slots__ = ("id", "dim")

    def __init__(self, id: str, dim: int):
        if dim < 1:
            raise DimensionMismatch(f"leg {id!r}: dim must be >= 1, got {dim}")
        self.id = str(id)
        self.dim = int(dim)

    def __repr__(self):
        return f"Leg({self.id!r}, {self.dim})"

    def __eq__(self, other):
        return isinstance(other, Leg) and self.id == other.id and self.dim == other.dim

    def __hash__(self):
        return hash((self.id, self.dim))


class DenseTensor:
    """Dense complex tensor with canonically ordered labeled legs."""

    __slots__ = ("legs", "data")

    def __init__(self, legs: Sequence[Leg], data):
        legs = [l if isinstance(l, Leg) else Leg(*l) for l in legs]
        ids = [l.id for l in legs]
        if len(set(ids)) != len(ids):
            raise LegCollision(f"duplicate leg ids on one tensor: {ids}")
        data = np.asarray(data, dtype=complex)
        shape = tuple(l.dim for l in legs)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionMismatch(
                f"data size {data.size} does not match leg dims {shape}")
        data = data.reshape(shape)
        # canonical order: sort legs by id, permute axes accordingly
        order = sorted(range(len(legs)), key=lambda i: legs[i].id)
        self.legs = [legs[i] for i in order]
        self.data = np.ascontiguousarray(np.transpose(data, order))

    # -- conveniences -------------------------------------------------------

    @property
    def leg_ids(self):
        return [l.id for l in self.legs]

    def dim(self, leg_id: str) -> int:
        for l in self.legs:
            if l.id == leg_id:
                return l.dim
        raise KeyError(leg_id)

    def relabel(self, mapping: dict) -> "DenseTensor":
        """Return a copy with leg ids renamed via ``mapping`` (id -> new id)."""
        legs = [Leg(mapping.get(l.id, l.id), l.dim) for l in self.legs]
        return DenseTensor(legs, self.data)

    def scale(self, c) -> "DenseTensor":
        return DenseTensor(self.legs, self.data * c)

    def conj(self) -> "DenseTensor":
        return DenseTensor(self.legs, np.conj(self.data))

    def norm2(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return float(np.linalg.norm(self.data.ravel()))

    def item(self) -> complex:
        if self.legs:
            raise DimensionMismatch("item() on a non-scalar tensor")
        return complex(self.data.item())

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"DenseTensor(legs={self.legs!r}, shape={self.data.shape})"

    def allclose(self, other: "DenseTensor", rtol=1e-12, atol=1e-12) -> bool:
        return (self.leg_ids == other.leg_ids
                and all(a.dim == b.dim for a, b in zip(self.legs, other.legs))
                and np.allclose(self.data, other.data, rtol=rtol, atol=atol))


def scalar(value) -> DenseTensor:
    return DenseTensor([], np.asarray(value, dtype=complex))


def contract_pair(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Contract all shared legs of a and b (star operation).

    Returns a tensor over the symmetric difference of the leg sets; a full
    overlap yields a scalar tensor.
    """
    a_ids, b_ids = a.leg_ids, b.leg_ids
    shared = [i for i in a_ids if i in set(b_ids)]
    for s in shared:
        if a.dim(s) != b.dim(s):
            raise DimensionMismatch(
                f"leg {s!r}: dim {a.dim(s)} vs {b.dim(s)}")
    ax_a = [a_ids.index(s) for s in shared]
    ax_b = [b_ids.index(s) for s in shared]
    data = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    legs = ([l for l in a.legs if l.id not in shared]
            + [l for l in b.legs if l.id not in shared])
    return DenseTensor(legs, data)


def outer(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Tensor product; leg id sets must be disjoint."""
    overlap = set(a.leg_ids) & set(b.leg_ids)
    if overlap:
        raise LegCollision(f"outer with shared leg ids {sorted(overlap)}")
    data = np.multiply.outer(a.data, b.data)
    return DenseTensor(list(a.legs) + list(b.legs), data)


def inner(a: DenseTensor, b: DenseTensor) -> complex:
    """Bilinear full pairing over identical leg sets (no conjugation)."""
    if a.leg_ids != b.leg_ids:
        raise DimensionMismatch(
            f"inner needs identical leg sets: {a.leg_ids} vs {b.leg_ids}")
    for la, lb in zip(a.legs, b.legs):
        if la.dim != lb.dim:
            raise DimensionMismatch(f"leg {la.id!r}: dim {la.dim} vs {lb.dim}")
    return complex(np.sum(a.data * b.data))


def contract_network(tensors: Iterable[DenseTensor], size_cap: int | None = None) -> DenseTensor:
    """Contract a list of tensors pairwise under a greedy size heuristic.

    Repeatedly contracts the pair whose result has the fewest entries
    (preferring pairs that actually share legs); disconnected pieces end up
    combined by outer products of scalars/tensors at the end.  ``size_cap``
    bounds the entry count of any intermediate.
    """
    from .errors import TooLarge

    pool = list(tensors)
    if not pool:
        return scalar(1.0)
    while len(pool) > 1:
        best = None
        for i in range(len(pool)):
            ids_i = set(pool[i].leg_ids)
            for j in range(i + 1, len(pool)):
                shared = ids_i & set(pool[j].leg_ids)
                out_size = 1
                for t in (pool[i], pool[j]):
                    for l in t.legs:
                        if l.id not in shared:
                            out_size *= l.dim
                key = (0 if shared else 1, out_size)
                if best is None or key < best[0]:
                    best = (key, i, j)
        key, i, j = best
        if size_cap is not None and key[1] > size_cap:
            raise TooLarge(
                f"intermediate with {key[1]} entries exceeds cap {size_cap}")
        tj = pool.pop(j)
        ti = pool.pop(i)
        if key[0] == 0:
            pool.append(contract_pair(ti, tj))
        else:
            pool.append(outer(ti, tj))
    return pool[0]
