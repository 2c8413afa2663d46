"""Parser and writer for a strict subset of SMILES molecular line notation.

Subset: atoms C N O F S P Cl Br I H, bonds - = #, branches in parentheses,
ring-closure digits 1-9. No charges, aromaticity, stereo descriptors, or
bracket atoms. Hydrogens are explicit only.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DataError
from .graph import (Graph, EdgeTypeVocab, NodeLabelVocab, GraphPermutation,
                    NO_BOND, SELF)

ATOMS = ("C", "N", "O", "F", "S", "P", "Cl", "Br", "I", "H")
BOND_NAMES = ("single", "double", "triple")
_BOND_OF_SYMBOL = {"-": "single", "=": "double", "#": "triple"}
_SYMBOL_OF_BOND = {"single": "", "double": "=", "triple": "#"}
_TWO_CHAR = ("Cl", "Br")


def molecular_vocabs() -> tuple[NodeLabelVocab, EdgeTypeVocab]:
    """Canonical vocabularies covering the whole subset grammar."""
    return NodeLabelVocab(ATOMS), EdgeTypeVocab(BOND_NAMES)


def parse_smiles_lite(s: str, label_vocab: NodeLabelVocab | None = None,
                      edge_vocab: EdgeTypeVocab | None = None) -> Graph:
    """Parse a subset-SMILES string; nodes appear in first-appearance order.

    Adjacent atoms default to a single bond; a ring-closure digit bonds the
    two atoms that carry it. Errors report the byte offset of the offending
    token.
    """
    if label_vocab is None or edge_vocab is None:
        label_vocab, edge_vocab = molecular_vocabs()
    if not s:
        raise DataError("empty SMILES string", offset=0)

    labels: list[int] = []
    bonds: list[tuple[int, int, int]] = []
    prev: int | None = None
    pending: int | None = None  # bond id waiting for its right-hand atom
    pending_at = 0
    stack: list[int] = []
    rings: dict[str, tuple[int, int | None, int]] = {}  # digit -> (atom, bond, offset)

    def add_bond(i: int, j: int, bond_id: int, offset: int):
        if i == j:
            raise DataError("ring closure bonds an atom to itself", offset=offset)
        if any(a == min(i, j) and b == max(i, j) for a, b, _ in bonds):
            raise DataError("duplicate bond between the same atoms", offset=offset)
        bonds.append((min(i, j), max(i, j), bond_id))

    pos = 0
    while pos < len(s):
        ch = s[pos]
        two = s[pos:pos + 2]
        if two in _TWO_CHAR or ch in ATOMS:
            name = two if two in _TWO_CHAR else ch
            idx = len(labels)
            labels.append(label_vocab.id(name))
            if prev is not None:
                bond = pending if pending is not None else edge_vocab.id("single")
                add_bond(prev, idx, bond, pos)
            pending = None
            prev = idx
            pos += len(name)
        elif ch in _BOND_OF_SYMBOL:
            if pending is not None:
                raise DataError("two bond symbols in a row", offset=pos)
            if prev is None:
                raise DataError("bond symbol before any atom", offset=pos)
            pending = edge_vocab.id(_BOND_OF_SYMBOL[ch])
            pending_at = pos
            pos += 1
        elif ch.isdigit():
            if ch == "0":
                raise DataError("ring-closure digit must be 1-9", offset=pos)
            if prev is None:
                raise DataError("ring-closure digit before any atom", offset=pos)
            if ch in rings:
                other, opened_bond, _ = rings.pop(ch)
                if pending is not None and opened_bond is not None and pending != opened_bond:
                    raise DataError(f"conflicting bond symbols on ring closure {ch}", offset=pos)
                bond = pending if pending is not None else opened_bond
                if bond is None:
                    bond = edge_vocab.id("single")
                add_bond(other, prev, bond, pos)
            else:
                rings[ch] = (prev, pending, pos)
            pending = None
            pos += 1
        elif ch == "(":
            if prev is None:
                raise DataError("branch opens before any atom", offset=pos)
            if pending is not None:
                raise DataError("bond symbol directly before '('", offset=pending_at)
            stack.append(prev)
            pos += 1
        elif ch == ")":
            if not stack:
                raise DataError("unbalanced ')'", offset=pos)
            if pending is not None:
                raise DataError("dangling bond symbol before ')'", offset=pending_at)
            prev = stack.pop()
            pos += 1
        else:
            raise DataError(f"unknown token {ch!r}", offset=pos)

    if stack:
        raise DataError("unbalanced '(': branch never closed", offset=len(s))
    if pending is not None:
        raise DataError("dangling bond symbol at end of string", offset=pending_at)
    if rings:
        digit, (_, _, offset) = next(iter(rings.items()))
        raise DataError(f"dangling ring-closure digit {digit}", offset=offset)

    n = len(labels)
    edges = np.full((n, n), NO_BOND, dtype=np.int64)
    np.fill_diagonal(edges, SELF)
    for i, j, t in bonds:
        edges[i, j] = edges[j, i] = t
    return Graph(labels=tuple(labels), edges=edges)


def _dfs_tree(g: Graph):
    """Preorder DFS from node 0 with children in ascending index order.

    Returns (order, children, ring_bonds): visit order, tree children per
    node, and the non-tree edges as canonical (min, max) pairs.
    """
    neighbors = [sorted(int(j) for j in np.nonzero(g.edges[i] != NO_BOND)[0] if j != i)
                 for i in range(g.n)]
    parent: dict[int, int | None] = {0: None}
    order: list[int] = []
    children: dict[int, list[int]] = {i: [] for i in range(g.n)}
    ring_bonds: set[tuple[int, int]] = set()
    stack = [0]
    seen = {0}
    while stack:
        u = stack.pop()
        order.append(u)
        for v in reversed(neighbors[u]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                children[u].append(v)
                stack.append(v)
            elif parent.get(u) != v:
                ring_bonds.add((min(u, v), max(u, v)))
    for u in children:
        children[u].sort()
    if len(seen) != g.n:
        raise ContractError("unsupported graph: not connected")
    return order, children, ring_bonds


def write_smiles_lite(g: Graph, label_vocab: NodeLabelVocab | None = None,
                      edge_vocab: EdgeTypeVocab | None = None) -> str:
    """Write a subset-SMILES string via depth-first traversal from node 0.

    Children are visited in ascending node order and ring-closure digits are
    assigned in discovery order, so output is deterministic.
    """
    if label_vocab is None or edge_vocab is None:
        label_vocab, edge_vocab = molecular_vocabs()
    if g.n == 0:
        raise ContractError("unsupported graph: cannot write an empty graph")
    for lab in g.labels:
        if label_vocab.name(lab) not in ATOMS:
            raise ContractError(f"unsupported graph: label {label_vocab.name(lab)!r} "
                                "is outside the subset atom set")
    allowed = {NO_BOND} | {edge_vocab.id(b) for b in BOND_NAMES if b in edge_vocab}
    off_diag = g.edges[~np.eye(g.n, dtype=bool)]
    if off_diag.size and not set(np.unique(off_diag)) <= allowed:
        raise ContractError("unsupported graph: edge types outside single/double/triple")

    order, children, ring_bonds = _dfs_tree(g)
    discovery = {u: rank for rank, u in enumerate(order)}
    # each ring bond opens its digit at the earlier-discovered endpoint
    ring_open: dict[int, list[tuple[int, int]]] = {}
    for a, b in sorted(ring_bonds, key=lambda ab: tuple(sorted((discovery[ab[0]], discovery[ab[1]])))):
        first, second = (a, b) if discovery[a] < discovery[b] else (b, a)
        ring_open.setdefault(first, []).append((second, int(g.edges[a, b])))

    digits_free = list("123456789")
    digit_of: dict[tuple[int, int], str] = {}
    pieces: list[str] = []

    def bond_symbol(bond_id: int) -> str:
        return _SYMBOL_OF_BOND[edge_vocab.name(bond_id)]

    def emit(u: int):
        pieces.append(label_vocab.name(g.labels[u]))
        for second, bond_id in ring_open.get(u, ()):
            if not digits_free:
                raise ContractError("unsupported graph: more than 9 simultaneously open rings")
            d = digits_free.pop(0)
            digit_of[(u, second)] = d
            pieces.append(bond_symbol(bond_id) + d)
        for (first, second), d in list(digit_of.items()):
            if second == u:
                pieces.append(d)
                del digit_of[(first, second)]
                digits_free.append(d)
                digits_free.sort()
        kids = children[u]
        for idx, v in enumerate(kids):
            sym = bond_symbol(int(g.edges[u, v]))
            if idx < len(kids) - 1:
                pieces.append("(" + sym)
                emit(v)
                pieces.append(")")
            else:
                pieces.append(sym)
                emit(v)

    emit(0)
    return "".join(pieces)


def dfs_order_permutation(g: Graph) -> GraphPermutation:
    """Permutation sending each node to its DFS discovery rank from node 0,
    i.e. the node order a write/parse round trip produces."""
    order, _, _ = _dfs_tree(g)
    mapping = [0] * g.n
    for rank, u in enumerate(order):
        mapping[u] = rank
    return GraphPermutation(tuple(mapping))
