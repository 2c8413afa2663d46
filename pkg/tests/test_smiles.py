"""SMILES-lite: grammar hand-traces, round-trip isomorphism, fuzzing."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grat import graph as gm
from grat.errors import ContractError, DataError
from grat.graph import NO_BOND, SELF, permute
from grat.smiles import (dfs_order_permutation, molecular_vocabs,
                         parse_smiles_lite, write_smiles_lite)

LV, EV = molecular_vocabs()
SINGLE, DOUBLE, TRIPLE = EV.id("single"), EV.id("double"), EV.id("triple")


def isomorphic_bruteforce(a: gm.Graph, b: gm.Graph) -> bool:
    """Exhaustive isomorphism check for n <= 8."""
    if a.n != b.n or sorted(a.labels) != sorted(b.labels):
        return False
    for mapping in itertools.permutations(range(a.n)):
        if all(a.labels[i] == b.labels[mapping[i]] for i in range(a.n)) and all(
                a.edges[i, j] == b.edges[mapping[i], mapping[j]]
                for i in range(a.n) for j in range(a.n)):
            return True
    return False


class TestParse:
    def test_single_atom(self):
        g = parse_smiles_lite("C")
        assert g.labels == (LV.id("C"),)
        assert g.edges.shape == (1, 1) and g.edges[0, 0] == SELF

    def test_double_bond_hand_trace(self):
        # token walk: atom C (node 0) -> '=' pends double -> atom O (node 1)
        g = parse_smiles_lite("C=O")
        assert g.labels == (LV.id("C"), LV.id("O"))
        assert g.edges[0, 1] == DOUBLE

    def test_ring_closure_hand_trace(self):
        # C1 opens ring at node 0; C C extend chain; final 1 closes 2-0
        g = parse_smiles_lite("C1CC1")
        assert g.n == 3
        for i, j in [(0, 1), (1, 2), (0, 2)]:
            assert g.edges[i, j] == SINGLE

    def test_branch(self):
        g = parse_smiles_lite("CC(=O)O")
        assert g.n == 4
        assert g.edges[1, 2] == DOUBLE
        assert g.edges[1, 3] == SINGLE
        assert g.edges[0, 1] == SINGLE
        assert g.edges[2, 3] == NO_BOND

    def test_two_char_atoms(self):
        g = parse_smiles_lite("ClBr")
        assert g.labels == (LV.id("Cl"), LV.id("Br"))

    def test_explicit_single_and_triple(self):
        g = parse_smiles_lite("C-C#N")
        assert g.edges[0, 1] == SINGLE and g.edges[1, 2] == TRIPLE

    def test_ring_bond_symbol_on_open(self):
        g = parse_smiles_lite("C=1CCC=1")
        assert g.edges[0, 3] == DOUBLE

    @pytest.mark.parametrize("s,offset", [
        ("C(C", 3), ("C)C", 1), ("C1CC", 1), ("C=", 1), ("=C", 0),
        ("Cx", 1), ("C=(C)", 1), ("C0", 1), ("1C", 0), ("C11", 2),
        ("C==C", 2), ("C=1CC#1", 6), ("", 0),
    ])
    def test_errors_carry_byte_offset(self, s, offset):
        with pytest.raises(DataError) as info:
            parse_smiles_lite(s)
        assert info.value.offset == offset


class TestWrite:
    def test_single_atom(self):
        g = gm.graph_from_edge_list([LV.id("C")], [])
        assert write_smiles_lite(g) == "C"

    def test_round_trip_branch(self):
        g = parse_smiles_lite("C(=O)N")
        again = parse_smiles_lite(write_smiles_lite(g))
        assert isomorphic_bruteforce(g, again)

    def test_triangle_reparse(self):
        g = parse_smiles_lite("C1CC1")
        s = write_smiles_lite(g)
        back = parse_smiles_lite(s)
        assert back.n == 3
        off_diag = back.edges[~np.eye(3, dtype=bool)]
        assert np.all(off_diag == SINGLE)

    def test_round_trip_is_dfs_relabel(self):
        g = parse_smiles_lite("CC(C(F)Cl)=O")
        back = parse_smiles_lite(write_smiles_lite(g))
        assert back == permute(g, dfs_order_permutation(g))

    def test_disconnected_rejected(self):
        g = gm.graph_from_edge_list([LV.id("C"), LV.id("C")], [])
        with pytest.raises(ContractError, match="not connected"):
            write_smiles_lite(g)

    def test_out_of_subset_edge_rejected(self):
        g = gm.graph_from_edge_list([LV.id("C"), LV.id("C")], [(0, 1, gm.VIRTUAL)])
        with pytest.raises(ContractError, match="edge types"):
            write_smiles_lite(g)


CORPUS = [
    "C", "C=O", "C1CC1", "CC(=O)O", "N#N", "ClCCl", "BrC=CBr", "O=C=O",
    "C1CCCCC1", "C1=CC=CC=C1", "CC(C)(C)C", "C(F)(F)F", "S=P", "ICI",
    "CC(=O)NC", "C1CC1C2CC2", "C12CC1C2", "CC(C(C(C)))C", "HOH", "C#CC#C",
]


@pytest.mark.parametrize("s", CORPUS)
def test_corpus_round_trip_isomorphic(s):
    g = parse_smiles_lite(s)
    back = parse_smiles_lite(write_smiles_lite(g))
    assert isomorphic_bruteforce(g, back)
    assert back == permute(g, dfs_order_permutation(g))


def random_molecule(rng):
    """Random connected subset molecule with <= 8 atoms."""
    n = int(rng.integers(1, 9))
    labels = [int(rng.choice([LV.id(a) for a in ("C", "N", "O", "S")])) for _ in range(n)]
    edges = []
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append((j, i, int(rng.choice([SINGLE, DOUBLE, TRIPLE]))))
    for i in range(n):
        for j in range(i + 1, n):
            if not any(a == i and b == j for a, b, _ in edges) and rng.random() < 0.15:
                edges.append((i, j, SINGLE))
    return gm.graph_from_edge_list(labels, edges)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_random_molecule_round_trip(seed):
    g = random_molecule(np.random.default_rng(seed))
    back = parse_smiles_lite(write_smiles_lite(g))
    assert back == permute(g, dfs_order_permutation(g))


@given(st.text(alphabet="CNOFSPIH()=#-123ClBr", max_size=24))
@settings(max_examples=200, deadline=None)
def test_fuzz_never_crashes_without_position(s):
    try:
        g = parse_smiles_lite(s)
        assert g.n >= 1
    except DataError as exc:
        assert exc.offset is not None
