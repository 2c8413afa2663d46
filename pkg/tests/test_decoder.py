"""Two-path decoder: batch layout against the documented matrix patterns,
parallel/sequential equivalence, causality, and greedy/beam generation."""

import numpy as np
import pytest

from grat import autodiff as ad
from grat import decoder as dec
from grat import graph as gm
from grat.autodiff import Tensor
from grat.decoder import DecoderConfig, build_decoder_batch, decode_forward
from grat.errors import ContractError
from grat.graph import Graph, NO_BOND, SELF, VIRTUAL, TOK_EOG, TOK_G

CFG = DecoderConfig(layers=2, heads=2, width=8, ff_width=16, cond_hidden=4,
                    pair_width=4, fe_hidden=8)
N_LABELS = 11   # 8 reserved + 3 real
N_EDGE_TYPES = 7  # 5 reserved + 2 real
FIRST_LABEL = len(gm.RESERVED_LABEL_NAMES)
FIRST_EDGE = len(gm.RESERVED_EDGE_NAMES)


def make_params(seed=0, cfg=CFG, n_labels=N_LABELS, n_edge_types=N_EDGE_TYPES):
    return dec.init_decoder_params(cfg, n_labels, n_edge_types, np.random.default_rng(seed))


def random_target(rng, k=None, n_labels=3, n_edge_types=2, density=0.4):
    k = int(rng.integers(0, 7)) if k is None else k
    labels = [FIRST_LABEL + int(rng.integers(0, n_labels)) for _ in range(k)]
    edge_list = []
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < density:
                edge_list.append((i, j, FIRST_EDGE + int(rng.integers(0, n_edge_types))))
    return gm.graph_from_edge_list(labels, edge_list)


def random_memory(rng, n=5, width=CFG.width):
    return Tensor(rng.normal(size=(n, width)))


class TestEdgeClasses:
    def test_round_trip(self):
        assert dec.edge_class_of_type(NO_BOND) == 0
        assert dec.edge_type_of_class(0) == NO_BOND
        for t in (FIRST_EDGE, FIRST_EDGE + 1):
            assert dec.edge_type_of_class(dec.edge_class_of_type(t)) == t

    def test_reserved_types_have_no_class(self):
        with pytest.raises(ContractError):
            dec.edge_class_of_type(VIRTUAL)

    def test_class_count(self):
        assert dec.n_edge_classes(N_EDGE_TYPES) == 3  # 2 real + no-edge


class TestBatchLayout:
    def test_empty_target(self):
        batch = build_decoder_batch(gm.empty_graph())
        assert list(batch.tokens) == [TOK_G]
        assert list(batch.node_targets) == [TOK_EOG]
        assert batch.mask.shape == (1, 1) and batch.mask[0, 0]
        assert len(batch.pair_steps) == 0 and batch.n_target_pairs == 0

    def test_four_node_matrix_patterns(self):
        # 4-node chain a-b-c-d plus the d-a closing edge type
        target = gm.graph_from_edge_list(
            [FIRST_LABEL, FIRST_LABEL + 1, FIRST_LABEL + 2, FIRST_LABEL],
            [(0, 1, FIRST_EDGE), (1, 2, FIRST_EDGE + 1), (2, 3, FIRST_EDGE), (0, 3, FIRST_EDGE)])
        batch = build_decoder_batch(target)
        L = 9
        assert batch.tokens.shape == (L,)
        g_pos = list(range(0, L, 2))
        n_pos = list(range(1, L, 2))
        assert all(batch.tokens[p] == TOK_G for p in g_pos)
        # edge matrix: SELF diagonal, target types between node positions,
        # VIRTUAL from <G> positions to node positions
        assert all(batch.edge_matrix[p, p] == SELF for p in range(L))
        for a in range(4):
            for b in range(4):
                if a != b:
                    assert batch.edge_matrix[n_pos[a], n_pos[b]] == target.edges[a, b]
        for gp in g_pos:
            for np_ in n_pos:
                if np_ != gp:
                    assert batch.edge_matrix[gp, np_] == VIRTUAL
        # masking matrix: future blocked; previous <G> columns blocked for
        # every query; node queries never see <G> columns; node-node pairs
        # blocked when NO_BOND
        for q in range(L):
            for c in range(L):
                if c > q:
                    assert not batch.mask[q, c]
        for qi, q in enumerate(g_pos):
            for c in g_pos:
                if c != q:
                    assert not batch.mask[q, c]
            for nj, c in enumerate(n_pos):
                assert batch.mask[q, c] == (c < q)
        for ni, q in enumerate(n_pos):
            for c in g_pos:
                assert not batch.mask[q, c]
            for nj, c in enumerate(n_pos):
                if c < q:
                    assert batch.mask[q, c] == (target.edges[ni, nj] != NO_BOND)
        # targets: labels then <EOG>; edge classes follow the target matrix
        assert list(batch.node_targets) == list(target.labels) + [TOK_EOG]
        assert batch.n_target_pairs == 6
        expect = [dec.edge_class_of_type(int(target.edges[i, j]))
                  for i in range(1, 4) for j in range(i)]
        assert list(batch.pair_target_classes) == expect

    def test_g_row_unmasked_count_is_step_index(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            target = random_target(rng)
            batch = build_decoder_batch(target)
            for i in range(1, target.n + 2):
                row = batch.mask[2 * (i - 1)]
                assert row.sum() == i

    def test_step_i_emits_i_minus_1_edge_decisions(self):
        rng = np.random.default_rng(2)
        target = random_target(rng, k=5)
        batch = build_decoder_batch(target)
        for i in range(1, 7):
            assert int((batch.pair_steps == i - 1).sum()) == i - 1
        assert batch.n_target_pairs == 5 * 4 // 2

    def test_reserved_label_rejected(self):
        bad = Graph(labels=(TOK_G,), edges=np.array([[SELF]]))
        with pytest.raises(ContractError):
            build_decoder_batch(bad)


class TestDecodeForward:
    def test_empty_target_shapes(self):
        params = make_params()
        rng = np.random.default_rng(3)
        node_logits, edge_logits = decode_forward(
            CFG, params, random_memory(rng), build_decoder_batch(gm.empty_graph()))
        assert node_logits.shape == (1, N_LABELS)
        assert edge_logits.shape == (0, 3)

    def test_logits_finite(self):
        params = make_params(seed=4)
        rng = np.random.default_rng(5)
        for _ in range(5):
            target = random_target(rng)
            node_logits, edge_logits = decode_forward(
                CFG, params, random_memory(rng), build_decoder_batch(target))
            assert np.all(np.isfinite(node_logits.data))
            assert np.all(np.isfinite(edge_logits.data))

    def test_parallel_equals_sequential_prefix(self):
        params = make_params(seed=6)
        rng = np.random.default_rng(7)
        for _ in range(10):
            target = random_target(rng)
            memory = random_memory(rng)
            full = build_decoder_batch(target)
            node_logits, edge_logits = decode_forward(CFG, params, memory, full)
            for i in range(1, target.n + 2):
                prefix = Graph(labels=target.labels[:i - 1],
                               edges=target.edges[:i - 1, :i - 1])
                pnode, pedge = decode_forward(CFG, params, memory,
                                              build_decoder_batch(prefix))
                assert np.max(np.abs(pnode.data[-1] - node_logits.data[i - 1])) < 1e-9
                if i > 1:
                    full_rows = edge_logits.data[full.pair_steps == i - 1]
                    assert np.max(np.abs(pedge.data[-(i - 1):] - full_rows)) < 1e-9

    def test_future_perturbation_changes_no_past_logit(self):
        params = make_params(seed=8)
        rng = np.random.default_rng(9)
        for _ in range(10):
            target = random_target(rng, k=int(rng.integers(2, 7)))
            memory = random_memory(rng)
            j = int(rng.integers(1, target.n + 1))  # perturb node j (1-based)
            mutated_labels = list(target.labels)
            mutated_labels[j - 1] = FIRST_LABEL + (mutated_labels[j - 1] - FIRST_LABEL + 1) % 3
            edges = np.array(target.edges)
            for other in range(target.n):
                if other != j - 1:
                    cur = edges[j - 1, other]
                    new = NO_BOND if cur != NO_BOND else FIRST_EDGE
                    edges[j - 1, other] = edges[other, j - 1] = new
            mutated = Graph(labels=tuple(mutated_labels), edges=edges)
            base_n, base_e = decode_forward(CFG, params, memory,
                                            build_decoder_batch(target))
            mut_n, mut_e = decode_forward(CFG, params, memory,
                                          build_decoder_batch(mutated))
            batch = build_decoder_batch(target)
            past_steps = batch.pair_steps <= j - 1
            assert np.array_equal(base_n.data[:j], mut_n.data[:j])
            assert np.array_equal(base_e.data[past_steps], mut_e.data[past_steps])

    def test_g_isolation_offsets_change_only_own_step(self):
        params = make_params(seed=10)
        rng = np.random.default_rng(11)
        target = random_target(rng, k=4)
        memory = random_memory(rng)
        batch = build_decoder_batch(target)
        base_n, base_e = decode_forward(CFG, params, memory, batch)
        for step in range(1, 5):
            offsets = np.zeros((len(batch.tokens), CFG.width))
            offsets[2 * (step - 1)] = rng.normal(size=CFG.width)
            out_n, out_e = decode_forward(CFG, params, memory, batch,
                                          input_offsets=offsets)
            others = np.arange(5) != step - 1
            assert np.array_equal(base_n.data[others], out_n.data[others])
            other_pairs = batch.pair_steps != step - 1
            assert np.array_equal(base_e.data[other_pairs], out_e.data[other_pairs])
            assert not np.array_equal(base_n.data[step - 1], out_n.data[step - 1])


def teacher_forced_score(cfg, params, memory, target) -> float:
    """Independent scorer: sum of log-softmax at the target labels/classes."""
    batch = build_decoder_batch(target)
    with ad.no_grad():
        node_logits, edge_logits = decode_forward(cfg, params, memory, batch)
    total = 0.0
    for row, t in zip(node_logits.data, batch.node_targets):
        total += dec._log_softmax_np(row)[t]
    for row, c in zip(edge_logits.data[:batch.n_target_pairs], batch.pair_target_classes):
        total += dec._log_softmax_np(row)[c]
    return total


class TestGeneration:
    def test_rigged_eog_yields_empty_graph(self):
        params = make_params(seed=12)
        params["dec.fl.w"].data[:] = 0.0
        params["dec.fl.b"].data[:] = 0.0
        params["dec.fl.b"].data[TOK_EOG] = 50.0
        out = dec.generate_greedy(CFG, params, random_memory(np.random.default_rng(13)),
                                  max_nodes=8)
        assert out.graph.n == 0 and not out.truncated

    def test_generated_graph_always_validates(self):
        rng = np.random.default_rng(14)
        for seed in range(5):
            params = make_params(seed=seed)
            out = dec.generate_greedy(CFG, params, random_memory(rng), max_nodes=6)
            assert gm.validate(out.graph) == []

    def test_truncation_flag_on_cap(self):
        params = make_params(seed=15)
        params["dec.fl.w"].data[:] = 0.0
        params["dec.fl.b"].data[:] = 0.0
        params["dec.fl.b"].data[FIRST_LABEL] = 50.0  # never chooses <EOG>
        out = dec.generate_greedy(CFG, params, random_memory(np.random.default_rng(16)),
                                  max_nodes=3)
        assert out.truncated and out.graph.n == 3

    def test_beam_width_one_equals_greedy(self):
        rng = np.random.default_rng(17)
        for seed in range(10):
            params = make_params(seed=100 + seed)
            memory = random_memory(rng)
            greedy = dec.generate_greedy(CFG, params, memory, max_nodes=5)
            beam = dec.generate_beam(CFG, params, memory, width=1, max_nodes=5)
            assert len(beam) == 1
            assert beam[0].graph == greedy.graph
            assert beam[0].truncated == greedy.truncated
            assert abs(beam[0].score - greedy.score) < 1e-12

    def test_beam_scores_non_increasing(self):
        params = make_params(seed=18)
        results = dec.generate_beam(CFG, params, random_memory(np.random.default_rng(19)),
                                    width=4, max_nodes=4)
        scores = [r.score for r in results]
        assert scores == sorted(scores, reverse=True)

    def test_beam_width_zero_rejected(self):
        params = make_params(seed=20)
        with pytest.raises(ContractError):
            dec.generate_beam(CFG, params, random_memory(np.random.default_rng(21)),
                              width=0, max_nodes=4)

    @pytest.mark.parametrize("n_real_labels,width", [(1, 4), (2, 8)])
    def test_beam_top_score_matches_exhaustive_enumeration(self, n_real_labels, width):
        # tiny vocab, max 2 nodes: the beam provably covers the whole space,
        # so its best score must equal the exhaustive maximum
        n_labels = len(gm.RESERVED_LABEL_NAMES) + n_real_labels
        n_edge_types = len(gm.RESERVED_EDGE_NAMES) + 1
        for seed in range(6):
            params = dec.init_decoder_params(CFG, n_labels, n_edge_types,
                                             np.random.default_rng(200 + seed))
            memory = random_memory(np.random.default_rng(300 + seed))
            graphs = [gm.empty_graph()]
            for a in range(n_real_labels):
                graphs.append(gm.graph_from_edge_list([FIRST_LABEL + a], []))
                for b in range(n_real_labels):
                    for bond in (None, FIRST_EDGE):
                        edge_list = [] if bond is None else [(0, 1, bond)]
                        graphs.append(gm.graph_from_edge_list(
                            [FIRST_LABEL + a, FIRST_LABEL + b], edge_list))
            best = max(teacher_forced_score(CFG, params, memory, g) for g in graphs)
            top = dec.generate_beam(CFG, params, memory, width=width, max_nodes=2)[0]
            assert not top.truncated
            assert abs(top.score - best) < 1e-9
