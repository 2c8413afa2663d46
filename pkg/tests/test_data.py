"""Dataset generators and loaders: validity, determinism, oracle checks,
split behavior."""

import json

import numpy as np
import pytest

from grat import data as dt
from grat import graph as gm
from grat.errors import DataError
from grat.graph import NO_BOND
from grat.objectives import exact_match

from oracles import triangle_count_bruteforce


def load_from_records(tmp_path, records, name="d.jsonl"):
    path = tmp_path / name
    dt.write_jsonl(path, records)
    return dt.load_dataset(path)


class TestCopyDataset:
    def test_every_pair_is_exact_copy(self, tmp_path):
        data = load_from_records(tmp_path, dt.gen_copy_dataset(20, 6, 3, 2, seed=0))
        assert isinstance(data, dt.TranslationDataset)
        for srcs, tgt in data.pairs:
            assert len(srcs) == 1
            src = srcs[0]
            assert src.labels == tgt.labels
            assert np.array_equal(src.edges, tgt.edges)
            assert src.delim == gm.TOK_REACTANT

    def test_every_graph_validates(self, tmp_path):
        data = load_from_records(tmp_path, dt.gen_copy_dataset(20, 8, 3, 2, seed=1))
        for srcs, tgt in data.pairs:
            assert gm.validate(srcs[0], data.label_vocab, data.edge_vocab) == []
            assert gm.validate(tgt, data.label_vocab, data.edge_vocab) == []

    def test_seeded_regeneration_identical(self):
        a = dt.gen_copy_dataset(15, 6, 3, 2, seed=5)
        b = dt.gen_copy_dataset(15, 6, 3, 2, seed=5)
        assert json.dumps(a) == json.dumps(b)

    def test_graphs_connected(self, tmp_path):
        data = load_from_records(tmp_path, dt.gen_copy_dataset(30, 8, 3, 2, seed=2))
        for srcs, _ in data.pairs:
            g = srcs[0]
            adj = (g.edges != NO_BOND)
            reach = {0}
            frontier = [0]
            while frontier:
                u = frontier.pop()
                for v in np.nonzero(adj[u])[0]:
                    if int(v) not in reach:
                        reach.add(int(v))
                        frontier.append(int(v))
            assert len(reach) == g.n


class TestRelabelDataset:
    def test_fixed_rotation_reproduces_targets(self, tmp_path):
        data = load_from_records(tmp_path, dt.gen_relabel_dataset(20, 6, 3, 2, seed=3))
        lv = data.label_vocab
        names = dt.label_names(3)
        rotate = {lv.id(n): lv.id(names[(i + 1) % 3]) for i, n in enumerate(names)}
        for srcs, tgt in data.pairs:
            assert tuple(rotate[lab] for lab in srcs[0].labels) == tgt.labels
            assert np.array_equal(srcs[0].edges, tgt.edges)

    def test_label_histogram_is_permuted(self, tmp_path):
        data = load_from_records(tmp_path, dt.gen_relabel_dataset(40, 6, 3, 2, seed=4))
        lv = data.label_vocab
        names = dt.label_names(3)
        src_hist = {n: 0 for n in names}
        tgt_hist = {n: 0 for n in names}
        for srcs, tgt in data.pairs:
            for lab in srcs[0].labels:
                src_hist[lv.name(lab)] += 1
            for lab in tgt.labels:
                tgt_hist[lv.name(lab)] += 1
        for i, n in enumerate(names):
            assert tgt_hist[names[(i + 1) % 3]] == src_hist[n]


class TestPropertyDataset:
    def test_single_node_values(self, tmp_path):
        # scan many graphs for 1-node cases; their targets are the label weight
        data = load_from_records(tmp_path, dt.gen_property_dataset(60, seed=5, max_nodes=3))
        lv = data.label_vocab
        names = dt.label_names(3)
        weight = {lv.id(n): dt.label_weight(i) for i, n in enumerate(names)}
        singles = [g for g in data.graphs if g.n == 1]
        assert singles
        for g in singles:
            assert g.properties["wsum"] == weight[g.labels[0]]
            assert g.properties["tri"] == 0.0

    def test_triangle_graph(self):
        lv, ev = dt._dataset_vocabs(3, 2)
        g = gm.graph_from_edge_list(
            [lv.id("A")] * 3, [(0, 1, 5), (1, 2, 5), (0, 2, 5)])
        assert dt.triangle_count(g) == 1

    def test_triangles_match_bruteforce(self, tmp_path):
        data = load_from_records(tmp_path, dt.gen_property_dataset(40, seed=6, max_nodes=8))
        for g in data.graphs:
            adj = (g.edges != NO_BOND) & ~np.eye(g.n, dtype=bool)
            assert g.properties["tri"] == triangle_count_bruteforce(adj)


class TestLoader:
    def test_round_trip_preserves_graphs(self, tmp_path):
        records = dt.gen_property_dataset(10, seed=7)
        data = load_from_records(tmp_path, records)
        again = load_from_records(tmp_path, records, name="again.jsonl")
        for a, b in zip(data.graphs, again.graphs):
            assert a == b

    def test_mixed_kinds_rejected(self, tmp_path):
        records = dt.gen_property_dataset(2, seed=8) + dt.gen_copy_dataset(1, 4, 2, 1, seed=8)
        with pytest.raises(DataError, match="mixed"):
            load_from_records(tmp_path, records)

    def test_translation_record_schema_enforced(self, tmp_path):
        with pytest.raises(DataError, match="src"):
            load_from_records(tmp_path, [{"src": [], "tgt": {"nodes": [], "edges": []}}])
        with pytest.raises(DataError, match="exactly"):
            load_from_records(tmp_path, [{"src": [{"nodes": [], "edges": []}],
                                          "tgt": {"nodes": [], "edges": []},
                                          "extra": 1}])

    def test_empty_dataset_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            dt.load_dataset(path)

    def test_vocab_scan_is_sorted_and_deterministic(self, tmp_path):
        records = dt.gen_copy_dataset(10, 6, 3, 2, seed=9)
        data = load_from_records(tmp_path, records)
        assert list(data.label_vocab.real_names) == sorted(data.label_vocab.real_names)
        assert list(data.edge_vocab.real_names) == sorted(data.edge_vocab.real_names)


class TestSplit:
    def test_deterministic_and_partitioning(self):
        a = dt.split_indices(500, seed=3)
        b = dt.split_indices(500, seed=3)
        assert a == b
        together = sorted(a["train"] + a["val"] + a["test"])
        assert together == list(range(500))

    def test_roughly_80_10_10(self):
        split = dt.split_indices(5000, seed=1)
        assert abs(len(split["train"]) / 5000 - 0.8) < 0.03
        assert abs(len(split["val"]) / 5000 - 0.1) < 0.02
        assert abs(len(split["test"]) / 5000 - 0.1) < 0.02

    def test_depends_on_seed(self):
        assert dt.split_indices(200, 0) != dt.split_indices(200, 1)
