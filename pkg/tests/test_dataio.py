"""File formats: loaders reject malformed input, round trips are exact."""

import json

import numpy as np
import pytest

from twograph import (
    Graph,
    GNNStack,
    IOModel,
    LayerSpec,
    NodeSplit,
    ParseError,
    RunReport,
    Tape,
    ValidationError,
)
from twograph.dataio import (
    append_sweep_row,
    load_checkpoint,
    load_checkpoint_meta,
    load_edge_list,
    load_labels_csv,
    load_matrix_csv,
    load_split_csv,
    save_checkpoint,
    save_edge_list,
    save_labels_csv,
    save_matrix_csv,
    save_metrics_csv,
    save_split_csv,
    validate_fingerprint,
)
from twograph.transforms import LinearNodeTransform


class TestEdgeList:
    def test_basic_path(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("0 1\n1 2\n")
        g = load_edge_list(str(p))
        assert g.n == 3
        assert g.edges == ((0, 1, 1.0), (1, 2, 1.0))

    def test_header_and_weight(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("n=5\n0 1 2.5\n")
        g = load_edge_list(str(p))
        assert g.n == 5
        assert g.edges == ((0, 1, 2.5),)

    def test_comments_and_blanks(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("# a comment\n\n0 1\n")
        assert load_edge_list(str(p)).num_edges == 1

    def test_duplicate_rejected(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("0 1\n1 0\n")
        with pytest.raises(ValidationError):
            load_edge_list(str(p))

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("0 1\nnot an edge line here\n")
        with pytest.raises(ParseError, match=":2"):
            load_edge_list(str(p))

    def test_roundtrip(self, tmp_path):
        g = Graph(4, [(0, 1, 0.5), (2, 3, 1.25)])
        p = tmp_path / "g.edges"
        save_edge_list(g, str(p))
        back = load_edge_list(str(p))
        assert back.n == g.n and back.edges == g.edges


class TestMatrixCSV:
    def test_basic(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4\n")
        assert np.array_equal(load_matrix_csv(str(p)).data, [[1, 2], [3, 4]])

    def test_single_cell(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("7\n")
        assert load_matrix_csv(str(p)).shape == (1, 1)

    def test_ragged_row_reports_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(ParseError, match=":2"):
            load_matrix_csv(str(p))

    def test_non_numeric_reports_cell(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,x\n")
        with pytest.raises(ParseError, match="column 2"):
            load_matrix_csv(str(p))

    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((4, 3))
        p = tmp_path / "m.csv"
        save_matrix_csv(m, str(p))
        assert np.array_equal(load_matrix_csv(str(p)).data, m)


class TestLabelsAndSplit:
    def test_labels_roundtrip(self, tmp_path):
        p = tmp_path / "l.csv"
        save_labels_csv([0, 2, 1], str(p))
        assert load_labels_csv(str(p)).tolist() == [0, 2, 1]

    def test_labels_reject_floats(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("1\n2.5\n")
        with pytest.raises(ParseError, match=":2"):
            load_labels_csv(str(p))

    def test_split_roundtrip(self, tmp_path):
        split = NodeSplit([0, 3], [1], [2, 4])
        p = tmp_path / "s.csv"
        save_split_csv(split, str(p))
        back = load_split_csv(str(p))
        assert back.train == split.train
        assert back.val == split.val
        assert back.test == split.test


class TestMetricsCSV:
    def test_empty_trace_header_only(self, tmp_path):
        p = tmp_path / "t.csv"
        save_metrics_csv(RunReport(), str(p))
        assert p.read_text() == "epoch,train_loss,val_loss\n"

    def test_three_epochs_four_lines(self, tmp_path):
        report = RunReport(trace=[(0, 1.0, 1.1), (1, 0.5, 0.6), (2, 0.25, 0.3)])
        p = tmp_path / "t.csv"
        save_metrics_csv(report, str(p))
        assert len(p.read_text().strip().splitlines()) == 4

    def test_values_roundtrip_within_1e12(self, tmp_path):
        rng = np.random.default_rng(1)
        vals = rng.standard_normal(5) * 10.0 ** rng.integers(-8, 8, size=5)
        report = RunReport(trace=[(i, abs(v), abs(v) * 1.5)
                                  for i, v in enumerate(vals)])
        p = tmp_path / "t.csv"
        save_metrics_csv(report, str(p))
        lines = p.read_text().strip().splitlines()[1:]
        for line, (_, want_train, want_val) in zip(lines, report.trace):
            _, train_s, val_s = line.split(",")
            assert float(train_s) == pytest.approx(want_train, rel=1e-12)
            assert float(val_s) == pytest.approx(want_val, rel=1e-12)

    def test_sweep_append(self, tmp_path):
        p = tmp_path / "sweep.csv"
        append_sweep_row(str(p), "r0", 1, "accuracy", 0.9)
        append_sweep_row(str(p), "r1", 2, "accuracy", 0.8)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "run,seed,metric,value"
        assert len(lines) == 3


def small_model(seed=0):
    psi_x = GNNStack([LayerSpec("gcn", 2, 3, activation="tanh")], seed=seed,
                     name="psi_x")
    psi_y = GNNStack([LayerSpec("gcn", 3, 2)], seed=seed + 1, name="psi_y")
    return IOModel(psi_x, LinearNodeTransform(4, 3, seed=seed + 2), psi_y)


class TestCheckpoint:
    def test_roundtrip_forward_bit_exact(self, tmp_path):
        g_x = Graph(4, [(0, 1), (1, 2), (2, 3)])
        g_y = Graph(3, [(0, 1), (1, 2)])
        model = small_model(3)
        probe = np.random.default_rng(2).standard_normal((4, 2))
        want = model.forward(Tape(), probe, g_x, g_y).value
        path = tmp_path / "ck.json"
        save_checkpoint(model, str(path), g_x, g_y)
        back = load_checkpoint(str(path))
        got = back.forward(Tape(), probe, g_x, g_y).value
        assert np.array_equal(got, want)

    def test_truncated_file_is_parse_error(self, tmp_path):
        path = tmp_path / "ck.json"
        save_checkpoint(small_model(4), str(path))
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(ParseError):
            load_checkpoint(str(path))

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "ck.json"
        save_checkpoint(small_model(5), str(path))
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="version"):
            load_checkpoint(str(path))

    def test_shape_disagreement(self, tmp_path):
        path = tmp_path / "ck.json"
        save_checkpoint(small_model(6), str(path))
        doc = json.loads(path.read_text())
        doc["parameters"][0]["rows"] += 1
        doc["parameters"][0]["values"].extend([0.0, 0.0, 0.0])
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="shape"):
            load_checkpoint(str(path))

    def test_fingerprint_mismatch(self, tmp_path):
        g_x = Graph(4, [(0, 1)])
        g_y = Graph(3, [(0, 1)])
        path = tmp_path / "ck.json"
        save_checkpoint(small_model(7), str(path), g_x, g_y)
        meta = load_checkpoint_meta(str(path))
        validate_fingerprint(meta, g_x, g_y)  # same graphs fine
        with pytest.raises(ValidationError, match="fingerprint"):
            validate_fingerprint(meta, Graph(5, [(0, 1)]), g_y)
