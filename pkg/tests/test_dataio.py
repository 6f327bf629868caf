import io

import numpy as np
import pytest

from nsbandit.dataio import (
    RESULT_COLUMNS,
    ParseError,
    ResultRecord,
    emit_results,
    load_dense,
    load_ratings,
    load_sparse,
    read_results,
    subsample,
    synth_classification,
    synth_lowrank,
    synth_regression,
    write_dense,
    write_ratings,
)

HEADER = "trial,strategy,budget,winner,test_loss,pulls,loss_observations,wall_ms"


class TestDense:
    def test_three_lines(self):
        ds = load_dense("1,2,0.5\n3,4,1.5\n5,6,2.5\n")
        assert ds.features.shape == (3, 2)
        np.testing.assert_array_equal(ds.labels, [0.5, 1.5, 2.5])

    def test_ragged_names_line(self):
        with pytest.raises(ParseError, match="line 2"):
            load_dense("1,2,3\n1,2\n")

    def test_empty(self):
        with pytest.raises(ParseError, match="no rows"):
            load_dense("")
        with pytest.raises(ParseError, match="no rows"):
            load_dense("# only a comment\n")

    def test_non_numeric(self):
        with pytest.raises(ParseError, match="line 3"):
            load_dense("1,2\n3,4\n5,x\n")

    def test_label_first_and_whitespace(self):
        ds = load_dense("0.5 1 2\n1.5 3 4\n", label_column=0)
        np.testing.assert_array_equal(ds.labels, [0.5, 1.5])
        np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4]])

    def test_file_roundtrip(self, tmp_path):
        ds = synth_regression(20, 3, 0.2, 0)
        path = tmp_path / "d.csv"
        write_dense(ds, path, header="seeded")
        back = load_dense(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestSparse:
    def test_basic(self):
        ds = load_sparse("+1 1:0.5 3:2.0\n")
        assert ds.labels[0] == 1.0
        np.testing.assert_array_equal(ds.features[0], [0.5, 0.0, 2.0])

    def test_duplicate_index(self):
        with pytest.raises(ParseError, match="duplicate"):
            load_sparse("1 1:0.5 1:2.0\n")

    def test_label_only(self):
        ds = load_sparse("-1\n+1 2:1\n")
        np.testing.assert_array_equal(ds.features, [[0, 0], [0, 1]])
        np.testing.assert_array_equal(ds.labels, [-1, 1])

    def test_zero_index_rejected(self):
        with pytest.raises(ParseError, match="1-based"):
            load_sparse("1 0:1\n")


def test_ratings_roundtrip(tmp_path):
    r = synth_lowrank(5, 4, 2, 0.5, 0)
    path = tmp_path / "r.csv"
    write_ratings(r, path)
    back = load_ratings(path, n_users=5, n_items=4)
    np.testing.assert_array_equal(back.values, r.values)
    np.testing.assert_array_equal(back.users, r.users)


class TestSynth:
    def test_noiseless_regression_is_exact(self):
        ds = synth_regression(200, 5, 0.0, 3)
        w, *_ = np.linalg.lstsq(ds.features, ds.labels, rcond=None)
        assert np.mean((ds.features @ w - ds.labels) ** 2) <= 1e-10

    def test_seeded_bytes(self):
        a, b = synth_regression(30, 2, 0.5, 9), synth_regression(30, 2, 0.5, 9)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_classification_labels(self):
        ds = synth_classification(100, 3, 0)
        assert set(np.unique(ds.labels)) == {-1.0, 1.0}

    def test_full_density(self):
        r = synth_lowrank(6, 7, 2, 1.0, 0)
        assert len(r) == 42

    def test_lowrank_is_rank_two(self):
        r = synth_lowrank(8, 9, 2, 1.0, 0)
        M = np.zeros((8, 9))
        M[r.users, r.items] = r.values
        s = np.linalg.svd(M, compute_uv=False)
        assert s[2] < 1e-10 * s[0]

    @pytest.mark.parametrize("args", [(0, 3, 0.1, 0), (10, 0, 0.1, 0), (10, 3, -1.0, 0)])
    def test_bad_sizes(self, args):
        with pytest.raises(ValueError):
            synth_regression(*args)

    def test_bad_density(self):
        with pytest.raises(ValueError):
            synth_lowrank(3, 3, 1, 0.0, 0)

    def test_subsample(self):
        ds = synth_regression(100, 2, 0.1, 0)
        sub = subsample(ds, 10, 1)
        assert len(sub) == 10
        assert subsample(ds, 10, 1).features.tobytes() == sub.features.tobytes()


def _record(trial=0, strategy="sh", budget=40):
    return ResultRecord(trial, strategy, budget, '{"lambda":0.1}', 0.25, 40, 18, 0.0125)


class TestResults:
    def test_empty_is_header_only(self):
        assert emit_results([], "csv") == HEADER + "\n"
        assert ",".join(RESULT_COLUMNS) == HEADER

    def test_one_record(self):
        lines = emit_results([_record()], "csv").splitlines()
        assert len(lines) == 2 and lines[0] == HEADER

    def test_sorted_by_strategy_then_trial(self):
        recs = [_record(t, s) for t in (2, 0, 1) for s in ("uniform", "sh")]
        rows = emit_results(recs, "csv").splitlines()[1:]
        keys = [(r.split(",")[1], int(r.split(",")[0])) for r in rows]
        assert keys == sorted(keys)

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_roundtrip(self, fmt, tmp_path):
        recs = [_record(t, s, b) for t in range(3) for s in ("sr", "sh") for b in (40, 80)]
        path = tmp_path / f"out.{fmt}"
        emit_results(recs, fmt, path, meta={"seed": 3})
        back, meta = read_results(path)
        assert back == sorted(recs, key=ResultRecord.sort_key)
        assert meta == {"seed": 3}

    def test_file_object_and_unwritable(self, tmp_path):
        buf = io.StringIO()
        emit_results([_record()], "json", buf)
        assert '"records"' in buf.getvalue()
        with pytest.raises(OSError):
            emit_results([], "csv", tmp_path / "missing" / "x.csv")
