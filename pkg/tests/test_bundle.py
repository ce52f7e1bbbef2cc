import numpy as np
import pytest

from awrascle.bundle import bundle_lock, load_bundle, load_meta, read_csv, write_csv
from awrascle.errors import AwRascleError, FieldFormatError


class TestCsv:
    def test_roundtrip_is_exact(self, tmp_path):
        rows = [[0.1, 1 / 3], [2.0, -1e-300]]
        write_csv(tmp_path / "a.csv", ["t", "x"], rows)
        head, arr = read_csv(tmp_path / "a.csv")
        assert head == ["t", "x"]
        assert np.array_equal(arr, np.array(rows))

    def test_bad_entry_names_line(self, tmp_path):
        (tmp_path / "a.csv").write_text("t,x\n0.0,1.0\n0.5,abc\n")
        with pytest.raises(FieldFormatError, match="line 3"):
            read_csv(tmp_path / "a.csv")

    def test_ragged_row(self, tmp_path):
        (tmp_path / "a.csv").write_text("t,x\n0.0\n")
        with pytest.raises(FieldFormatError, match="line 2"):
            read_csv(tmp_path / "a.csv")


class TestLock:
    def test_second_writer_refused(self, tmp_path):
        with bundle_lock(tmp_path / "b"):
            with pytest.raises(AwRascleError) as ei:
                with bundle_lock(tmp_path / "b"):
                    pass
            assert ei.value.condition == "exclusive bundle writer"
        assert not (tmp_path / "b" / ".lock").exists()


class TestLoad:
    def test_loaded_shapes(self, built_bundle):
        b = load_bundle(built_bundle)
        n_t = b.meta["n_t"]
        assert b.times.shape == (n_t,) and b.V.shape == (n_t, 2)
        assert len(b.nodes["M"]) == n_t
        assert b.ends["F"].entries.shape == (2, 32, 32)
        assert b.T == 1.0

    def test_not_a_bundle(self, tmp_path):
        with pytest.raises(FieldFormatError, match="meta.json"):
            load_meta(tmp_path)
