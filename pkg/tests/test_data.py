import numpy as np
import pytest

from multimcd.data import (
    PALETTE,
    DataError,
    DatasetSplit,
    ToySpec,
    boundary_grid,
    load_csv,
    make_toy,
    rotation_matrix,
    write_boundary_csv,
    write_boundary_ppm,
)
from multimcd.model import ModelSpec, init_model


def _on_source_arcs(x, tol=1e-9):
    upper = np.abs(np.hypot(x[:, 0], x[:, 1]) - 1) < tol
    lower = np.abs(np.hypot(x[:, 0] - 1, x[:, 1] - 0.5) - 1) < tol
    return (upper & (x[:, 1] >= -tol)) | (lower & (x[:, 1] <= 0.5 + tol))


class TestToy:
    def test_default_sizes(self):
        split = make_toy()
        assert split.source_x.shape == (300, 2)
        assert split.target_x.shape == (300, 2)
        assert split.n_classes == 2

    def test_class_balance(self):
        for n in (300, 301, 7):
            split = make_toy(ToySpec(n_per_domain=n))
            for y in (split.source_y, split.target_y_eval):
                counts = np.bincount(y, minlength=2)
                assert np.all(np.abs(counts - n / 2) <= 1)

    def test_deterministic(self):
        a, b = make_toy(ToySpec(seed=3)), make_toy(ToySpec(seed=3))
        for f in ("source_x", "source_y", "target_x", "target_y_eval"):
            assert getattr(a, f).tobytes() == getattr(b, f).tobytes()

    def test_no_shift_same_arcs(self):
        split = make_toy(ToySpec(rotation_deg=0, noise_sigma=0))
        assert np.all(_on_source_arcs(split.source_x))
        assert np.all(_on_source_arcs(split.target_x))

    def test_inverse_rotation_recovers_arcs(self):
        split = make_toy(ToySpec(rotation_deg=30, noise_sigma=0))
        back = split.target_x @ rotation_matrix(-30).T
        assert np.all(_on_source_arcs(back))
        assert not np.all(_on_source_arcs(split.target_x, tol=1e-3))

    def test_labels_follow_arcs(self):
        split = make_toy(ToySpec(noise_sigma=0))
        upper = np.abs(np.hypot(*split.source_x.T) - 1) < 1e-9
        assert np.all(split.source_y[upper] == 0)

    @pytest.mark.parametrize("kw", [dict(n_per_domain=0), dict(noise_sigma=-0.1)])
    def test_invalid_spec(self, kw):
        with pytest.raises(DataError):
            ToySpec(**kw)

    def test_training_view_hides_target_labels(self):
        view = make_toy().training_view()
        assert not hasattr(view, "target_y_eval")


class TestCsv:
    def _write(self, path, text):
        path.write_text(text)
        return path

    def test_load(self, tmp_path):
        rows = "\n".join(f"{i * 0.1},{-i},{i % 2}" for i in range(10))
        src = self._write(tmp_path / "s.csv", "x1,x2,label\n" + rows + "\n")
        tgt = self._write(tmp_path / "t.csv", rows + "\n")
        split = load_csv(src, tgt)
        assert split.source_x.shape == (10, 2)
        assert split.n_classes == 2
        assert split.has_target_labels

    def test_unlabelled_target(self, tmp_path):
        src = self._write(tmp_path / "s.csv", "0,0,0\n1,1,1\n2,2,2\n")
        tgt = self._write(tmp_path / "t.csv", "0.5,0.5\n1.5,1.5\n")
        split = load_csv(src, tgt)
        assert split.n_classes == 3
        assert split.target_y_eval.size == 0 and not split.has_target_labels

    def test_malformed_row_names_file_and_line(self, tmp_path):
        src = self._write(tmp_path / "s.csv", "0,0,0\n1,oops,1\n")
        tgt = self._write(tmp_path / "t.csv", "0,0\n")
        with pytest.raises(DataError, match=r"s\.csv:2"):
            load_csv(src, tgt)

    def test_ragged_rows(self, tmp_path):
        src = self._write(tmp_path / "s.csv", "0,0,0\n1,1\n")
        tgt = self._write(tmp_path / "t.csv", "0,0\n")
        with pytest.raises(DataError, match="columns"):
            load_csv(src, tgt)

    def test_target_label_beyond_source_classes(self, tmp_path):
        src = self._write(tmp_path / "s.csv", "0,0,0\n1,1,1\n")
        tgt = self._write(tmp_path / "t.csv", "0,0,4\n")
        with pytest.raises(DataError, match="K=2"):
            load_csv(src, tgt)

    def test_non_integer_label(self, tmp_path):
        src = self._write(tmp_path / "s.csv", "0,0,0.5\n")
        tgt = self._write(tmp_path / "t.csv", "0,0\n")
        with pytest.raises(DataError):
            load_csv(src, tgt)

    def test_inputs_untouched(self, tmp_path):
        src = self._write(tmp_path / "s.csv", "0,0,0\n1,1,1\n")
        tgt = self._write(tmp_path / "t.csv", "0,0\n")
        before = src.read_bytes(), tgt.read_bytes()
        load_csv(src, tgt)
        assert (src.read_bytes(), tgt.read_bytes()) == before


def _linear_model(w, b):
    """Model whose heads all compute softmax of (w.x + b, 0): class 0 iff w.x + b > 0."""
    spec = ModelSpec(feature_dim=2, extractor_hidden=(2,), head_hidden=(2,), n_classifiers=2)
    m = init_model(spec, 0)
    e = m.extractor.tensors
    # relu(x) - relu(-x) trick keeps the identity through two relu layers
    e[0].values[:] = [[1, -1], [0, 0]]
    e[2].values[:] = [[1, 0], [0, 1]]
    for t in (e[1], e[3]):
        t.values[:] = 0.0
    # features: (relu(x0), relu(-x0)); head: logit0 = w*(f0 - f1) + b = w*x0 + b
    for head in m.heads:
        h = head.tensors
        h[0].values[:] = [[1, 0], [0, 1]]
        h[1].values[:] = 0.0
        h[2].values[:] = [[w, 0], [-w, 0]]
        h[3].values[:] = [b, 0]
    return m


class TestBoundaryGrid:
    def test_lattice_size(self):
        m = init_model(ModelSpec(), 0)
        grid = boundary_grid(m, (-1, 1, -1, 1), 3)
        assert grid.points.shape == (9, 2)
        assert grid.heads.shape == (3, 9)
        np.testing.assert_array_equal(grid.xs, [-1, 0, 1])

    def test_constant_model(self):
        m = init_model(ModelSpec(), 0)
        for h in m.heads:
            h.tensors[-2].values[...] = 0.0
            h.tensors[-1].values[:] = [0.0, 1.0]
        grid = boundary_grid(m, (-2, 2, -2, 2), 10)
        assert np.all(grid.consensus == 1)

    def test_linear_boundary(self):
        w, b = 2.0, -0.5
        m = _linear_model(w, b)
        grid = boundary_grid(m, (-1.05, 1.05, -1, 1), 15)
        expected = np.where(w * grid.points[:, 0] + b > 0, 0, 1)
        np.testing.assert_array_equal(grid.consensus, expected)
        assert np.all(grid.heads == expected)

    def test_requires_2d(self):
        m = init_model(ModelSpec(input_dim=3), 0)
        with pytest.raises(DataError):
            boundary_grid(m, (0, 1, 0, 1), 4)

    def test_resolution_floor(self):
        with pytest.raises(DataError):
            boundary_grid(init_model(ModelSpec(), 0), (0, 1, 0, 1), 1)

    def test_csv_and_ppm(self, tmp_path):
        m = init_model(ModelSpec(n_classifiers=2), 1)
        grid = boundary_grid(m, (-1, 1, -1, 1), 4)
        write_boundary_csv(grid, tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "x,y,consensus,head_1,head_2"
        assert len(lines) == 17
        write_boundary_ppm(grid, tmp_path / "b.ppm")
        raw = (tmp_path / "b.ppm").read_bytes()
        header = b"P6\n4 4\n255\n"
        assert raw.startswith(header) and len(raw) == len(header) + 4 * 4 * 3
        # bottom-left pixel is grid point 0
        assert raw[-12:-9] == PALETTE[grid.consensus[0]].tobytes()


def test_split_validation():
    with pytest.raises(DataError):
        DatasetSplit(np.zeros((3, 2)), np.array([0, 1, 2]), np.zeros((2, 2)), np.zeros(0, int), 2)
