import numpy as np
import pytest

from pyxrai.core import ParameterError
from pyxrai.model import (
    GRID_SIZE,
    GRID_STEP,
    PEAK,
    PEAK_NODE,
    GridFunction,
    LinearModel,
    TinyNet,
    finite_diff_gradient,
    grid_eval,
    grid_gradient,
    load_tinynet,
    save_tinynet,
    tinynet_randomize,
    tinynet_train,
)

from oracles import relative_error


def kink_margin(net, x):
    """Distance of the nearest hidden pre-activation from the ReLU kink."""
    return np.abs(x.ravel() @ net.w1 + net.b1).min()


def blob_dataset(n=80, seed=0):
    """Two classes of 8x8 gray images: bright blob top-left vs bottom-right."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 0.3, size=(n, 8, 8, 1))
    y = np.arange(n) % 2
    for i in range(n):
        if y[i] == 0:
            x[i, 1:4, 1:4] += 0.6
        else:
            x[i, 4:7, 4:7] += 0.6
    return np.clip(x, 0, 1), y


class TestTinyNet:
    def test_forward_is_probability(self, rng):
        net = TinyNet.initialize((4, 4, 3), 5, seed=1)
        p = net.predict(rng.random((7, 4, 4, 3)))
        assert p.shape == (7, 5)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_single_and_batch_agree(self, rng):
        net = TinyNet.initialize((4, 4, 3), 3, seed=2)
        x = rng.random((2, 4, 4, 3))
        np.testing.assert_allclose(net.predict(x)[1], net.predict(x[1]), rtol=0, atol=1e-14)
        np.testing.assert_allclose(net.gradient(x, 2)[0], net.gradient(x[0], 2), rtol=0, atol=1e-14)

    def test_gradient_shape(self, rng):
        net = TinyNet.initialize((5, 3, 3), 3, seed=2)
        assert net.gradient(rng.random((5, 3, 3)), 0).shape == (5, 3, 3)

    def test_wrong_input_shape(self):
        net = TinyNet.initialize((4, 4, 3), 3)
        with pytest.raises(ParameterError):
            net.predict(np.zeros((4, 5, 3)))

    def test_gradient_matches_finite_differences(self, trained_net, corpus):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(5):
            x = corpus.images[rng.integers(len(corpus.images))]
            c = int(rng.integers(4))
            worst = max(worst, relative_error(trained_net.gradient(x, c), finite_diff_gradient(trained_net, x, c)))
        assert worst < 1e-4

    def test_finite_difference_second_order(self):
        net = TinyNet.initialize((6, 6, 3), 4, seed=0)
        h = 2e-3
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.random((6, 6, 3))
            # stay clear of ReLU kinks so the surface is smooth within +-h
            if kink_margin(net, x) > 10 * h * np.abs(net.w1).max():
                break
        a = net.gradient(x, 1)
        e1 = np.abs(finite_diff_gradient(net, x, 1, h=h) - a).max()
        e2 = np.abs(finite_diff_gradient(net, x, 1, h=h / 2) - a).max()
        assert 3.5 < e1 / e2 < 4.5

    def test_finite_diff_rejects_bad_step(self):
        with pytest.raises(ParameterError):
            finite_diff_gradient(TinyNet.initialize((2, 2, 1), 2), np.zeros((2, 2, 1)), 0, h=0.0)


class TestTraining:
    def test_blob_dataset_learned(self):
        x, y = blob_dataset()
        net = tinynet_train(x, y, epochs=50, seed=0)
        assert net.train_accuracy >= 0.95

    def test_zero_epochs_is_initialization(self):
        x, y = blob_dataset(20)
        net = tinynet_train(x, y, epochs=0, seed=4)
        init = TinyNet.initialize((8, 8, 1), 2, seed=4)
        for a, b in [(net.w1, init.w1), (net.b1, init.b1), (net.w2, init.w2), (net.b2, init.b2)]:
            np.testing.assert_array_equal(a, b)

    def test_deterministic(self):
        x, y = blob_dataset(30)
        a, b = tinynet_train(x, y, epochs=3, seed=9), tinynet_train(x, y, epochs=3, seed=9)
        np.testing.assert_array_equal(a.w1, b.w1)
        np.testing.assert_array_equal(a.w2, b.w2)

    def test_errors(self):
        with pytest.raises(ParameterError):
            tinynet_train(np.zeros((0, 4, 4, 1)), np.zeros(0, dtype=int))
        with pytest.raises(ParameterError):
            tinynet_train(np.zeros((3, 4, 4, 1)), np.zeros(2, dtype=int))

    def test_corpus_accuracy(self, trained_net, corpus):
        pred = trained_net.predict(corpus.images[96:]).argmax(axis=1)
        assert np.mean(pred == corpus.labels[96:]) >= 0.9


class TestRandomize:
    def test_changes_outputs(self, trained_net, corpus):
        x = corpus.images[0]
        p = trained_net.predict(x)
        changed = [np.abs(tinynet_randomize(trained_net, s).predict(x) - p).sum() > 1e-3 for s in range(100)]
        assert sum(changed) >= 99

    def test_seeded_and_same_architecture(self, trained_net):
        a, b = tinynet_randomize(trained_net, 5), tinynet_randomize(trained_net, 5)
        np.testing.assert_array_equal(a.w1, b.w1)
        assert a.w1.shape == trained_net.w1.shape and a.w2.shape == trained_net.w2.shape
        assert a.input_shape == trained_net.input_shape


class TestSerialization:
    def test_round_trip_to_float32(self, tmp_path):
        net = TinyNet.initialize((3, 4, 3), 5, hidden=7, seed=8)
        save_tinynet(net, tmp_path / "n.bin")
        back = load_tinynet(tmp_path / "n.bin")
        assert back.input_shape == (3, 4, 3) and back.hidden == 7 and back.n_classes == 5
        np.testing.assert_array_equal(back.w1, net.w1.astype(np.float32))

    def test_header_layout(self, tmp_path):
        net = TinyNet.initialize((2, 2, 1), 2, hidden=3)
        save_tinynet(net, tmp_path / "n.bin")
        data = (tmp_path / "n.bin").read_bytes()
        assert data[:4] == b"TNYN"
        assert np.frombuffer(data[4:28], dtype="<u4").tolist() == [1, 2, 2, 1, 3, 2]
        assert len(data) == 28 + 4 * (4 * 3 + 3 + 3 * 2 + 2)

    def test_rejects_garbage(self, tmp_path):
        (tmp_path / "bad.bin").write_bytes(b"nope" + bytes(40))
        with pytest.raises(ParameterError):
            load_tinynet(tmp_path / "bad.bin")


class TestLinearModel:
    def make(self, rng):
        return LinearModel((3, 3, 2), rng.normal(size=(18, 3)), rng.normal(size=3))

    def test_finite_diff_equals_weights(self, rng):
        m = self.make(rng)
        fd = finite_diff_gradient(m, rng.random((3, 3, 2)), 1)
        np.testing.assert_allclose(fd.ravel(), m.weights[:, 1], atol=1e-8)

    def test_gradient_is_weight_column(self, rng):
        m = self.make(rng)
        np.testing.assert_array_equal(m.gradient(rng.random((3, 3, 2)), 2).ravel(), m.weights[:, 2])


def catmull_rom_1d(p0, p1, p2, p3, t):
    """Textbook Catmull-Rom segment between p1 and p2."""
    return 0.5 * (2 * p1 + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t ** 2
                  + (-p0 + 3 * p1 - 3 * p2 + p3) * t ** 3)


class TestGridFunction:
    def test_peak_is_exactly_one(self):
        for seed in range(50):
            assert grid_eval(GridFunction.sample(seed), PEAK, PEAK) == 1.0

    def test_lattice_values_below_half(self):
        g = GridFunction.sample(3)
        for i in range(GRID_SIZE):
            for j in range(GRID_SIZE):
                x1, x2 = i * GRID_STEP, j * GRID_STEP
                if (i, j) == (PEAK_NODE, PEAK_NODE) or max(x1, x2) > 255:
                    continue
                v = float(grid_eval(g, x1, x2))
                assert v == pytest.approx(g.grid[i, j], abs=1e-12)
                assert v < 0.5

    def test_cell_midpoint_matches_tensor_formula(self):
        g = GridFunction.sample(12)
        i, j = 4, 13
        x1, x2 = (i + 0.5) * GRID_STEP, (j + 0.5) * GRID_STEP
        rows = [catmull_rom_1d(*g.grid[i - 1:i + 3, jj], 0.5) for jj in range(j - 1, j + 3)]
        expected = catmull_rom_1d(*rows, 0.5)
        assert float(grid_eval(g, x1, x2)) == pytest.approx(expected, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        h = 1e-3
        for seed in range(10):
            g = GridFunction.sample(seed)
            x1, x2 = rng.uniform(1, 254, size=2)
            a1, a2 = grid_gradient(g, x1, x2)
            n1 = (g(x1 + h, x2) - g(x1 - h, x2)) / (2 * h)
            n2 = (g(x1, x2 + h) - g(x1, x2 - h)) / (2 * h)
            assert abs(a1 - n1) < 1e-5 and abs(a2 - n2) < 1e-5

    def test_zero_gradient_at_peak(self):
        for seed in range(20):
            g1, g2 = GridFunction.sample(seed).gradient(PEAK, PEAK)
            assert g1 == 0.0 and g2 == 0.0

    def test_constant_grid_flat(self, rng):
        g = GridFunction.constant(0.3)
        x = rng.uniform(0, 255, size=(2, 30))
        np.testing.assert_allclose(g(x[0], x[1]), 0.3, atol=1e-12)
        d1, d2 = g.gradient(x[0], x[1])
        np.testing.assert_allclose(d1, 0.0, atol=1e-12)
        np.testing.assert_allclose(d2, 0.0, atol=1e-12)

    @pytest.mark.parametrize("point", [(-1.0, 3.0), (3.0, 255.5), (np.nan, 0.0)])
    def test_out_of_range(self, point):
        with pytest.raises(ParameterError):
            GridFunction.sample(0)(*point)

    def test_domain_corners_defined(self):
        g = GridFunction.sample(1)
        assert np.isfinite(g(0.0, 255.0)) and np.isfinite(g(255.0, 0.0))
