import numpy as np
import pytest

from mfcast.emd import EmdDecomposer, SiftConfig, count_zero_crossings, eemd, emd, find_extrema, pad_modes
from mfcast.errors import ConfigError, DataError


class TestExtrema:
    def test_simple(self):
        maxima, minima = find_extrema(np.array([0.0, 2.0, 1.0, -1.0, 0.5, 0.0]))
        assert list(maxima) == [1, 4] and list(minima) == [3]

    def test_plateau_counted_once(self):
        maxima, _ = find_extrema(np.array([0.0, 1.0, 1.0, 1.0, 0.0]))
        assert list(maxima) == [2]

    def test_monotone(self):
        maxima, minima = find_extrema(np.arange(10.0))
        assert maxima.size == minima.size == 0

    def test_zero_crossings(self):
        assert count_zero_crossings(np.array([1.0, -1.0, 0.0, -2.0, 3.0])) == 2


class TestEmd:
    def test_exact_reconstruction(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=int(rng.integers(20, 150))) * 30 + 800
            m = emd(x)
            assert np.max(np.abs(m.reconstruct() - x)) <= 1e-9 * np.max(np.abs(x))
            assert m.labels[-1] == "residue"

    def test_fast_tone_first(self):
        t = np.arange(200)
        x = np.sin(2 * np.pi * t / 5) + 0.5 * np.sin(2 * np.pi * t / 40)
        m = emd(x)
        fast = np.sin(2 * np.pi * t / 5)
        assert np.corrcoef(m.modes[0][20:-20], fast[20:-20])[0, 1] > 0.95

    def test_monotone_is_residue_only(self):
        m = emd(np.linspace(0.0, 1.0, 30))
        assert m.k == 1 and m.labels == ("residue",)

    def test_too_short(self):
        with pytest.raises(DataError):
            emd(np.arange(5.0))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            SiftConfig(sift_sd_threshold=1.5)


class TestEemd:
    def test_reconstruction_and_determinism(self):
        x = np.random.default_rng(1).normal(size=60)
        cfg = SiftConfig(ensemble_size=10, seed=3)
        m1, m2 = eemd(x, cfg), eemd(x, cfg)
        assert np.array_equal(m1.modes, m2.modes)
        assert np.allclose(m1.reconstruct(), x, atol=1e-10)

    def test_seed_matters(self):
        x = np.random.default_rng(1).normal(size=60)
        a = eemd(x, SiftConfig(ensemble_size=5, seed=1))
        b = eemd(x, SiftConfig(ensemble_size=5, seed=2))
        assert not np.array_equal(a.modes, b.modes)

    def test_zero_noise_equals_emd(self):
        x = np.random.default_rng(2).normal(size=50)
        assert np.array_equal(eemd(x, SiftConfig(noise_amplitude=0.0)).modes, emd(x).modes)


class TestFixedWidth:
    def test_pad(self):
        m = emd(np.random.default_rng(3).normal(size=40), SiftConfig(max_imfs=2))
        p = pad_modes(m, 5)
        assert p.k == 6 and p.labels[-1] == "residue"
        assert np.array_equal(p.reconstruct(), m.reconstruct())

    def test_decomposer_columns(self):
        d = EmdDecomposer(SiftConfig(max_imfs=8))
        m = d(np.random.default_rng(4).normal(size=32))
        assert m.k == d.k == 9
        assert d.labels() == m.labels
