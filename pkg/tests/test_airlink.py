import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfsic.airlink import (
    CONSTELLATIONS,
    NoiseBudget,
    demap_hard,
    gen_channel,
    get_constellation,
    modulate,
    noise_variance,
    quantize,
    rls_channel_estimate,
    transmit,
)

QPSK_AG = get_constellation("qpsk-antigray")


class TestConstellations:
    def test_unit_energy_all_builtins(self):
        for c in CONSTELLATIONS.values():
            assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_labels_distinct_and_complete(self):
        for c in CONSTELLATIONS.values():
            assert len(set(c.labels)) == c.size
            assert sorted(int(lab, 2) for lab in c.labels) == list(range(c.size))

    def test_antigray_pinned_table(self):
        # 45 -> 00, 135 -> 11, 225 -> 01, 315 -> 10
        want = {
            "00": (1 + 1j) / np.sqrt(2),
            "11": (-1 + 1j) / np.sqrt(2),
            "01": (-1 - 1j) / np.sqrt(2),
            "10": (1 - 1j) / np.sqrt(2),
        }
        for lab, point in want.items():
            idx = QPSK_AG.labels.index(lab)
            assert QPSK_AG.points[idx] == pytest.approx(point)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            get_constellation("8psk")


class TestModulate:
    def test_antigray_00_maps_to_45_degrees(self):
        sym = modulate(np.array([0, 0]), QPSK_AG)
        assert sym[0] == pytest.approx((1 + 1j) / np.sqrt(2))

    def test_16qam_unit_power(self):
        c = get_constellation("16qam-gray")
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_roundtrip_all_length12_words(self):
        words = np.array(list(itertools.product((0, 1), repeat=12)), dtype=np.uint8)
        flat = words.reshape(-1)
        symbols = modulate(flat, QPSK_AG)
        np.testing.assert_array_equal(demap_hard(symbols, QPSK_AG), flat)

    def test_roundtrip_16qam_random(self):
        c = get_constellation("16qam-gray")
        rng = np.random.default_rng(5)
        bits = rng.integers(0, 2, 4 * 1000, dtype=np.uint8)
        np.testing.assert_array_equal(demap_hard(modulate(bits, c), c), bits)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            modulate(np.array([0, 1, 0]), QPSK_AG)


class TestQuantize:
    def test_exact_point(self):
        for p in QPSK_AG.points:
            assert quantize(p, QPSK_AG) == p

    def test_first_quadrant_pull(self):
        assert quantize(2 + 3j, QPSK_AG) == pytest.approx((1 + 1j) / np.sqrt(2))

    def test_tie_goes_to_lowest_index(self):
        assert quantize(0.0 + 0.0j, QPSK_AG) == QPSK_AG.points[0]

    @settings(max_examples=200, deadline=None)
    @given(re=st.floats(-3, 3), im=st.floats(-3, 3))
    def test_idempotent(self, re, im):
        u = re + 1j * im
        once = quantize(u, QPSK_AG)
        assert quantize(once, QPSK_AG) == once


class TestGenChannel:
    def test_deterministic_in_seed(self):
        a = gen_channel(4, 4, 42)
        b = gen_channel(4, 4, 42)
        np.testing.assert_array_equal(a.H, b.H)

    def test_overloaded_shape(self):
        ch = gen_channel(6, 4, 0)
        assert ch.H.shape == (4, 6)

    def test_zero_dimensions_rejected(self):
        with pytest.raises(ValueError):
            gen_channel(0, 4, 0)

    def test_entry_statistics(self):
        # 1e5 independent draws of one entry position
        draws = 100_000
        acc = np.array([gen_channel(1, 1, 1000 + t).H[0, 0] for t in range(draws)])
        mean = acc.mean()
        var = np.mean(np.abs(acc - mean) ** 2)
        assert abs(mean) < 0.02
        assert abs(var - 1.0) < 0.05

    def test_entries_uncorrelated(self):
        draws = 4000
        acc = np.stack([gen_channel(6, 4, 500_000 + t).H for t in range(draws)])
        flat = acc.reshape(draws, -1)
        gram = flat.conj().T @ flat / draws
        off_diag = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off_diag)) < 0.08


class TestNoiseVariance:
    def test_qpsk_uncoded_0db(self):
        assert noise_variance(NoiseBudget(0.0, 2, 1.0)) == pytest.approx(0.5)

    def test_qpsk_half_rate_0db(self):
        assert noise_variance(NoiseBudget(0.0, 2, 0.5)) == pytest.approx(1.0)

    def test_vanishes_at_high_snr(self):
        assert noise_variance(NoiseBudget(200.0, 2, 1.0)) < 1e-19


class TestTransmit:
    def test_noiseless_limit_exact(self):
        ch = gen_channel(3, 4, 1, sigma_v2=0.0)
        s = modulate(np.array([0, 0, 1, 1, 0, 1]), QPSK_AG)
        r = transmit(s, ch, 7)
        np.testing.assert_allclose(r, ch.H @ s, atol=1e-15)

    def test_noise_variance_empirical(self):
        sigma_v2 = 0.3
        ch = gen_channel(2, 4, 3, sigma_v2=sigma_v2)
        n = 25000  # pools 1e5 noise entries
        samples = np.stack(
            [transmit(np.zeros(2, dtype=complex), ch, 50_000 + t) for t in range(n)]
        )
        var = np.mean(np.abs(samples) ** 2)
        assert abs(var - sigma_v2) / sigma_v2 < 0.05

    def test_single_user_noise_is_circular(self):
        ch_h = np.ones((1, 1), dtype=complex)
        from mfsic.airlink import ChannelRealization

        ch = ChannelRealization(H=ch_h, sigma_v2=0.25)
        a1 = QPSK_AG.points[0]
        devs = np.array(
            [transmit(np.array([a1]), ch, 90_000 + t)[0] - a1 for t in range(20000)]
        )
        assert abs(devs.mean()) < 0.01
        assert abs(np.mean(np.abs(devs) ** 2) - 0.25) / 0.25 < 0.05
        # circularity: pseudo-variance of proper complex noise vanishes
        assert abs(np.mean(devs**2)) < 0.01

    def test_linear_in_symbols_at_fixed_seed(self):
        ch = gen_channel(3, 4, 11, sigma_v2=0.4)
        rng = np.random.default_rng(0)
        s1 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        s2 = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        base = transmit(np.zeros(3, dtype=complex), ch, 5)
        lhs = transmit(s1 + s2, ch, 5) - base
        rhs = (transmit(s1, ch, 5) - base) + (transmit(s2, ch, 5) - base)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        ch = gen_channel(3, 4, 1)
        with pytest.raises(ValueError):
            transmit(np.zeros(2, dtype=complex), ch, 0)


class TestRlsChannelEstimate:
    def _training(self, h, n, sigma_v2, seed):
        rng = np.random.default_rng(seed)
        k = h.shape[1]
        pairs = []
        for _ in range(n):
            s = QPSK_AG.points[rng.integers(0, 4, k)]
            v = np.sqrt(sigma_v2 / 2) * (
                rng.standard_normal(h.shape[0]) + 1j * rng.standard_normal(h.shape[0])
            )
            pairs.append((s, h @ s + v))
        return pairs

    def test_noiseless_exact_interpolation(self):
        # The default initialization carries an O(delta) bias, so the
        # exact-recovery check drives delta to zero.
        h = gen_channel(4, 4, 2).H
        pairs = self._training(h, 8, 0.0, 3)
        h_hat = rls_channel_estimate(pairs, lam=1.0, delta=1e-12)
        assert np.linalg.norm(h_hat - h) < 1e-8

    def test_forty_pilots_at_12db(self):
        sigma_v2 = noise_variance(NoiseBudget(12.0, 2, 0.5))
        rels = []
        for trial in range(60):
            h = gen_channel(8, 8, 100 + trial).H
            pairs = self._training(h, 40, sigma_v2, 200 + trial)
            h_hat = rls_channel_estimate(pairs, lam=0.998)
            rels.append(np.linalg.norm(h_hat - h) / np.linalg.norm(h))
        assert np.mean(rels) < 0.2

    def test_too_few_pairs_rejected(self):
        h = gen_channel(4, 4, 2).H
        pairs = self._training(h, 3, 0.0, 3)
        with pytest.raises(ValueError):
            rls_channel_estimate(pairs, lam=1.0)

    def test_bad_forgetting_factor_rejected(self):
        h = gen_channel(2, 2, 2).H
        pairs = self._training(h, 4, 0.0, 3)
        with pytest.raises(ValueError):
            rls_channel_estimate(pairs, lam=1.5)
