import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfsic.fec import (
    LLR_CLIP,
    ConvCode,
    Interleaver,
    conv_encode,
    deinterleave,
    interleave,
    map_decode,
)

from oracles import (
    encode_reference,
    map_posteriors_bruteforce,
    viterbi_decode,
)

CODE = ConvCode()


class TestConvEncode:
    def test_all_zero_message(self):
        out = conv_encode(np.zeros(20, dtype=np.uint8), CODE)
        assert not out.any()

    def test_impulse_response_prefix(self):
        out = conv_encode(np.array([1, 0, 0, 0, 0], dtype=np.uint8), CODE)
        np.testing.assert_array_equal(out[:6], [1, 1, 1, 0, 1, 1])

    def test_block_geometry_497_to_1000(self):
        msg = np.random.default_rng(0).integers(0, 2, 497, dtype=np.uint8)
        assert conv_encode(msg, CODE).size == 1000

    def test_matches_reference_encoder(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            msg = rng.integers(0, 2, int(rng.integers(1, 60)), dtype=np.uint8)
            ref, state = encode_reference(msg)
            np.testing.assert_array_equal(conv_encode(msg, CODE), ref)

    def test_termination_flushes_to_zero_state(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            msg = rng.integers(0, 2, int(rng.integers(1, 80)), dtype=np.uint8)
            _, state = encode_reference(msg)
            assert state == 0

    @settings(max_examples=50, deadline=None)
    @given(data=st.data(), n=st.integers(1, 64))
    def test_linearity(self, data, n):
        a = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
        b = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
        lhs = conv_encode(a ^ b, CODE)
        rhs = conv_encode(a, CODE) ^ conv_encode(b, CODE)
        np.testing.assert_array_equal(lhs, rhs)

    def test_empty_message_rejected(self):
        with pytest.raises(ValueError):
            conv_encode(np.array([], dtype=np.uint8), CODE)

    def test_tail_must_cover_memory(self):
        with pytest.raises(ValueError):
            ConvCode(constraint_length=3, generators=(0o7, 0o5), tail_bits=1)


class TestInterleaver:
    def test_identity(self):
        il = Interleaver.identity(8)
        x = np.arange(8)
        np.testing.assert_array_equal(interleave(x, il), x)

    def test_deterministic_in_seed(self):
        a = Interleaver.random(100, 5)
        b = Interleaver.random(100, 5)
        np.testing.assert_array_equal(a.permutation, b.permutation)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 200))
    def test_roundtrip(self, seed, n):
        il = Interleaver.random(n, seed)
        x = np.random.default_rng(seed).standard_normal(n)
        np.testing.assert_array_equal(deinterleave(interleave(x, il), il), x)
        assert sorted(il.permutation) == list(range(n))

    def test_length_mismatch_rejected(self):
        il = Interleaver.random(10, 0)
        with pytest.raises(ValueError):
            interleave(np.zeros(9), il)
        with pytest.raises(ValueError):
            deinterleave(np.zeros(11), il)


class TestMapDecode:
    def test_noiseless_recovers_message(self):
        rng = np.random.default_rng(3)
        msg = rng.integers(0, 2, 64, dtype=np.uint8)
        llr = (2.0 * conv_encode(msg, CODE) - 1.0) * 20.0
        _, post = map_decode(llr, CODE)
        np.testing.assert_array_equal((post > 0).astype(np.uint8), msg)

    def test_zero_in_zero_out(self):
        ext, post = map_decode(np.zeros(64), CODE)
        np.testing.assert_allclose(ext, 0.0, atol=1e-12)
        np.testing.assert_allclose(post, 0.0, atol=1e-12)

    def test_decomposition_identity(self):
        rng = np.random.default_rng(4)
        llr = rng.normal(0, 6, 400)
        ext, _, post_coded = map_decode(llr, CODE, return_posterior_coded=True)
        clipped = np.clip(llr, -LLR_CLIP, LLR_CLIP)
        np.testing.assert_allclose(post_coded, ext + clipped, atol=1e-9)

    def test_exact_posteriors_against_bruteforce(self):
        rng = np.random.default_rng(5)
        for trial in range(5):
            n_msg = 6
            llr = rng.normal(0, 3, (n_msg + CODE.tail_bits) * 2)
            ext, post_msg, post_coded = map_decode(llr, CODE, return_posterior_coded=True)
            ref_coded, ref_msg = map_posteriors_bruteforce(llr, n_msg)
            np.testing.assert_allclose(post_coded, ref_coded, atol=1e-9)
            np.testing.assert_allclose(post_msg, ref_msg, atol=1e-9)

    def test_agrees_with_viterbi_at_high_llr(self):
        rng = np.random.default_rng(6)
        agree = 0
        frames = 200
        for t in range(frames):
            msg = rng.integers(0, 2, 100, dtype=np.uint8)
            coded = conv_encode(msg, CODE)
            # BPSK over AWGN at a comfortable operating point
            snr = 10 ** (5.0 / 10.0)
            noisy = (2.0 * coded - 1.0) + rng.normal(0, np.sqrt(0.5 / snr), coded.size)
            llr = 4.0 * snr * noisy / 2.0
            _, post = map_decode(llr, CODE)
            hard_map = (post > 0).astype(np.uint8)
            hard_vit = viterbi_decode(llr)
            agree += int(np.array_equal(hard_map, hard_vit))
        assert agree >= 0.99 * frames

    def test_max_log_rarely_flips_signs(self):
        rng = np.random.default_rng(7)
        flips = 0
        total = 0
        for t in range(50):
            msg = rng.integers(0, 2, 100, dtype=np.uint8)
            coded = conv_encode(msg, CODE)
            snr = 10 ** (4.0 / 10.0)  # Eb/N0 = 4 dB, rate-1/2 BPSK equivalent
            noisy = (2.0 * coded - 1.0) + rng.normal(0, np.sqrt(0.5 / snr), coded.size)
            llr = 2.0 * snr * noisy
            _, exact = map_decode(llr, CODE)
            _, approx = map_decode(llr, CODE, max_log=True)
            flips += int(np.sum(np.sign(exact) != np.sign(approx)))
            total += exact.size
        assert flips / total <= 0.02

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            map_decode(np.zeros(7), CODE)
