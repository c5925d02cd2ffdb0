"""Independent reference implementations used only by the tests.

Everything here is deliberately written from scratch (dict-based trellises,
direct probability summations, dense inverses) so the library code is
checked against an unrelated computation path.
"""

import itertools

import numpy as np


def trellis_tables(generators=(0o7, 0o5), constraint_length=3):
    """Build (next_state, output) dicts for a feedforward code."""
    memory = constraint_length - 1
    n_states = 2**memory
    nxt = {}
    out = {}
    for state in range(n_states):
        for bit in (0, 1):
            reg = (bit << memory) | state
            out[(state, bit)] = tuple(bin(g & reg).count("1") % 2 for g in generators)
            nxt[(state, bit)] = (bit << (memory - 1)) | (state >> 1)
    return nxt, out


def encode_reference(message, generators=(0o7, 0o5), constraint_length=3, tail_bits=3):
    """Shift-register encoder; returns (coded_bits, final_state)."""
    nxt, out = trellis_tables(generators, constraint_length)
    state = 0
    coded = []
    for b in list(message) + [0] * tail_bits:
        coded.extend(out[(state, int(b))])
        state = nxt[(state, int(b))]
    return np.array(coded, dtype=np.uint8), state


def viterbi_decode(coded_llrs, generators=(0o7, 0o5), constraint_length=3, tail_bits=3):
    """Maximum-likelihood sequence decoding with forced-zero tail inputs.

    `coded_llrs` uses the library convention log P(1)/P(0); the path metric
    maximizes the codeword correlation with the LLRs.
    """
    nxt, out = trellis_tables(generators, constraint_length)
    memory = constraint_length - 1
    n_states = 2**memory
    n_out = len(generators)
    steps = len(coded_llrs) // n_out
    n_msg = steps - tail_bits

    metric = {0: 0.0}
    paths = {0: []}
    for t in range(steps):
        llrs = coded_llrs[t * n_out : (t + 1) * n_out]
        allowed_bits = (0, 1) if t < n_msg else (0,)
        new_metric = {}
        new_paths = {}
        for state, m in metric.items():
            for bit in allowed_bits:
                branch = sum(
                    (l if o else -l) / 2.0 for l, o in zip(llrs, out[(state, bit)])
                )
                ns = nxt[(state, bit)]
                cand = m + branch
                if ns not in new_metric or cand > new_metric[ns]:
                    new_metric[ns] = cand
                    new_paths[ns] = paths[state] + [bit]
        metric = new_metric
        paths = new_paths
    best = paths[0]  # terminated codeword ends in the zero state
    return np.array(best[:n_msg], dtype=np.uint8)


def map_posteriors_bruteforce(coded_llrs, n_msg, generators=(0o7, 0o5), constraint_length=3, tail_bits=3):
    """Exact per-bit posteriors by summing over every message.

    Matches the library decoder's codeword set: tail-step inputs are free
    and termination in the zero state is required.  Returns
    (posterior_coded, posterior_message) LLR arrays.
    """
    nxt, out = trellis_tables(generators, constraint_length)
    n_out = len(generators)
    steps = n_msg + tail_bits
    num1_coded = np.zeros(steps * n_out)
    den0_coded = np.zeros(steps * n_out)
    num1_msg = np.zeros(n_msg)
    den0_msg = np.zeros(n_msg)
    num1_coded[:] = -np.inf
    den0_coded[:] = -np.inf
    num1_msg[:] = -np.inf
    den0_msg[:] = -np.inf

    def logaddexp(a, b):
        return np.logaddexp(a, b)

    for bits in itertools.product((0, 1), repeat=steps):
        state = 0
        coded = []
        for b in bits:
            coded.extend(out[(state, b)])
            state = nxt[(state, b)]
        if state != 0:
            continue
        loglik = sum(
            (l if cb else -l) / 2.0 for l, cb in zip(coded_llrs, coded)
        )
        for j, cb in enumerate(coded):
            if cb:
                num1_coded[j] = logaddexp(num1_coded[j], loglik)
            else:
                den0_coded[j] = logaddexp(den0_coded[j], loglik)
        for j in range(n_msg):
            if bits[j]:
                num1_msg[j] = logaddexp(num1_msg[j], loglik)
            else:
                den0_msg[j] = logaddexp(den0_msg[j], loglik)
    return num1_coded - den0_coded, num1_msg - den0_msg


def extrinsic_llr_direct(u, v, sigma_eps2, priors, points, label_bits):
    """Direct-summation extrinsic bit LLRs for a single filter output."""
    n_bits = label_bits.shape[1]

    def bit_prob(bit, llr):
        x = 1.0 if bit else -1.0
        return 0.5 * (1.0 + x * np.tanh(llr / 2.0))

    llrs = []
    for j in range(n_bits):
        num = 0.0
        den = 0.0
        for point, bits in zip(points, label_bits):
            lik = np.exp(-abs(u - v * point) ** 2 / sigma_eps2)
            prior = 1.0
            for tau in range(n_bits):
                if tau == j:
                    continue
                prior *= bit_prob(bits[tau], priors[tau])
            if bits[j]:
                num += lik * prior
            else:
                den += lik * prior
        llrs.append(np.log(num) - np.log(den))
    return np.array(llrs)


def soft_symbol_direct(priors, points, label_bits):
    """Direct-summation prior-mean symbol."""

    def bit_prob(bit, llr):
        x = 1.0 if bit else -1.0
        return 0.5 * (1.0 + x * np.tanh(llr / 2.0))

    z = 0.0 + 0.0j
    for point, bits in zip(points, label_bits):
        w = 1.0
        for tau, b in enumerate(bits):
            w *= bit_prob(b, priors[tau])
        z += w * point
    return z
