"""Convolutional coding, interleaving and log-domain MAP decoding.

The coded chain uses a rate-1/2 feedforward convolutional code with
constraint length 3 and generators (7, 5) octal.  Blocks are terminated:
the two memory bits are flushed with zero inputs and one further zero-input
step pads the block, so a 497-bit message maps to exactly 1000 coded bits.

All log-likelihood ratios are natural-log, with the convention
``llr = log P(bit = 1) / P(bit = 0)``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "ConvCode",
    "Interleaver",
    "Frame",
    "conv_encode",
    "interleave",
    "deinterleave",
    "map_decode",
    "LLR_CLIP",
]

LLR_CLIP = 50.0


def _parity(x):
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return x & 1


@dataclass(frozen=True)
class ConvCode:
    """A rate-1/n feedforward convolutional code with zero-flush termination.

    `generators` are octal-style integers whose binary taps act on
    ``(x[t], x[t-1], ..., x[t-memory])``, most-recent bit first.
    `tail_bits` zero inputs are appended to every message: the first
    `memory` of them drive the register back to the zero state, the rest
    pad the block length.
    """

    constraint_length: int = 3
    generators: tuple[int, ...] = (0o7, 0o5)
    tail_bits: int = 3

    def __post_init__(self):
        if self.tail_bits < self.memory:
            raise ValueError("tail_bits must cover the encoder memory")
        top = 1 << self.constraint_length
        if any(not 0 < g < top for g in self.generators):
            raise ValueError("generator taps exceed the constraint length")

    @property
    def memory(self):
        return self.constraint_length - 1

    @property
    def n_out(self):
        return len(self.generators)

    @property
    def n_states(self):
        return 1 << self.memory

    @property
    def rate(self):
        return 1.0 / self.n_out

    @cached_property
    def _tables(self):
        """(next_state, out_bits) tables indexed by [input_bit][state].

        State packs the previous `memory` inputs with the most recent in
        the high bit.
        """
        m = self.memory
        nxt = np.empty((2, self.n_states), dtype=np.intp)
        out = np.empty((2, self.n_states, self.n_out), dtype=np.uint8)
        for b in (0, 1):
            for s in range(self.n_states):
                reg = (b << m) | s
                out[b, s] = [_parity(g & reg) for g in self.generators]
                nxt[b, s] = (b << (m - 1)) | (s >> 1) if m > 0 else 0
        return nxt, out


def conv_encode(message, code=ConvCode()):
    """Encode and terminate a message; output length is
    ``n_out * (len(message) + tail_bits)``."""
    message = np.asarray(message, dtype=np.uint8)
    if message.size == 0:
        raise ValueError("empty message")
    nxt, out = code._tables
    bits_in = np.concatenate([message, np.zeros(code.tail_bits, dtype=np.uint8)])
    coded = np.empty(bits_in.size * code.n_out, dtype=np.uint8)
    state = 0
    n = code.n_out
    for t, b in enumerate(bits_in):
        coded[t * n : (t + 1) * n] = out[b, state]
        state = nxt[b, state]
    return coded


@dataclass(frozen=True)
class Interleaver:
    """A seeded uniform random permutation of coded-bit positions."""

    permutation: np.ndarray
    seed: int | None = None

    @classmethod
    def random(cls, n, seed):
        perm = np.random.default_rng(seed).permutation(n)
        return cls(permutation=perm, seed=seed)

    @classmethod
    def identity(cls, n):
        return cls(permutation=np.arange(n))

    @cached_property
    def _inverse(self):
        return np.argsort(self.permutation)

    @property
    def size(self):
        return self.permutation.size


def interleave(bits, il):
    """Permute a block: output position `i` carries input ``permutation[i]``."""
    bits = np.asarray(bits)
    if bits.shape[0] != il.size:
        raise ValueError(f"block length {bits.shape[0]} != permutation size {il.size}")
    return bits[il.permutation]


def deinterleave(bits, il):
    """Exact inverse of :func:`interleave`."""
    bits = np.asarray(bits)
    if bits.shape[0] != il.size:
        raise ValueError(f"block length {bits.shape[0]} != permutation size {il.size}")
    return bits[il._inverse]


@dataclass
class Frame:
    """One user's coded block and the receiver-side arrays attached to it."""

    message_bits: np.ndarray
    coded_bits: np.ndarray
    interleaved_bits: np.ndarray
    symbols: np.ndarray
    prior_llr: np.ndarray | None = None
    extrinsic_llr: np.ndarray | None = None
    posterior_llr: np.ndarray | None = None


def map_decode(prior_llr_coded, code=ConvCode(), max_log=False, return_posterior_coded=False):
    """Log-domain forward-backward (BCJR) decoding over the code trellis.

    Parameters
    ----------
    prior_llr_coded : (n_out * T,) float ndarray
        Input LLRs for every coded bit, tail steps included.  Values are
        clipped to ``+/-LLR_CLIP`` before the recursion.
    code : ConvCode
    max_log : bool
        Use the max-log approximation instead of exact log-sum-exp.
    return_posterior_coded : bool
        Also return the full posterior coded-bit LLRs (extrinsic + clipped
        prior, an exact decomposition).

    Returns
    -------
    extrinsic_llr_coded : (n_out * T,) float ndarray
        Posterior coded-bit LLR minus the (clipped) input prior.
    posterior_llr_message : (T - tail_bits,) float ndarray
        Posterior LLRs of the message bits; decide 1 where positive.
    """
    llr = np.clip(np.asarray(prior_llr_coded, dtype=float), -LLR_CLIP, LLR_CLIP)
    n = code.n_out
    if llr.size % n != 0:
        raise ValueError(f"LLR length {llr.size} not a multiple of n_out={n}")
    t_total = llr.size // n
    t_msg = t_total - code.tail_bits
    if t_msg < 1:
        raise ValueError("block shorter than the termination tail")

    nxt, out = code._tables
    n_states = code.n_states
    sgn = 1.0 - 2.0 * out.astype(float)  # +1 for coded bit 0, -1 for bit 1
    llr_steps = llr.reshape(t_total, n)

    # Branch metrics gamma[t, b, s].  Tail-step inputs stay free; the
    # termination is enforced through the backward boundary alone, which
    # keeps every coded-bit LLR finite and preserves the code symmetry
    # (all-zero input -> all-zero output).
    gamma = -0.5 * np.einsum("tj,bsj->tbs", llr_steps, sgn)

    neg_inf = -np.inf
    combine2 = np.maximum if max_log else np.logaddexp

    # Predecessor table: for each state, the two (input, state) edges into it.
    pred_b = np.empty((n_states, 2), dtype=np.intp)
    pred_s = np.empty((n_states, 2), dtype=np.intp)
    fill = np.zeros(n_states, dtype=np.intp)
    for b in (0, 1):
        for s in range(n_states):
            ns = nxt[b, s]
            pred_b[ns, fill[ns]] = b
            pred_s[ns, fill[ns]] = s
            fill[ns] += 1

    alpha = np.full((t_total + 1, n_states), neg_inf)
    alpha[0, 0] = 0.0
    for t in range(t_total):
        g = gamma[t]
        a = combine2(
            alpha[t, pred_s[:, 0]] + g[pred_b[:, 0], pred_s[:, 0]],
            alpha[t, pred_s[:, 1]] + g[pred_b[:, 1], pred_s[:, 1]],
        )
        alpha[t + 1] = a - a.max()

    beta = np.full((t_total + 1, n_states), neg_inf)
    beta[t_total, 0] = 0.0
    for t in range(t_total - 1, -1, -1):
        g = gamma[t]
        b = combine2(g[0] + beta[t + 1, nxt[0]], g[1] + beta[t + 1, nxt[1]])
        beta[t] = b - b.max()

    # Edge metrics alpha[t, s] + gamma[t, b, s] + beta[t+1, nxt[b, s]].
    metric = alpha[:-1, None, :] + gamma + beta[1:][:, nxt]

    def _edge_lse(values, mask):
        masked = np.where(mask, values, neg_inf)
        flat = masked.reshape(values.shape[0], -1)
        if max_log:
            return flat.max(axis=1)
        return np.logaddexp.reduce(flat, axis=1)

    posterior_coded = np.empty((t_total, n))
    for j in range(n):
        one = out[None, :, :, j] == 1
        posterior_coded[:, j] = _edge_lse(metric, one) - _edge_lse(metric, ~one)
    posterior_coded = posterior_coded.reshape(-1)

    if max_log:
        _red = lambda x: x.max(axis=-1)  # noqa: E731
    else:
        _red = lambda x: np.logaddexp.reduce(x, axis=-1)  # noqa: E731
    posterior_message = _red(metric[:t_msg, 1]) - _red(metric[:t_msg, 0])

    extrinsic = posterior_coded - llr
    if return_posterior_coded:
        return extrinsic, posterior_message, posterior_coded
    return extrinsic, posterior_message
