"""Iterative (turbo) detection and decoding for the coded uplink.

The receiver alternates a soft-input soft-output detector with per-user
MAP decoders.  The first pass uses a hard feedback detector (multi-feedback
SIC by default, since the decoders have nothing useful to say yet); every
later pass performs soft parallel cancellation with a residual-covariance
MMSE filter built from the decoders' symbol beliefs.

Filter outputs are modelled as ``u = v * s + eps`` with Gaussian residual
`eps`; the pair ``(v, sigma_eps2)`` is estimated by time averages over the
packet and drives the bit-LLR computation.
"""

from dataclasses import dataclass

import numpy as np

from .airlink import quantize
from .detect import DetectorConfig, mb_mf_sic_detect, mf_sic_detect, sic_detect
from .fec import LLR_CLIP, ConvCode, deinterleave, interleave, map_decode
from .numerics import hermitian_solve

__all__ = [
    "SoftStats",
    "TurboState",
    "IddResult",
    "estimate_stats",
    "detector_extrinsic_llr",
    "soft_symbol",
    "soft_cancel",
    "sc_mmse_filter",
    "idd_receive",
    "FIRST_ITER_CHOICES",
]

SIGMA_EPS_FLOOR = 1e-6
FIRST_ITER_CHOICES = ("mf-sic", "mb-mf-sic", "sic", "sc")


@dataclass(frozen=True)
class SoftStats:
    """Gaussian model of a filter output stream: amplitude and residual power."""

    v: complex
    sigma_eps2: float


@dataclass
class TurboState:
    """State handed between turbo iterations (diagnostic surface)."""

    iteration: int
    prior_llr: np.ndarray  # (k_users, n_coded), transmission bit order
    soft_symbols: np.ndarray | None  # (k_users, n_symbols)


@dataclass
class IddResult:
    """Decoded messages plus per-iteration diagnostics."""

    message_bits: np.ndarray  # (k_users, n_message)
    per_iteration_bits: list  # one (k_users, n_message) array per iteration
    ber_per_iteration: np.ndarray | None
    detector_mults: float
    sac_rate: float | None
    final_state: TurboState


def estimate_stats(u_samples, s_refs):
    """Estimate the Gaussian output model ``u = v * s + eps`` by time averages.

    ``v = mean(conj(s) * u)`` and ``sigma_eps2 = mean(|u - v s|^2)``, with
    the variance floored at ``SIGMA_EPS_FLOOR`` so later stages never
    divide by zero once interference is fully cancelled.
    """
    u = np.asarray(u_samples)
    s = np.asarray(s_refs)
    if u.size == 0 or u.shape != s.shape:
        raise ValueError("u_samples and s_refs must be equal-length and non-empty")
    v = complex(np.mean(np.conj(s) * u))
    sigma = float(np.mean(np.abs(u - v * s) ** 2))
    return SoftStats(v=v, sigma_eps2=max(sigma, SIGMA_EPS_FLOOR))


def _log_bit_probs(priors):
    """log P(bit=1), log P(bit=0) from LLRs, stable for any magnitude."""
    priors = np.clip(priors, -LLR_CLIP, LLR_CLIP)
    lp1 = -np.logaddexp(0.0, -priors)
    lp0 = -np.logaddexp(0.0, priors)
    return lp1, lp0


def _extrinsic_llr_block(u, v, sigma_eps2, priors, c):
    """Per-bit extrinsic LLRs for a block of filter outputs.

    Parameters: `u` (n,) complex outputs, scalar model ``(v, sigma_eps2)``,
    `priors` (n, bits_per_symbol) a-priori LLRs.  Returns (n,
    bits_per_symbol) LLRs clipped to ``+/-LLR_CLIP``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    priors = np.atleast_2d(np.asarray(priors, dtype=float))
    bits = c.label_bits.astype(float)  # (C, J)
    base = -np.abs(u[:, None] - v * c.points[None, :]) ** 2 / sigma_eps2
    lp1, lp0 = _log_bit_probs(priors)
    point_prior = lp1 @ bits.T + lp0 @ (1.0 - bits).T  # (n, C)
    total = base + point_prior
    out = np.empty_like(priors)
    for j in range(bits.shape[1]):
        one = c.label_bits[:, j] == 1
        own = np.where(one[None, :], lp1[:, j, None], lp0[:, j, None])
        t = total - own  # leave the bit's own prior out of its extrinsic
        out[:, j] = np.logaddexp.reduce(t[:, one], axis=1) - np.logaddexp.reduce(
            t[:, ~one], axis=1
        )
    return np.clip(out, -LLR_CLIP, LLR_CLIP)


def detector_extrinsic_llr(u_k, stats, priors, c):
    """Extrinsic bit LLRs for a single filter output.

    `priors` holds one a-priori LLR per label bit of this symbol; the
    result leaves each bit's own prior out of its LLR and is clipped to
    ``+/-LLR_CLIP``.
    """
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (c.bits_per_symbol,):
        raise ValueError(f"expected {c.bits_per_symbol} bit priors")
    return _extrinsic_llr_block(
        np.array([u_k]), stats.v, stats.sigma_eps2, priors[None, :], c
    )[0]


def _soft_symbol_block(priors, c):
    """Prior-mean symbols for rows of per-bit LLRs: (n, J) -> (n,)."""
    priors = np.atleast_2d(np.asarray(priors, dtype=float))
    bits = c.label_bits.astype(float)
    lp1, lp0 = _log_bit_probs(priors)
    weights = np.exp(lp1 @ bits.T + lp0 @ (1.0 - bits).T)  # rows sum to 1
    return weights @ c.points


def soft_symbol(priors, c):
    """Prior-mean constellation symbol ``E[s]`` under independent bit priors."""
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (c.bits_per_symbol,):
        raise ValueError(f"expected {c.bits_per_symbol} bit priors")
    return complex(_soft_symbol_block(priors[None, :], c)[0])


def soft_cancel(r, h, z, k):
    """Subtract every other stream's soft replica: ``r - H z`` with ``z[k] = 0``."""
    r = np.asarray(r)
    h = np.asarray(h)
    z = np.asarray(z, dtype=complex)
    if r.shape[0] != h.shape[0] or z.shape[0] != h.shape[1]:
        raise ValueError("dimension mismatch between r, H and z")
    z_masked = z.copy()
    z_masked[k] = 0.0
    return r - h @ z_masked


def sc_mmse_filter(h, z, k, sigma_v2):
    """Residual-interference MMSE filter after soft cancellation.

    Minimizes the mean-square error of stream `k` under the model that
    stream `j != k` contributes residual power ``1 - |z_j|^2`` after its
    replica is removed (unit symbol energy), giving
    ``(H D H^H + sigma_v2 I)^-1 h_k`` with ``D = diag(...)`` and
    ``D[k, k] = 1``.
    """
    h = np.asarray(h)
    z = np.asarray(z, dtype=complex)
    if z.shape[0] != h.shape[1]:
        raise ValueError("z length must match the number of streams")
    d = np.clip(1.0 - np.abs(z) ** 2, 0.0, None)
    d[k] = 1.0
    a = (h * d[None, :]) @ h.conj().T
    a.flat[:: a.shape[0] + 1] += sigma_v2
    return hermitian_solve(a, h[:, k])


def _sc_mmse_block(r_block, h_block, zc, k, sigma_v2):
    """Soft cancellation + per-symbol MMSE filtering for one stream.

    `h_block` is (n_symbols, n_rx, k_users) (a broadcast view for static
    channels), `zc` is (k_users, n_symbols); returns the (n_symbols,)
    filter outputs.  The per-symbol systems are solved in one batched
    call; the math is the per-symbol :func:`sc_mmse_filter` /
    :func:`soft_cancel` pair.
    """
    n_rx = h_block.shape[1]
    z_masked = zc.copy()
    z_masked[k] = 0.0
    r_canc = r_block - np.einsum("irk,ki->ir", h_block, z_masked)
    d = np.clip(1.0 - np.abs(zc) ** 2, 0.0, None)
    d[k] = 1.0
    a = np.einsum("irk,ki,isk->irs", h_block, d, h_block.conj(), optimize=True)
    a[:, np.arange(n_rx), np.arange(n_rx)] += sigma_v2
    w = np.linalg.solve(a, h_block[:, :, k][..., None])[..., 0]  # (n_sym, n_rx)
    return np.einsum("ir,ir->i", w.conj(), r_canc)


def _first_pass_detect(r_block, h_block, sigma_v2, c, det_cfg, first_iter):
    """Hard-detector sweep over a frame; returns (u, s_hat, mults, sac_rate)."""
    n_sym = r_block.shape[0]
    k_users = h_block.shape[2]
    u = np.empty((k_users, n_sym), dtype=complex)
    s_hat = np.empty((k_users, n_sym), dtype=complex)
    mults = 0.0
    triggers = 0
    layers = 0
    if first_iter == "sc":
        zeros = np.zeros((k_users, n_sym), dtype=complex)
        for k in range(k_users):
            u[k] = _sc_mmse_block(r_block, h_block, zeros, k, sigma_v2)
            s_hat[k] = quantize(u[k], c)
        return u, s_hat, mults, None
    for i in range(n_sym):
        if first_iter == "mf-sic":
            det = mf_sic_detect(r_block[i], h_block[i], sigma_v2, c, det_cfg)
        elif first_iter == "mb-mf-sic":
            det = mb_mf_sic_detect(r_block[i], h_block[i], sigma_v2, c, det_cfg)
        else:  # "sic"
            det = sic_detect(r_block[i], h_block[i], sigma_v2, c, det_cfg.ordering)
        u[:, i] = det.soft_outputs
        s_hat[:, i] = det.symbols
        mults += det.complex_mults
        triggers += int(det.sac_triggers.sum())
        layers += det.sac_triggers.size
    sac_rate = triggers / layers if layers else None
    return u, s_hat, mults, sac_rate


def idd_receive(
    r_block,
    h,
    sigma_v2,
    c,
    code=ConvCode(),
    interleavers=None,
    det_cfg=DetectorConfig(),
    n_iters=4,
    first_iter="mf-sic",
    true_messages=None,
    cancel_source="soft-symbols",
):
    """Run the full iterative receiver on one coded frame.

    Parameters
    ----------
    r_block : (n_symbols, n_rx) complex ndarray
        Received vectors of the frame.
    h : (n_rx, k_users) or (n_symbols, n_rx, k_users) complex ndarray
        Static per-frame channel, or one realization per symbol.
    sigma_v2 : float
    c : Constellation
    code : ConvCode
    interleavers : sequence of Interleaver, one per user
    det_cfg : DetectorConfig
        Configuration of the first-pass detector.
    n_iters : int
    first_iter : {"mf-sic", "mb-mf-sic", "sic", "sc"}
        Detector used in the first pass; every later pass is soft
        cancellation + residual MMSE.
    true_messages : optional (k_users, n_message) bits
        When given, per-iteration BER diagnostics are computed.
    cancel_source : {"soft-symbols", "detector-outputs"}
        What fills the cancellation vector from the second pass on:
        decoder prior-mean symbols (default) or the previous pass's raw
        filter outputs.

    Returns
    -------
    IddResult
    """
    r_block = np.asarray(r_block)
    h = np.asarray(h)
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if first_iter not in FIRST_ITER_CHOICES:
        raise ValueError(f"first_iter must be one of {FIRST_ITER_CHOICES}")
    if cancel_source not in ("soft-symbols", "detector-outputs"):
        raise ValueError("cancel_source must be 'soft-symbols' or 'detector-outputs'")
    n_sym, n_rx = r_block.shape
    k_users = h.shape[-1]
    if h.ndim == 2:
        h_block = np.broadcast_to(h, (n_sym, n_rx, k_users))
    elif h.ndim == 3 and h.shape[0] == n_sym:
        h_block = h
    else:
        raise ValueError(f"channel shape {h.shape} does not fit the frame")
    j_bits = c.bits_per_symbol
    n_coded = n_sym * j_bits
    if n_coded % code.n_out != 0:
        raise ValueError("frame geometry does not fit the code rate")
    n_msg = n_coded // code.n_out - code.tail_bits
    if n_msg < 1:
        raise ValueError("frame too short for the termination tail")
    if interleavers is None or len(interleavers) != k_users:
        raise ValueError("need one interleaver per user")
    for il in interleavers:
        if il.size != n_coded:
            raise ValueError("interleaver size must equal the coded block length")

    prior = np.zeros((k_users, n_coded))  # detector priors, transmission order
    u = np.empty((k_users, n_sym), dtype=complex)
    z_soft = None
    per_iteration_bits = []
    ber = np.empty(n_iters) if true_messages is not None else None
    detector_mults = 0.0
    sac_rate = None

    for it in range(1, n_iters + 1):
        if it == 1:
            u, s_ref, detector_mults, sac_rate = _first_pass_detect(
                r_block, h_block, sigma_v2, c, det_cfg, first_iter
            )
        else:
            z_soft = np.stack(
                [_soft_symbol_block(prior[k].reshape(n_sym, j_bits), c) for k in range(k_users)]
            )
            zc = z_soft if cancel_source == "soft-symbols" else u.copy()
            for k in range(k_users):
                u[k] = _sc_mmse_block(r_block, h_block, zc, k, sigma_v2)
            s_ref = z_soft

        decisions = np.empty((k_users, n_msg), dtype=np.uint8)
        for k in range(k_users):
            stats = estimate_stats(u[k], s_ref[k])
            lam1 = _extrinsic_llr_block(
                u[k], stats.v, stats.sigma_eps2, prior[k].reshape(n_sym, j_bits), c
            ).reshape(-1)
            ext, post_msg = map_decode(deinterleave(lam1, interleavers[k]), code)
            decisions[k] = post_msg > 0
            prior[k] = interleave(np.clip(ext, -LLR_CLIP, LLR_CLIP), interleavers[k])
        per_iteration_bits.append(decisions)
        if ber is not None:
            ber[it - 1] = np.mean(decisions != true_messages)

    state = TurboState(iteration=n_iters, prior_llr=prior, soft_symbols=z_soft)
    return IddResult(
        message_bits=per_iteration_bits[-1],
        per_iteration_bits=per_iteration_bits,
        ber_per_iteration=ber,
        detector_mults=detector_mults,
        sac_rate=sac_rate,
        final_state=state,
    )
