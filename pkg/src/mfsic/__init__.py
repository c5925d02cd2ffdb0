"""Multiuser MIMO uplink detection with multi-feedback SIC.

Subpackages by concern: :mod:`mfsic.numerics` (complex linear algebra),
:mod:`mfsic.airlink` (channel / modulation / noise), :mod:`mfsic.fec`
(convolutional coding and MAP decoding), :mod:`mfsic.detect` (hard
detectors), :mod:`mfsic.idd` (iterative soft receiver) and
:mod:`mfsic.bench` (Monte-Carlo harness, reports, CLI backing).
"""

from .airlink import (
    ChannelRealization,
    Constellation,
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
from .detect import (
    DetectionResult,
    DetectorConfig,
    OrderingPattern,
    fsb_patterns,
    mb_mf_sic_detect,
    mf_candidates,
    mf_sic_detect,
    ml_detect,
    mmse_lin_detect,
    mmse_weight,
    order_by_snr,
    sac_check,
    sic_detect,
    sphere_decode,
)
from .fec import ConvCode, Frame, Interleaver, conv_encode, deinterleave, interleave, map_decode
from .idd import (
    IddResult,
    SoftStats,
    TurboState,
    detector_extrinsic_llr,
    estimate_stats,
    idd_receive,
    sc_mmse_filter,
    soft_cancel,
    soft_symbol,
)
from .numerics import hermitian_solve, mat_vec, sq_norm

__version__ = "0.1.0"
