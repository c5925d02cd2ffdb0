"""Monte-Carlo link simulation: scenarios, stopping rules, reports.

Scenarios
---------
``uncoded-ber``
    Per channel use: draw a channel and a symbol vector, run every
    configured detector on the identical ``(H, r)`` realization, count bit
    errors after hard demapping.
``coded-idd``
    Per frame: encode/interleave/modulate one block per user, run the
    iterative receivers, count message-bit errors per turbo iteration.
``sac-stats``
    Uncoded sweep reporting how often the shadow-area check fires per
    detection layer.
``complexity``
    Uncoded sweep reporting mean complex multiplications per detected
    vector.

Complex-multiplication counting convention (used by every detector):
one complex multiply is one unit; an inner product of length ``n`` costs
``n``; a Gram matrix of an ``m x j`` block costs ``m*m*j``; a Hermitian
solve of size ``n`` costs ``n**3/3 + n**2`` (factorization plus
substitutions); a nearest-point search over ``C`` points costs ``C``; a QR
factorization of an ``m x n`` matrix costs ``2*m*n**2``.

Reproducibility: every trial derives its random streams from
``(master_seed, cell index, trial index)``, trials are merged in a fixed
order, and stopping decisions happen at fixed chunk boundaries, so reports
are byte-identical regardless of the worker-thread count.
"""

import json
import math
import re
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .airlink import (
    NoiseBudget,
    gen_channel,
    get_constellation,
    modulate,
    demap_hard,
    noise_variance,
    random_bits,
    rls_channel_estimate,
    transmit,
)
from .detect import (
    DetectorConfig,
    fsb_patterns,
    mb_mf_sic_detect,
    mf_sic_detect,
    ml_detect,
    mmse_lin_detect,
    sic_detect,
    sphere_decode,
)
from .fec import ConvCode, Interleaver, conv_encode, interleave
from .idd import idd_receive

__all__ = [
    "SimConfig",
    "DetectorSpec",
    "SimReport",
    "CellResult",
    "ConfigError",
    "parse_config_text",
    "parse_config_file",
    "validate_config",
    "run_uncoded",
    "run_coded",
    "run_sac_stats",
    "count_complexity",
    "run_scenario",
    "emit_report",
    "parse_report_csv",
]

SCENARIOS = ("uncoded-ber", "coded-idd", "sac-stats", "complexity")
UNCODED_DETECTORS = ("mmse", "sic", "mf-sic", "mb-mf-sic", "ml", "sd")
CODED_RECEIVERS = ("sc", "sic-sc", "mf-sic-sc", "mb-mf-sic-sc")
_FIRST_ITER = {"sc": "sc", "sic-sc": "sic", "mf-sic-sc": "mf-sic", "mb-mf-sic-sc": "mb-mf-sic"}

CHUNK_TRIALS = 256
CHUNK_FRAMES = 8


class ConfigError(ValueError):
    """Configuration rejected; `fields` lists the offending keys."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


@dataclass(frozen=True)
class DetectorSpec:
    """One detector (or coded receiver) entry of a simulation config."""

    name: str
    cfg: DetectorConfig = DetectorConfig()
    n_branches: int = 4

    @property
    def label(self):
        return self.name


@dataclass
class SimConfig:
    scenario: str = "uncoded-ber"
    k: int = 4
    n_r: int = 4
    constellation: str = "qpsk-antigray"
    eb_n0_db: tuple = (12.0,)
    detectors: tuple = (DetectorSpec("mmse"), DetectorSpec("sic"))
    min_bit_errors: int = 100
    max_symbols: int = 200_000
    master_seed: int = 0
    n_iters: int = 4
    message_bits: int = 497
    channel_estimation: str = "perfect"
    rls_lambda: float = 0.998
    rls_n_train: int = 40
    per_symbol_fading: bool = False


@dataclass
class CellResult:
    """One (detector, Eb/N0, iteration) cell of a report."""

    detector: str
    eb_n0_db: float
    iteration: int
    bits: int
    errors: int
    ber: float
    ci_low: float
    ci_high: float
    cmults: float | None
    sac_rate: float | None


@dataclass
class SimReport:
    cells: list
    config: SimConfig
    master_seed: int
    wall_time_s: float
    sac_layer_rates: dict = field(default_factory=dict)
    per_trial_errors: dict = field(default_factory=dict)


def _normal_ci(errors, bits):
    """95% normal-approximation interval with a one-error continuity floor."""
    if bits == 0:
        return 0.0, 0.0
    p = errors / bits
    p_floor = max(errors, 1) / bits
    half = 1.96 * math.sqrt(p_floor * (1.0 - p_floor) / bits)
    return max(p - half, 0.0), min(p + half, 1.0)


# -- configuration parsing ---------------------------------------------------

def _split_top_level(text):
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


_DETECTOR_RE = re.compile(r"^([a-z0-9-]+)\s*(?:\((.*)\))?$")


def _parse_detector_entry(entry, defaults):
    m = _DETECTOR_RE.match(entry.strip().lower())
    if not m:
        raise ConfigError([f"detectors: cannot parse entry {entry!r}"])
    name, args = m.group(1), m.group(2)
    params = dict(defaults)
    if args:
        for kv in _split_top_level(args):
            if not kv:
                continue
            if "=" not in kv:
                raise ConfigError([f"detectors: bad argument {kv!r} in {entry!r}"])
            key, val = (s.strip() for s in kv.split("=", 1))
            params[key] = val
    cfg = DetectorConfig(
        d_th=float(params.get("d_th", 0.5)),
        m=int(params.get("m", 4)),
        sd_radius_scale=float(params.get("sd_radius_scale", 2.0)),
        ordering=params.get("ordering", "descending-column-norm"),
    )
    return DetectorSpec(name=name, cfg=cfg, n_branches=int(params.get("l", 4)))


def parse_config_text(text):
    """Parse the flat ``key = value`` config format into a SimConfig."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"line {lineno}: expected key = value, got {line!r}"])
        key, val = (s.strip() for s in line.split("=", 1))
        raw[key.lower()] = val

    cfg = SimConfig()
    detector_defaults = {}
    for key in ("d_th", "m", "l", "sd_radius_scale", "ordering"):
        if key in raw:
            detector_defaults[key] = raw.pop(key)

    simple = {
        "scenario": str,
        "constellation": str,
        "channel_estimation": str,
        "k": int,
        "n_r": int,
        "min_bit_errors": int,
        "max_symbols": int,
        "master_seed": int,
        "n_iters": int,
        "message_bits": int,
        "rls_lambda": float,
        "rls_n_train": int,
    }
    problems = []
    for key, conv in simple.items():
        if key in raw:
            try:
                setattr(cfg, key, conv(raw.pop(key)))
            except ValueError:
                problems.append(f"{key}: not a valid {conv.__name__}")
    if "per_symbol_fading" in raw:
        cfg.per_symbol_fading = raw.pop("per_symbol_fading").lower() in ("1", "true", "yes")
    if "eb_n0_db" in raw:
        try:
            cfg.eb_n0_db = tuple(float(x) for x in _split_top_level(raw.pop("eb_n0_db")))
        except ValueError:
            problems.append("eb_n0_db: expected a comma-separated list of numbers")
    if "detectors" in raw:
        entries = _split_top_level(raw.pop("detectors"))
        cfg.detectors = tuple(_parse_detector_entry(e, detector_defaults) for e in entries)
    if raw:
        problems.extend(f"unknown key {k!r}" for k in sorted(raw))
    if problems:
        raise ConfigError(problems)

    # channel_estimation may carry rls parameters inline: rls(lambda=.., n_train=..)
    ce = cfg.channel_estimation.strip().lower()
    m = re.match(r"^rls\s*\((.*)\)$", ce)
    if m:
        cfg.channel_estimation = "rls"
        for kv in _split_top_level(m.group(1)):
            if not kv:
                continue
            key, val = (s.strip() for s in kv.split("=", 1))
            if key in ("lambda", "lam"):
                cfg.rls_lambda = float(val)
            elif key == "n_train":
                cfg.rls_n_train = int(val)
            else:
                raise ConfigError([f"channel_estimation: unknown rls argument {key!r}"])
    return cfg


def parse_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def validate_config(cfg):
    """Raise ConfigError listing every offending field."""
    problems = []
    if cfg.scenario not in SCENARIOS:
        problems.append(f"scenario: {cfg.scenario!r} not in {SCENARIOS}")
    if cfg.k < 1:
        problems.append("k: must be >= 1")
    if cfg.n_r < 1:
        problems.append("n_r: must be >= 1")
    try:
        get_constellation(cfg.constellation)
    except ValueError:
        problems.append(f"constellation: unknown {cfg.constellation!r}")
    if not cfg.eb_n0_db:
        problems.append("eb_n0_db: empty sweep list")
    if not cfg.detectors:
        problems.append("detectors: empty list")
    if cfg.min_bit_errors < 1:
        problems.append("min_bit_errors: must be >= 1")
    if cfg.max_symbols < 1:
        problems.append("max_symbols: must be >= 1")
    if cfg.n_iters < 1:
        problems.append("n_iters: must be >= 1")
    allowed = CODED_RECEIVERS if cfg.scenario == "coded-idd" else UNCODED_DETECTORS
    for spec in cfg.detectors:
        if spec.name not in allowed:
            problems.append(f"detectors: {spec.name!r} not valid for scenario {cfg.scenario}")
    if cfg.scenario == "sac-stats":
        if any(spec.name != "mf-sic" for spec in cfg.detectors):
            problems.append("detectors: sac-stats requires mf-sic entries only")
    if cfg.channel_estimation not in ("perfect", "rls"):
        problems.append(f"channel_estimation: {cfg.channel_estimation!r}")
    if cfg.channel_estimation == "rls" and cfg.per_symbol_fading:
        problems.append("channel_estimation: rls is incompatible with per_symbol_fading")
    if not 0.0 < cfg.rls_lambda <= 1.0:
        problems.append("rls_lambda: must be in (0, 1]")
    if cfg.rls_n_train < cfg.k:
        problems.append("rls_n_train: need at least k training vectors")
    if problems:
        raise ConfigError(problems)
    return cfg


# -- vector-level engine (uncoded-ber, sac-stats, complexity) ----------------

def _resolve_spec(spec, k_users, eb_n0_db):
    """Fill in runtime detector parameters (schedule, branch patterns)."""
    cfg = spec.cfg
    m_eff = cfg.m_at(eb_n0_db)
    if m_eff != cfg.m:
        cfg = replace(cfg, m=m_eff)
    if spec.name == "mb-mf-sic" and not cfg.patterns:
        cfg = replace(cfg, patterns=fsb_patterns(k_users, spec.n_branches))
    return replace(spec, cfg=cfg)


def _run_detector(spec, r, h, sigma_v2, c):
    if spec.name == "mmse":
        return mmse_lin_detect(r, h, sigma_v2, c)
    if spec.name == "sic":
        return sic_detect(r, h, sigma_v2, c, spec.cfg.ordering)
    if spec.name == "mf-sic":
        return mf_sic_detect(r, h, sigma_v2, c, spec.cfg)
    if spec.name == "mb-mf-sic":
        return mb_mf_sic_detect(r, h, sigma_v2, c, spec.cfg)
    if spec.name == "ml":
        return ml_detect(r, h, c)
    if spec.name == "sd":
        return sphere_decode(r, h, c, sigma_v2, spec.cfg)
    raise ValueError(f"unknown detector {spec.name!r}")


def _vector_trials(trials, master_seed, cell_idx, cfg, sigma_v2, c, specs):
    """Run a batch of paired trials; returns per-detector per-trial arrays."""
    k, n_rx = cfg.k, cfg.n_r
    n_det = len(specs)
    errors = np.zeros((n_det, len(trials)), dtype=np.int64)
    mults = np.zeros((n_det, len(trials)))
    triggers = np.zeros((n_det, k), dtype=np.int64)
    for col, trial in enumerate(trials):
        ss = np.random.SeedSequence(entropy=(master_seed, cell_idx, trial))
        bits_seed, ch_seed, noise_seed = ss.spawn(3)
        bits = random_bits(k * c.bits_per_symbol, bits_seed)
        s = modulate(bits, c)
        ch = gen_channel(k, n_rx, ch_seed, sigma_v2)
        r = transmit(s, ch, noise_seed)
        for d, spec in enumerate(specs):
            res = _run_detector(spec, r, ch.H, sigma_v2, c)
            errors[d, col] = int(np.sum(demap_hard(res.symbols, c) != bits))
            mults[d, col] = res.complex_mults
            trig = res.sac_triggers
            if trig.size == k:
                triggers[d] += trig
    return errors, mults, triggers


def _parallel_batches(worker, indices, threads):
    """Split `indices` into `threads` contiguous slices, then re-join in order."""
    if threads <= 1 or len(indices) < 2:
        return [worker(indices)]
    per = math.ceil(len(indices) / threads)
    slices = [indices[i : i + per] for i in range(0, len(indices), per)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, slices))


def _run_vector_scenario(cfg, threads=1, collect_per_trial=False):
    c = get_constellation(cfg.constellation)
    j = c.bits_per_symbol
    max_trials = math.ceil(cfg.max_symbols / cfg.k)
    cells = []
    layer_rates = {}
    per_trial = {}
    t0 = time.perf_counter()
    for cell_idx, db in enumerate(cfg.eb_n0_db):
        sigma_v2 = noise_variance(NoiseBudget(db, j, 1.0))
        specs = [_resolve_spec(s, cfg.k, db) for s in cfg.detectors]
        n_det = len(specs)
        tot_err = np.zeros(n_det, dtype=np.int64)
        tot_mults = np.zeros(n_det)
        tot_trig = np.zeros((n_det, cfg.k), dtype=np.int64)
        trials_done = np.zeros(n_det, dtype=np.int64)
        err_series = [[] for _ in range(n_det)]
        active = list(range(n_det))
        next_trial = 0
        while active and next_trial < max_trials:
            chunk = list(range(next_trial, min(next_trial + CHUNK_TRIALS, max_trials)))
            next_trial = chunk[-1] + 1
            live_specs = [specs[d] for d in active]

            def worker(idx_slice, _specs=live_specs):
                return _vector_trials(
                    idx_slice, cfg.master_seed, cell_idx, cfg, sigma_v2, c, _specs
                )

            batches = _parallel_batches(worker, chunk, threads)
            err = np.concatenate([b[0] for b in batches], axis=1)
            mul = np.concatenate([b[1] for b in batches], axis=1)
            trg = sum(b[2] for b in batches)
            for row, d in enumerate(active):
                tot_err[d] += int(err[row].sum())
                tot_mults[d] += float(mul[row].sum())
                tot_trig[d] += trg[row]
                trials_done[d] += len(chunk)
                if collect_per_trial:
                    err_series[d].append(err[row])
            active = [d for d in active if tot_err[d] < cfg.min_bit_errors]
        for d, spec in enumerate(specs):
            bits = int(trials_done[d]) * cfg.k * j
            lo, hi = _normal_ci(int(tot_err[d]), bits)
            n_vec = int(trials_done[d])
            layer = tot_trig[d] / n_vec if n_vec else np.zeros(cfg.k)
            has_sac = spec.name in ("mf-sic", "mb-mf-sic")
            cells.append(
                CellResult(
                    detector=spec.label,
                    eb_n0_db=db,
                    iteration=1,
                    bits=bits,
                    errors=int(tot_err[d]),
                    ber=tot_err[d] / bits if bits else 0.0,
                    ci_low=lo,
                    ci_high=hi,
                    cmults=tot_mults[d] / n_vec if n_vec else None,
                    sac_rate=float(layer.mean()) if has_sac else None,
                )
            )
            if has_sac:
                layer_rates[(spec.label, db)] = layer.tolist()
            if collect_per_trial:
                per_trial[(spec.label, db)] = (
                    np.concatenate(err_series[d]) if err_series[d] else np.empty(0, dtype=np.int64)
                )
    return SimReport(
        cells=cells,
        config=cfg,
        master_seed=cfg.master_seed,
        wall_time_s=time.perf_counter() - t0,
        sac_layer_rates={f"{k[0]}@{k[1]:g}dB": v for k, v in layer_rates.items()},
        per_trial_errors=per_trial,
    )


def run_uncoded(cfg, threads=1, collect_per_trial=False):
    """Uncoded BER sweep; every detector sees identical paired realizations."""
    if cfg.scenario != "uncoded-ber":
        raise ConfigError(["scenario: run_uncoded needs scenario = uncoded-ber"])
    validate_config(cfg)
    return _run_vector_scenario(cfg, threads, collect_per_trial)


def run_sac_stats(cfg, threads=1):
    """Shadow-area trigger statistics per detection layer."""
    if cfg.scenario != "sac-stats":
        raise ConfigError(["scenario: run_sac_stats needs scenario = sac-stats"])
    validate_config(cfg)
    return _run_vector_scenario(cfg, threads)


def count_complexity(cfg, threads=1):
    """Mean complex multiplications per detected vector."""
    if cfg.scenario != "complexity":
        raise ConfigError(["scenario: count_complexity needs scenario = complexity"])
    validate_config(cfg)
    return _run_vector_scenario(cfg, threads)


# -- coded engine -------------------------------------------------------------

def _coded_frame(trial, master_seed, cell_idx, cfg, sigma_v2, c, code, ils, specs):
    """One frame through every configured receiver (paired)."""
    k, n_rx = cfg.k, cfg.n_r
    j = c.bits_per_symbol
    n_msg = cfg.message_bits
    n_sym = (n_msg + code.tail_bits) * code.n_out // j
    ss = np.random.SeedSequence(entropy=(master_seed, cell_idx, trial))
    bits_seed, ch_seed, noise_seed, pilot_seed, pilot_noise_seed = ss.spawn(5)

    messages = random_bits(k * n_msg, bits_seed).reshape(k, n_msg)
    symbols = np.empty((k, n_sym), dtype=complex)
    for u in range(k):
        coded = conv_encode(messages[u], code)
        symbols[u] = modulate(interleave(coded, ils[u]), c)

    rng_noise = np.random.default_rng(noise_seed)
    if cfg.per_symbol_fading:
        rng_ch = np.random.default_rng(ch_seed)
        h = (rng_ch.standard_normal((n_sym, n_rx, k)) + 1j * rng_ch.standard_normal((n_sym, n_rx, k))) / np.sqrt(2.0)
        clean = np.einsum("irk,ki->ir", h, symbols)
    else:
        h = gen_channel(k, n_rx, ch_seed, sigma_v2).H
        clean = symbols.T @ h.T
    noise = np.sqrt(sigma_v2 / 2.0) * (
        rng_noise.standard_normal((n_sym, n_rx)) + 1j * rng_noise.standard_normal((n_sym, n_rx))
    )
    r_block = clean + noise

    h_rx = h
    if cfg.channel_estimation == "rls":
        qpsk = get_constellation("qpsk-antigray")
        rng_p = np.random.default_rng(pilot_seed)
        rng_pn = np.random.default_rng(pilot_noise_seed)
        pilots = qpsk.points[rng_p.integers(0, qpsk.size, size=(cfg.rls_n_train, k))]
        p_noise = np.sqrt(sigma_v2 / 2.0) * (
            rng_pn.standard_normal((cfg.rls_n_train, n_rx))
            + 1j * rng_pn.standard_normal((cfg.rls_n_train, n_rx))
        )
        r_pilots = pilots @ h.T + p_noise
        h_rx = rls_channel_estimate(list(zip(pilots, r_pilots)), cfg.rls_lambda)

    out = {}
    for spec in specs:
        res = idd_receive(
            r_block,
            h_rx,
            sigma_v2,
            c,
            code=code,
            interleavers=ils,
            det_cfg=spec.cfg,
            n_iters=cfg.n_iters,
            first_iter=_FIRST_ITER[spec.name],
            true_messages=messages,
        )
        errs = np.array(
            [int(np.sum(b != messages)) for b in res.per_iteration_bits], dtype=np.int64
        )
        out[spec.label] = (errs, res.detector_mults, res.sac_rate)
    return out


def run_coded(cfg, threads=1, collect_per_trial=False):
    """Coded IDD sweep: per-iteration message BER for every receiver."""
    if cfg.scenario != "coded-idd":
        raise ConfigError(["scenario: run_coded needs scenario = coded-idd"])
    validate_config(cfg)
    c = get_constellation(cfg.constellation)
    code = ConvCode()
    j = c.bits_per_symbol
    n_sym = (cfg.message_bits + code.tail_bits) * code.n_out // j
    n_coded = n_sym * j
    ils = [
        Interleaver.random(n_coded, np.random.SeedSequence((cfg.master_seed, 0xA11CE, u)))
        for u in range(cfg.k)
    ]
    max_frames = max(1, math.ceil(cfg.max_symbols / n_sym))
    t0 = time.perf_counter()
    cells = []
    per_trial = {}
    for cell_idx, db in enumerate(cfg.eb_n0_db):
        sigma_v2 = noise_variance(NoiseBudget(db, j, code.rate))
        specs = [_resolve_spec(s, cfg.k, db) for s in cfg.detectors]
        labels = [s.label for s in specs]
        err = {lab: np.zeros(cfg.n_iters, dtype=np.int64) for lab in labels}
        det_mults = {lab: 0.0 for lab in labels}
        sac_sum = {lab: 0.0 for lab in labels}
        sac_n = {lab: 0 for lab in labels}
        series = {lab: [] for lab in labels}
        frames = 0
        while frames < max_frames:
            chunk = list(range(frames, min(frames + CHUNK_FRAMES, max_frames)))
            frames = chunk[-1] + 1

            def worker(idx_slice):
                return [
                    _coded_frame(t, cfg.master_seed, cell_idx, cfg, sigma_v2, c, code, ils, specs)
                    for t in idx_slice
                ]

            for batch in _parallel_batches(worker, chunk, threads):
                for frame_out in batch:
                    for lab in labels:
                        e, mults, sac = frame_out[lab]
                        err[lab] += e
                        det_mults[lab] += mults
                        if sac is not None:
                            sac_sum[lab] += sac
                            sac_n[lab] += 1
                        if collect_per_trial:
                            series[lab].append(e)
            if all(err[lab][-1] >= cfg.min_bit_errors for lab in labels):
                break
        bits = frames * cfg.message_bits * cfg.k
        for spec in specs:
            lab = spec.label
            for it in range(cfg.n_iters):
                e = int(err[lab][it])
                lo, hi = _normal_ci(e, bits)
                cells.append(
                    CellResult(
                        detector=lab,
                        eb_n0_db=db,
                        iteration=it + 1,
                        bits=bits,
                        errors=e,
                        ber=e / bits,
                        ci_low=lo,
                        ci_high=hi,
                        cmults=det_mults[lab] / (frames * n_sym) if it == 0 else None,
                        sac_rate=(sac_sum[lab] / sac_n[lab]) if (it == 0 and sac_n[lab]) else None,
                    )
                )
            if collect_per_trial:
                per_trial[(lab, db)] = np.stack(series[lab]) if series[lab] else np.empty((0, cfg.n_iters))
    return SimReport(
        cells=cells,
        config=cfg,
        master_seed=cfg.master_seed,
        wall_time_s=time.perf_counter() - t0,
        per_trial_errors=per_trial,
    )


def run_scenario(cfg, threads=1):
    """Dispatch on ``cfg.scenario``."""
    runner = {
        "uncoded-ber": run_uncoded,
        "coded-idd": run_coded,
        "sac-stats": run_sac_stats,
        "complexity": count_complexity,
    }[cfg.scenario]
    return runner(cfg, threads=threads)


# -- persistence --------------------------------------------------------------

CSV_HEADER = "detector,eb_n0_db,iteration,bits,errors,ber,ci_low,ci_high,cmults,sac_rate"


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except Exception:
        return "unknown"


_PLOT_SCRIPT = """\
# Plot BER curves from report.csv (same directory).
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

curves = defaultdict(list)
with open("report.csv") as fh:
    for row in csv.DictReader(fh):
        key = (row["detector"], int(row["iteration"]))
        curves[key].append((float(row["eb_n0_db"]), float(row["ber"])))

for (det, it), pts in sorted(curves.items()):
    pts.sort()
    label = det if it == 1 else f"{det} (iter {it})"
    plt.semilogy([p[0] for p in pts], [max(p[1], 1e-12) for p in pts], marker="o", label=label)
plt.xlabel("Eb/N0 [dB]")
plt.ylabel("BER")
plt.grid(True, which="both", alpha=0.4)
plt.legend()
plt.tight_layout()
plt.savefig("ber.png", dpi=150)
print("wrote ber.png")
"""


def emit_report(report, out_dir, plot_script=False):
    """Write ``report.csv``, ``manifest.json`` and optionally a plot script.

    The CSV is byte-deterministic for a given report; the manifest echoes
    the configuration and seed needed for a bit-identical re-run.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    try:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for cell in report.cells:
                fh.write(
                    ",".join(
                        _fmt(v)
                        for v in (
                            cell.detector,
                            cell.eb_n0_db,
                            cell.iteration,
                            cell.bits,
                            cell.errors,
                            cell.ber,
                            cell.ci_low,
                            cell.ci_high,
                            cell.cmults,
                            cell.sac_rate,
                        )
                    )
                    + "\n"
                )
    except OSError as exc:
        raise OSError(f"cannot write CSV report to {csv_path}: {exc}") from exc

    manifest = {
        "config": {
            **{k: v for k, v in vars(report.config).items() if k != "detectors"},
            "detectors": [
                {
                    "name": s.name,
                    "d_th": s.cfg.d_th,
                    "m": s.cfg.m,
                    "l": s.n_branches,
                    "sd_radius_scale": s.cfg.sd_radius_scale,
                    "ordering": s.cfg.ordering,
                }
                for s in report.config.detectors
            ],
        },
        "master_seed": report.master_seed,
        "git_describe": _git_describe(),
        "wall_time_s": report.wall_time_s,
        "sac_layer_rates": report.sac_layer_rates,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    try:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest to {manifest_path}: {exc}") from exc

    paths = [csv_path, manifest_path]
    if plot_script:
        plot_path = os.path.join(out_dir, "plot_ber.py")
        with open(plot_path, "w", encoding="utf-8") as fh:
            fh.write(_PLOT_SCRIPT)
        paths.append(plot_path)
    return paths


def parse_report_csv(path):
    """Read an emitted CSV back into typed row dicts (round-trip aid)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_HEADER.split(","):
            raise ValueError(f"unexpected CSV header in {path}")
        for line in fh:
            vals = line.rstrip("\n").split(",")
            row = dict(zip(header, vals))
            row["eb_n0_db"] = float(row["eb_n0_db"])
            row["iteration"] = int(row["iteration"])
            row["bits"] = int(row["bits"])
            row["errors"] = int(row["errors"])
            for key in ("ber", "ci_low", "ci_high", "cmults", "sac_rate"):
                row[key] = float(row[key]) if row[key] else None
            rows.append(row)
    return rows
