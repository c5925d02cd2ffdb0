"""Hard-decision detectors for the multiuser MIMO uplink.

Implemented detectors, all returning a :class:`DetectionResult`:

* :func:`mmse_lin_detect` -- linear MMSE filtering per user.
* :func:`sic_detect` -- ordered successive interference cancellation with
  per-layer MMSE filters.
* :func:`mf_sic_detect` -- SIC with a shadow-area reliability check; an
  unreliable layer decision is replaced by the best of the ``m`` nearest
  constellation candidates, each scored by completing the remaining layers
  and evaluating the full residual.
* :func:`mb_mf_sic_detect` -- the multi-branch variant: the same recursion
  under several detection-order permutations, keeping the branch of
  minimal residual.
* :func:`ml_detect` / :func:`sphere_decode` -- exhaustive and tree-search
  maximum likelihood.

Every detector carries a deterministic complex-multiplication count in its
result, computed with the convention documented in :mod:`mfsic.bench`.
Detectors are pure functions of their arguments; nothing here touches
shared state, so trial-level parallelism is safe.
"""

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .airlink import quantize
from .numerics import hermitian_solve, sq_norm

__all__ = [
    "DetectorConfig",
    "OrderingPattern",
    "DetectionResult",
    "order_by_snr",
    "mmse_weight",
    "mmse_lin_detect",
    "sic_detect",
    "sac_check",
    "mf_candidates",
    "mf_sic_detect",
    "mb_mf_sic_detect",
    "fsb_patterns",
    "ml_detect",
    "sphere_decode",
]

ORDERINGS = ("descending-column-norm", "none")


@dataclass(frozen=True)
class OrderingPattern:
    """A detection-order permutation: ``perm[i]`` is detected at step ``i``."""

    perm: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"not a permutation of 0..{len(self.perm) - 1}: {self.perm}")

    def apply_columns(self, h):
        """Reorder channel columns into detection order."""
        return h[:, list(self.perm)]

    def restore(self, values):
        """Scatter detection-order values back to original stream order."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[list(self.perm)] = values
        return out

    def compose(self, inner):
        """Pattern applying `inner` first, then this pattern on the result."""
        return OrderingPattern(tuple(inner.perm[p] for p in self.perm))


@dataclass(frozen=True)
class DetectorConfig:
    """Knobs shared by the feedback detectors.

    d_th : shadow-area radius; a filter output farther than this from its
        nearest constellation point counts as unreliable.
    m : number of candidate constellation points tried on an unreliable
        layer (1..C).
    patterns : detection-order permutations for multi-branch processing,
        interpreted relative to the SNR-sorted order when `ordering`
        requests sorting.
    sd_radius_scale : initial sphere radius is
        ``sd_radius_scale * sigma_v2 * n_rx`` (squared); the search doubles
        it until a point is found, so it only affects speed.
    ordering : "descending-column-norm" or "none".
    m_schedule : optional ((min_eb_n0_db, m), ...) pairs; when set,
        :meth:`m_at` picks the entry with the largest threshold not above
        the operating point, trading candidates for speed at high SNR.
    """

    d_th: float = 0.5
    m: int = 4
    patterns: tuple[OrderingPattern, ...] | None = None
    sd_radius_scale: float = 2.0
    ordering: str = "descending-column-norm"
    m_schedule: tuple[tuple[float, int], ...] | None = None

    def __post_init__(self):
        if self.d_th < 0:
            raise ValueError("d_th must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")

    def m_at(self, eb_n0_db):
        """Candidate count at an operating Eb/N0, honoring `m_schedule`."""
        if not self.m_schedule:
            return self.m
        best = None
        for threshold, m in sorted(self.m_schedule):
            if eb_n0_db >= threshold:
                best = m
        return self.m if best is None else best


@dataclass
class DetectionResult:
    """Outcome of one detected vector.

    `symbols` and `soft_outputs` are in original stream order;
    `sac_triggers` is per detection layer (all False for detectors without
    a reliability check).  `complex_mults` follows the counting convention
    documented in :mod:`mfsic.bench`.
    """

    symbols: np.ndarray
    soft_outputs: np.ndarray
    residual_metric: float
    sac_triggers: np.ndarray
    complex_mults: float


def order_by_snr(h):
    """Detection order by descending column energy; ties keep stream order."""
    h = np.asarray(h)
    if h.size == 0:
        raise ValueError("empty channel matrix")
    norms = np.sum(np.abs(h) ** 2, axis=0)
    order = np.argsort(-norms, kind="stable")
    return OrderingPattern(tuple(int(i) for i in order))


def mmse_weight(h_bar_k, h_k, sigma_v2):
    """MMSE filter ``(h_bar h_bar^H + sigma_v2 I)^-1 h_k`` for one stream.

    `h_bar_k` holds the channel columns of all not-yet-cancelled streams
    (stream k included); `sigma_v2` must be positive for the solve to be
    well posed.
    """
    h_bar_k = np.asarray(h_bar_k)
    a = h_bar_k @ h_bar_k.conj().T
    a.flat[:: a.shape[0] + 1] += sigma_v2
    return hermitian_solve(a, np.asarray(h_k))


def sac_check(u, c, d_th):
    """Shadow-area reliability check for one filter output.

    Returns ``(reliable, nearest_point)``: the decision is reliable iff the
    distance to the nearest constellation point is within `d_th`.
    """
    if d_th < 0:
        raise ValueError("d_th must be >= 0")
    nearest = quantize(u, c)
    return bool(abs(u - nearest) <= d_th), nearest


def mf_candidates(u, c, m):
    """The `m` constellation points nearest to `u`, nearest first.

    Distance ties are broken toward the lower point index.
    """
    if not 1 <= m <= c.size:
        raise ValueError(f"m must be in 1..{c.size}")
    d = np.abs(u - c.points)
    idx = np.argsort(d, kind="stable")[:m]
    return c.points[idx]


# -- filter bank -----------------------------------------------------------

def _layer_filters(h, sigma_v2):
    """Per-layer MMSE filters over the remaining columns, plus their cost.

    Filters are computed once per detected vector and shared by every
    candidate completion; this is what keeps the multi-feedback search at
    SIC-like complexity.
    """
    n_rx, k_users = h.shape
    w = np.empty((k_users, n_rx), dtype=complex)
    mults = 0.0
    for k in range(k_users):
        tail = h[:, k:]
        a = tail @ tail.conj().T
        a.flat[:: n_rx + 1] += sigma_v2
        w[k] = hermitian_solve(a, h[:, k])
        mults += n_rx * n_rx * (k_users - k) + n_rx**3 / 3.0 + n_rx**2
    return w, mults


def _mf_sic_ordered(r, h, sigma_v2, c, d_th, m, trace=None):
    """One multi-feedback SIC pass on an already column-ordered channel.

    Returns ``(symbols, soft, triggers, residual, mults)`` in detection
    order.  With ``d_th = inf`` (or ``m = 1``) the candidate machinery is
    inert and this is plain ordered SIC.
    """
    n_rx, k_users = h.shape
    points = c.points
    n_points = points.size
    w, mults = _layer_filters(h, sigma_v2)

    s_hat = np.empty(k_users, dtype=complex)
    soft = np.empty(k_users, dtype=complex)
    triggers = np.zeros(k_users, dtype=bool)
    r_res = np.array(r, dtype=complex)

    for k in range(k_users):
        u = np.vdot(w[k], r_res)
        mults += n_rx
        soft[k] = u
        d = np.abs(u - points)
        mults += n_points
        nearest = int(np.argmin(d))
        if d[nearest] <= d_th:
            s_hat[k] = points[nearest]
        else:
            triggers[k] = True
            cand_idx = np.argsort(d, kind="stable")[:m]
            best_metric = np.inf
            best_point = points[cand_idx[0]]
            cand_metrics = []
            for ci in cand_idx:
                cm = points[ci]
                rr = r_res - h[:, k] * cm
                mults += n_rx
                # Complete the remaining layers by plain SIC under this
                # candidate, reusing the precomputed filters.
                for q in range(k + 1, k_users):
                    uq = np.vdot(w[q], rr)
                    bq = points[int(np.argmin(np.abs(uq - points)))]
                    rr = rr - h[:, q] * bq
                    mults += 2 * n_rx + n_points
                metric = sq_norm(rr)  # equals ||r - H b||^2 for this candidate
                mults += n_rx
                cand_metrics.append(metric)
                if metric < best_metric:
                    best_metric = metric
                    best_point = cm
            if trace is not None:
                trace.append((k, np.asarray(cand_metrics)))
            s_hat[k] = best_point
        r_res = r_res - h[:, k] * s_hat[k]
        mults += n_rx

    residual = sq_norm(r_res)
    mults += n_rx
    return s_hat, soft, triggers, residual, mults


def _detection_order(h, ordering):
    if ordering == "descending-column-norm":
        return order_by_snr(h)
    return OrderingPattern(tuple(range(h.shape[1])))


def _check_dims(r, h):
    r = np.asarray(r)
    h = np.asarray(h)
    if r.shape[0] != h.shape[0]:
        raise ValueError(f"received vector length {r.shape[0]} != rows of H {h.shape[0]}")
    return r, h


def mmse_lin_detect(r, h, sigma_v2, c):
    """Linear MMSE detection: one filter per stream over the full channel."""
    r, h = _check_dims(r, h)
    n_rx, k_users = h.shape
    a = h @ h.conj().T
    a.flat[:: n_rx + 1] += sigma_v2
    w = hermitian_solve(a, h)  # columns are the per-stream filters
    u = w.conj().T @ r
    mults = n_rx * n_rx * k_users + n_rx**3 / 3.0 + k_users * n_rx**2 + k_users * n_rx
    symbols = quantize(u, c)
    mults += k_users * c.size
    residual = sq_norm(r - h @ symbols)
    mults += n_rx * k_users + n_rx
    return DetectionResult(
        symbols=symbols,
        soft_outputs=u,
        residual_metric=residual,
        sac_triggers=np.zeros(k_users, dtype=bool),
        complex_mults=mults,
    )


def sic_detect(r, h, sigma_v2, c, ordering="descending-column-norm"):
    """Ordered SIC: detect, subtract, repeat, then restore stream order."""
    r, h = _check_dims(r, h)
    pattern = _detection_order(h, ordering)
    s_hat, soft, triggers, residual, mults = _mf_sic_ordered(
        r, pattern.apply_columns(h), sigma_v2, c, d_th=np.inf, m=1
    )
    return DetectionResult(
        symbols=pattern.restore(s_hat),
        soft_outputs=pattern.restore(soft),
        residual_metric=residual,
        sac_triggers=triggers,
        complex_mults=mults,
    )


def mf_sic_detect(r, h, sigma_v2, c, cfg, trace=None):
    """SIC with shadow-area checks and multi-feedback candidate selection.

    On a layer whose filter output falls in the shadow area, the ``cfg.m``
    nearest constellation points are each completed to a full candidate
    vector (remaining layers by plain SIC with the precomputed filters) and
    the candidate with the smallest residual ``||r - H b||^2`` replaces the
    unreliable decision.  `soft_outputs` always records the original filter
    outputs, not the replacements.

    `trace`, when a list, receives ``(layer, candidate_metrics)`` per
    triggered layer; it exists for instrumentation and tests.
    """
    r, h = _check_dims(r, h)
    pattern = _detection_order(h, cfg.ordering)
    s_hat, soft, triggers, residual, mults = _mf_sic_ordered(
        r, pattern.apply_columns(h), sigma_v2, c, d_th=cfg.d_th, m=cfg.m, trace=trace
    )
    return DetectionResult(
        symbols=pattern.restore(s_hat),
        soft_outputs=pattern.restore(soft),
        residual_metric=residual,
        sac_triggers=triggers,
        complex_mults=mults,
    )


def mb_mf_sic_detect(r, h, sigma_v2, c, cfg, trace=None):
    """Multi-branch multi-feedback SIC.

    Runs the :func:`mf_sic_detect` recursion once per detection-order
    pattern in ``cfg.patterns`` (each composed with the SNR ordering when
    enabled) and keeps the branch with the minimal residual; ties go to the
    earlier branch.  `trace`, when a list, receives the per-branch
    residuals.
    """
    r, h = _check_dims(r, h)
    if not cfg.patterns:
        raise ValueError("multi-branch detection needs a non-empty cfg.patterns")
    base = _detection_order(h, cfg.ordering)
    best = None
    best_pattern = None
    total_mults = 0.0
    branch_metrics = []
    for pat in cfg.patterns:
        full = pat.compose(base)
        out = _mf_sic_ordered(
            r, full.apply_columns(h), sigma_v2, c, d_th=cfg.d_th, m=cfg.m
        )
        total_mults += out[4]
        branch_metrics.append(out[3])
        if best is None or out[3] < best[3]:
            best = out
            best_pattern = full
    if trace is not None:
        trace.extend(branch_metrics)
    s_hat, soft, triggers, residual, _ = best
    return DetectionResult(
        symbols=best_pattern.restore(s_hat),
        soft_outputs=best_pattern.restore(soft),
        residual_metric=residual,
        sac_triggers=triggers,
        complex_mults=total_mults,
    )


def _reverse_lex_permutations(k):
    """All permutations of 0..k-1 in reverse-lexicographic order."""
    return itertools.permutations(range(k - 1, -1, -1))


# Codebook rows for k = 4: positions (1-based) in the reverse-lexicographic
# enumeration of all 4! detection orders that capture most of the
# full-enumeration gain.
_FSB_INDEX = {2: (1, 2), 4: (1, 2, 3, 5)}


def _rank_to_order(perm):
    """Convert a weakest-anchored rank row to a strongest-first pattern.

    The published codebook rows enumerate permutations of ranks counted
    from the weakest stream, so the leading row ``(k, k-1, ..., 1)`` is the
    plain strongest-first detection order; in the canonical frame (0 = the
    strongest stream of the SNR-sorted base) that row becomes
    ``(0, 1, ..., k-1)``.
    """
    k = len(perm)
    return tuple(k - 1 - p for p in perm)


def fsb_patterns(k_users, n_branches):
    """Detection-order codebook for multi-branch processing.

    For ``k_users == 4`` with 2 or 4 branches this is the frequently
    selected branch codebook: rows 1,2 (resp. 1,2,3,5) of the
    reverse-lexicographic enumeration of all rank rows, whose first entry
    is the canonical strongest-first order.  Otherwise the first
    `n_branches` cyclic shifts of the base order are used when they
    suffice, falling back to the leading reverse-lexicographic rows (which
    yields every permutation exactly once at ``n_branches == k!``).

    Patterns are relative: the detectors compose them with the SNR
    ordering.
    """
    if n_branches < 1 or n_branches > math.factorial(k_users):
        raise ValueError(f"n_branches must be in 1..{k_users}!")
    if k_users == 4 and n_branches in _FSB_INDEX:
        wanted = set(_FSB_INDEX[n_branches])
        perms = [
            _rank_to_order(p)
            for i, p in enumerate(_reverse_lex_permutations(k_users), start=1)
            if i in wanted
        ]
    elif n_branches <= k_users:
        perms = [
            tuple((i + shift) % k_users for i in range(k_users))
            for shift in range(n_branches)
        ]
    else:
        perms = [
            _rank_to_order(p)
            for p in itertools.islice(_reverse_lex_permutations(k_users), n_branches)
        ]
    return tuple(OrderingPattern(p) for p in perms)


@lru_cache(maxsize=32)
def _candidate_table(points_key, k_users):
    points = np.array(points_key)
    table = np.array(list(itertools.product(points, repeat=k_users)))
    return table.reshape(-1, k_users)


ML_CAP = 2**20


def ml_detect(r, h, c, cap=ML_CAP):
    """Exhaustive maximum-likelihood search over all ``C^K`` symbol vectors.

    Ties are broken toward the lexicographically first candidate (by point
    index).  Refuses with a ValueError when ``C^K`` exceeds `cap`.
    """
    r, h = _check_dims(r, h)
    k_users = h.shape[1]
    n_cand = c.size**k_users
    if n_cand > cap:
        raise ValueError(f"search space C^K = {n_cand} exceeds cap {cap}")
    table = _candidate_table(tuple(c.points.tolist()), k_users)
    err = r[:, None] - h @ table.T
    metrics = np.sum(np.abs(err) ** 2, axis=0)
    idx = int(np.argmin(metrics))
    n_rx = h.shape[0]
    mults = n_cand * (n_rx * k_users + n_rx)
    symbols = table[idx].copy()
    return DetectionResult(
        symbols=symbols,
        soft_outputs=symbols.copy(),
        residual_metric=float(metrics[idx]),
        sac_triggers=np.zeros(k_users, dtype=bool),
        complex_mults=mults,
    )


def sphere_decode(r, h, c, sigma_v2, cfg=DetectorConfig()):
    """Depth-first sphere search for the maximum-likelihood solution.

    The initial squared radius is ``cfg.sd_radius_scale * sigma_v2 * n_rx``
    and doubles whenever the sphere is empty, so termination does not
    depend on the scale.  Overloaded systems (``K > n_rx``) are handled by
    stacking ``sigma_v * I`` under the channel, which restores a usable
    triangular factor; for constant-modulus constellations the added
    ``sigma_v2 * ||s||^2`` term is the same for every candidate, so the
    minimizer is still the ML solution.
    """
    r, h = _check_dims(r, h)
    n_rx, k_users = h.shape
    points = c.points
    n_points = points.size
    mults = 0.0

    if k_users > n_rx:
        h_s = np.vstack([h, np.sqrt(sigma_v2) * np.eye(k_users, dtype=complex)])
        r_s = np.concatenate([r, np.zeros(k_users, dtype=complex)])
    else:
        h_s, r_s = h, r

    q, rt = np.linalg.qr(h_s)
    mults += 2.0 * h_s.shape[0] * k_users**2
    # Rotate so the triangular diagonal is real and positive.
    d = np.diagonal(rt).copy()
    d[d == 0] = 1.0
    phase = (d / np.abs(d)).conj()
    rt = phase[:, None] * rt
    y = phase * (q.conj().T @ r_s)
    mults += h_s.shape[0] * k_users

    offset = sq_norm(r_s) - sq_norm(y)  # part of the metric QR cannot reach
    mults += h_s.shape[0] + k_users

    scaled_points = rt.diagonal()[:, None] * points[None, :]
    mults += k_users * n_points

    best_symbols = None
    best_metric = np.inf
    radius = cfg.sd_radius_scale * sigma_v2 * n_rx

    chosen = np.empty(k_users, dtype=complex)

    def descend(level, partial_metric, limit):
        nonlocal best_symbols, best_metric, mults
        resid = y[level] - rt[level, level + 1 :] @ chosen[level + 1 :]
        mults += k_users - 1 - level
        inc = np.abs(resid - scaled_points[level]) ** 2
        mults += n_points
        for ci in np.argsort(inc, kind="stable"):
            metric = partial_metric + inc[ci]
            if metric > limit or metric >= best_metric:
                return  # increments are sorted; nothing further fits
            chosen[level] = points[ci]
            if level == 0:
                best_metric = metric  # strictly better than anything seen
                best_symbols = chosen.copy()
            else:
                descend(level - 1, metric, limit)

    while best_symbols is None:
        limit = radius - offset
        if limit > 0:
            descend(k_users - 1, 0.0, limit)
        radius *= 2.0

    residual = sq_norm(r - h @ best_symbols)
    mults += n_rx * k_users + n_rx
    return DetectionResult(
        symbols=best_symbols,
        soft_outputs=best_symbols.copy(),
        residual_metric=residual,
        sac_triggers=np.zeros(k_users, dtype=bool),
        complex_mults=mults,
    )
