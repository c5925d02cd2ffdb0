"""Channel realization, modulation, noise budgeting and channel estimation.

The air interface is the flat-fading multiuser uplink: ``K`` single-antenna
users transmit one symbol each per channel use, an access point with
``n_rx`` antennas observes ``r = H s + v``.  Everything random takes an
explicit seed (an int, a ``numpy.random.SeedSequence`` or a ``Generator``)
so trial workers can own independent, reproducible streams.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Constellation",
    "ChannelRealization",
    "NoiseBudget",
    "get_constellation",
    "gen_channel",
    "noise_variance",
    "transmit",
    "modulate",
    "demap_hard",
    "quantize",
    "rls_channel_estimate",
    "random_bits",
]


@dataclass(frozen=True)
class Constellation:
    """A modulation alphabet with unit average energy and bit labels.

    `points` and `labels` are index-aligned; ties in nearest-point searches
    are always broken toward the lowest index, so the ordering of `points`
    is part of the contract.
    """

    name: str
    points: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        object.__setattr__(self, "points", pts)
        if len(self.labels) != pts.size:
            raise ValueError("labels and points must have equal length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be distinct")
        c = pts.size
        if c & (c - 1) != 0:
            raise ValueError("constellation size must be a power of 2")
        energy = np.mean(np.abs(pts) ** 2)
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"constellation not unit-energy: {energy!r}")

    @property
    def size(self):
        return self.points.size

    @property
    def bits_per_symbol(self):
        return len(self.labels[0])

    @cached_property
    def label_bits(self):
        """(C, bits_per_symbol) uint8 matrix of the point labels."""
        return np.array([[int(b) for b in lab] for lab in self.labels], dtype=np.uint8)

    @cached_property
    def _value_to_index(self):
        # lookup table: integer value of a bit group -> point index
        lut = np.empty(self.size, dtype=np.intp)
        for idx, lab in enumerate(self.labels):
            lut[int(lab, 2)] = idx
        return lut


def _qpsk_points():
    return np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)


def _qam16_gray():
    # Gray-labelled PAM on each axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
    pam = {"00": -3.0, "01": -1.0, "11": 1.0, "10": 3.0}
    labels = [format(i, "04b") for i in range(16)]
    points = np.array(
        [(pam[lab[:2]] + 1j * pam[lab[2:]]) / np.sqrt(10.0) for lab in labels]
    )
    return points, tuple(labels)


def _build_constellations():
    table = {}
    # Anti-gray QPSK: adjacent points carry complementary labels where
    # possible, which is what iterative receivers want from the mapping.
    table["qpsk-antigray"] = Constellation(
        "qpsk-antigray", _qpsk_points(), ("00", "11", "01", "10")
    )
    table["qpsk-gray"] = Constellation(
        "qpsk-gray", _qpsk_points(), ("00", "01", "11", "10")
    )
    pts, labs = _qam16_gray()
    table["16qam-gray"] = Constellation("16qam-gray", pts, labs)
    return table


CONSTELLATIONS = _build_constellations()


def get_constellation(name):
    """Look up a built-in constellation by (case-insensitive) name."""
    try:
        return CONSTELLATIONS[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown constellation {name!r}; available: {sorted(CONSTELLATIONS)}"
        ) from None


@dataclass(frozen=True)
class ChannelRealization:
    """One flat-fading snapshot: gains `H` (n_rx, k_users) plus noise power."""

    H: np.ndarray
    sigma_v2: float


@dataclass(frozen=True)
class NoiseBudget:
    """Eb/N0 bookkeeping under unit per-user symbol energy."""

    eb_n0_db: float
    bits_per_symbol: int
    code_rate: float = 1.0


def _rng(seed):
    return np.random.default_rng(seed)


def gen_channel(k_users, n_rx, seed, sigma_v2=1.0):
    """Draw an i.i.d. CN(0, 1) flat-fading channel matrix.

    Parameters
    ----------
    k_users, n_rx : int
        Users (columns) and receive antennas (rows); ``k_users > n_rx``
        (an overloaded system) is allowed.
    seed : int | SeedSequence | Generator
    sigma_v2 : float
        Noise variance to carry alongside the gains.
    """
    if k_users < 1 or n_rx < 1:
        raise ValueError("k_users and n_rx must be >= 1")
    rng = _rng(seed)
    h = (rng.standard_normal((n_rx, k_users)) + 1j * rng.standard_normal((n_rx, k_users))) / np.sqrt(2.0)
    return ChannelRealization(H=h, sigma_v2=float(sigma_v2))


def noise_variance(budget):
    """Noise power for a given Eb/N0 budget (unit symbol energy)."""
    return 1.0 / (
        budget.code_rate * budget.bits_per_symbol * 10.0 ** (budget.eb_n0_db / 10.0)
    )


def transmit(s, ch, seed):
    """Pass a symbol vector through the channel and add receiver noise.

    Returns ``r = H s + v`` with `v` i.i.d. circular complex Gaussian of
    per-entry variance ``ch.sigma_v2``; deterministic in `seed`.
    """
    s = np.asarray(s)
    n_rx, k_users = ch.H.shape
    if s.shape[0] != k_users:
        raise ValueError(f"expected {k_users} symbols, got {s.shape[0]}")
    rng = _rng(seed)
    v = np.sqrt(ch.sigma_v2 / 2.0) * (
        rng.standard_normal(n_rx) + 1j * rng.standard_normal(n_rx)
    )
    return ch.H @ s + v


def modulate(bits, c):
    """Map a bit array onto constellation symbols, `bits_per_symbol` at a time."""
    bits = np.asarray(bits, dtype=np.uint8)
    j = c.bits_per_symbol
    if bits.size % j != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {j}")
    groups = bits.reshape(-1, j)
    weights = 1 << np.arange(j - 1, -1, -1)
    values = groups @ weights
    return c.points[c._value_to_index[values]]


def _nearest_index(u, c):
    """Index of the nearest constellation point (ties -> lowest index)."""
    u = np.asarray(u)
    d = np.abs(u[..., None] - c.points)
    return np.argmin(d, axis=-1)


def quantize(u, c):
    """Nearest constellation point to `u` (scalar or array)."""
    idx = _nearest_index(u, c)
    return c.points[idx]


def demap_hard(symbols, c):
    """Hard-decide symbols back to a flat bit array."""
    idx = _nearest_index(np.asarray(symbols), c)
    return c.label_bits[idx].reshape(-1)


def rls_channel_estimate(training, lam, delta=0.01):
    """Recursive least-squares channel estimate from known training pairs.

    Minimizes the exponentially-weighted cost
    ``sum_i lam**(n - i) * ||r[i] - H_hat @ s[i]||^2`` by the standard
    rank-1-update recursion with inverse-correlation initialization
    ``delta**-1 * I``.

    Parameters
    ----------
    training : sequence of (s, r) pairs
        Known transmit vectors (length `k_users`) and the corresponding
        received vectors (length `n_rx`).  At least `k_users` pairs are
        required.
    lam : float
        Forgetting factor in (0, 1].
    delta : float
        Initialization constant; smaller values weaken the implicit
        regularization (the estimate carries an O(delta) bias).

    Returns
    -------
    (n_rx, k_users) complex ndarray
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("forgetting factor must be in (0, 1]")
    if not training:
        raise ValueError("empty training set")
    k_users = np.asarray(training[0][0]).shape[0]
    if len(training) < k_users:
        raise ValueError(
            f"need at least {k_users} training pairs, got {len(training)}"
        )
    n_rx = np.asarray(training[0][1]).shape[0]
    p = np.eye(k_users, dtype=complex) / delta
    w = np.zeros((k_users, n_rx), dtype=complex)
    for s, r in training:
        s = np.asarray(s)
        r = np.asarray(r)
        pi = p @ s
        g = pi / (lam + np.vdot(s, pi))
        e = r - w.conj().T @ s
        w = w + np.outer(g, e.conj())
        p = (p - np.outer(g, s.conj() @ p)) / lam
    h_hat = w.conj().T
    if not np.all(np.isfinite(h_hat)):
        raise np.linalg.LinAlgError("RLS recursion diverged (rank-deficient training?)")
    return h_hat


def random_bits(n, seed):
    """Uniform random bits, deterministic in `seed`."""
    return _rng(seed).integers(0, 2, size=n, dtype=np.uint8)
