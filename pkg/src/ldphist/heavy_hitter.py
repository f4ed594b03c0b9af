"""Unique-heavy-hitter recovery and the full succinct-histogram protocol.

The promise protocol aggregates randomized codewords from users that hold
a common item (idle users randomize the zero input), rounds the mean
report vector to the hypercube, and decodes.  The full protocol hashes
items into K channels, repeats with T fresh seeds so every heavy item is
isolated in some channel with high probability, decodes every channel of
interest, and keeps the decoded candidates whose frequency-oracle
estimates reach the pruning threshold.  The total privacy budget is
eps = (2T + 1) * eps_channel: changing one user's item alters its report
distribution in at most 2T hash channels plus the frequency-oracle
channel, each running at eps_channel.

Modes.  In ``faithful`` mode every user's report is sampled in every
channel and every channel is decoded, which is the protocol as a real
server would run it (the report multiset is what the transport service
receives).  In ``fast`` mode, channels with no active user are neither
materialized per user nor decoded: idle-user noise in occupied channels is
drawn from the exact multinomial of the corresponding report count, which
is distributionally identical to per-user sampling, and skipping the
never-occupied channels removes pure-noise decodes whose candidates carry
no signal.  Fast mode is the desk-scale default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from hashlib import blake2b
from typing import Optional, Sequence

import numpy as np

from .codec import Code
from .core import FoParams, HhParams, PublicRandomness, c_eps
from .freq_oracle import AggregateState, fo_estimate_many, fo_simulate_reports
from .randomizer import SparseReport, randomize

__all__ = [
    "BOT",
    "MERSENNE_P",
    "HashSeed",
    "draw_hash_seeds",
    "channel_of",
    "pp_client_report",
    "simulate_idle_noise",
    "pp_decode",
    "PpDecodeResult",
    "pp_run",
    "SuccinctHistogram",
    "prune",
    "HhResult",
    "hh_execute",
    "hh_run",
    "hh_finalize",
]

MERSENNE_P = (1 << 61) - 1
_HASH_PRF_KEY = b"ldphist-channel-hash-v1"
BOT = -1  # sentinel item for users holding nothing

FAITHFUL_CHANNEL_CAP = 1 << 14


@dataclass(frozen=True)
class HashSeed:
    """Public per-repetition seed of the pairwise-independent hash family."""

    bits: bytes

    def hash_pair(self) -> tuple:
        """(a, b) with a in [1, p) and b in [0, p), derived from the seed by
        the fixed keyed PRF with rejection sampling."""
        return _hash_pair(self.bits)


@lru_cache(maxsize=4096)
def _hash_pair(bits: bytes) -> tuple:
    a = _draw_below(bits, b"a", MERSENNE_P - 1) + 1
    b = _draw_below(bits, b"b", MERSENNE_P)
    return a, b


def _draw_below(seed: bytes, tag: bytes, bound: int) -> int:
    limit = ((1 << 64) // bound) * bound
    counter = 0
    while True:
        h = blake2b(key=_HASH_PRF_KEY, digest_size=64)
        h.update(tag)
        h.update(seed)
        h.update(counter.to_bytes(8, "little"))
        block = h.digest()
        for off in range(0, 64, 8):
            u = int.from_bytes(block[off : off + 8], "little")
            if u < limit:
                return u % bound
        counter += 1


def draw_hash_seeds(pub: PublicRandomness, T: int, ell: int) -> list:
    """One fresh ell-bit public seed per repetition."""
    nbytes = -(-ell // 8)
    seeds = []
    for t in range(T):
        raw = bytearray(pub.bytes_at(("hash-seed", t), nbytes))
        extra = 8 * nbytes - ell
        if extra:
            raw[-1] &= (1 << (8 - extra)) - 1
        seeds.append(HashSeed(bytes(raw)))
    return seeds


def channel_of(seed: HashSeed, v: int, K: int) -> int:
    """Channel of item v: ((a v + b) mod p) mod K, p = 2^61 - 1."""
    if v >= MERSENNE_P:
        raise ValueError("item exceeds the hash prime; universe too large")
    a, b = seed.hash_pair()
    return ((a * v + b) % MERSENNE_P) % K


def pp_client_report(
    v: Optional[int], code: Code, eps: float, rng: np.random.Generator
) -> SparseReport:
    """One user's report in the promise protocol: the randomized codeword of
    its item, or a randomized zero input when the user holds nothing
    (v is None or the BOT sentinel)."""
    if v is None or v == BOT:
        return randomize(None, code.m, eps, rng)
    return randomize(code.encode(v), code.m, eps, rng)


def _active_reports_batch(
    signs: np.ndarray, count: int, eps: float, rng: np.random.Generator
) -> tuple:
    """(positions, report signs) for `count` users holding the same codeword;
    identical in distribution to per-user randomize calls."""
    m = len(signs)
    j = rng.integers(0, m, size=count)
    keep = rng.random(count) < math.exp(eps) / (math.exp(eps) + 1.0)
    s = np.where(keep, signs[j], -signs[j])
    return j, s


def _idle_reports_batch(count: int, m: int, rng: np.random.Generator) -> tuple:
    j = rng.integers(0, m, size=count)
    s = rng.choice(np.array([-1, 1], dtype=np.int8), size=count)
    return j, s


def simulate_idle_noise(k_idle: int, m: int, rng: np.random.Generator) -> tuple:
    """Exact multinomial of k_idle uniform (position, sign) draws, returned
    as (plus, minus) count deltas.  Merging these into an aggregate is
    distributionally indistinguishable from absorbing k_idle reports of
    users that randomize the zero input."""
    if k_idle < 0:
        raise ValueError("idle count must be nonnegative")
    if k_idle == 0:
        zero = np.zeros(m, dtype=np.int64)
        return zero, zero.copy()
    cells = rng.multinomial(k_idle, np.full(2 * m, 1.0 / (2 * m)))
    return cells[0::2].astype(np.int64), cells[1::2].astype(np.int64)


@dataclass
class PpDecodeResult:
    item: Optional[int]
    estimate: float
    flips: Optional[int] = None  # Hamming(rounded mean vector, decoded codeword)


def pp_decode(
    agg: AggregateState, code: Code, eps: float, verify: bool = False
) -> PpDecodeResult:
    """Round the mean report vector, decode, and estimate the decoded item's
    frequency as its codeword's inner product with the mean vector.

    Rounding uses the integer counts directly (ties at zero go positive).
    A decoding failure yields item None and estimate 0.  With verify=True
    the decoded item is additionally required to lie within the code's
    guaranteed correction radius of the rounded vector; the full protocol
    uses this to keep noise-only channels from emitting candidates.

    Below the promise (too few users holding the item for its signal to
    dominate the rounding noise) the result is unspecified: decoding may
    return an arbitrary item or fail even at a single user and huge eps,
    since one report fixes a single coordinate of the mean vector.
    """
    if agg.n_total < 1:
        raise ValueError("no reports absorbed")
    diff = agg.count_diff()
    y = np.where(diff >= 0, 1, -1).astype(np.int8)
    v = code.decode(y)
    if v is None:
        return PpDecodeResult(item=None, estimate=0.0)
    flips = int(np.count_nonzero(code.encode(v) != y))
    if verify and not flips < code.correctable_flips():
        return PpDecodeResult(item=None, estimate=0.0, flips=flips)
    est = float(c_eps(eps) / agg.n_total * (code.encode(v).astype(np.float64) @ diff))
    return PpDecodeResult(item=v, estimate=est, flips=flips)


def pp_run(
    items: np.ndarray, code: Code, eps: float, rng: np.random.Generator
) -> PpDecodeResult:
    """Run the promise protocol end to end on items (BOT = no item)."""
    agg = pp_aggregate(items, code, eps, rng)
    return pp_decode(agg, code, eps)


def pp_aggregate(
    items: np.ndarray, code: Code, eps: float, rng: np.random.Generator
) -> AggregateState:
    """Aggregate promise-protocol reports for all users, grouped by item."""
    items = np.asarray(items)
    agg = AggregateState(m=code.m, eps=eps)
    values, counts = np.unique(items, return_counts=True)
    for v, cnt in zip(values, counts):
        if v == BOT:
            j, s = _idle_reports_batch(int(cnt), code.m, rng)
        else:
            j, s = _active_reports_batch(code.encode(int(v)), int(cnt), eps, rng)
        agg.absorb_batch(j, s)
    return agg


# ---------------------------------------------------------------------------
# Succinct histograms
# ---------------------------------------------------------------------------

@dataclass
class SuccinctHistogram:
    """List of (item, estimated frequency); absent items estimate to 0.
    Estimates are clipped to [0, 1] and all reach the pruning threshold."""

    entries: list
    threshold: float

    def items(self) -> list:
        return [v for v, _ in self.entries]

    def estimate(self, v: int) -> float:
        for item, f in self.entries:
            if item == v:
                return f
        return 0.0

    def to_csv(self, truth=None) -> str:
        lines = []
        if truth is None:
            lines.append("item,estimated_frequency")
            for v, f in sorted(self.entries, key=lambda e: (-e[1], e[0])):
                lines.append(f"{v},{f:.17g}")
        else:
            lines.append("item,estimated_frequency,true_frequency")
            for v, f in sorted(self.entries, key=lambda e: (-e[1], e[0])):
                lines.append(f"{v},{f:.17g},{float(truth[v]):.17g}")
        return "\n".join(lines) + "\n"


def prune(candidates: Sequence, threshold: float) -> SuccinctHistogram:
    """Keep candidates whose estimate reaches the threshold (a strict
    shortfall removes them; equality stays), deduplicated by item keeping
    the first occurrence, with retained estimates clipped to [0, 1]."""
    seen = set()
    entries = []
    for item, f in candidates:
        if item in seen:
            continue
        seen.add(item)
        if f < threshold:
            continue
        entries.append((int(item), float(min(1.0, max(0.0, f)))))
    return SuccinctHistogram(entries=entries, threshold=threshold)


@dataclass
class HhResult:
    histogram: SuccinctHistogram
    candidates: list  # (item, fo_estimate) after dedup, discovery order
    decodes: list  # (t, k, item, pp_estimate) for decoded channels
    seeds: list
    mode: str
    hh_params: HhParams
    fo_params: FoParams
    fo_agg: AggregateState
    pp_aggs: dict = field(repr=False, default=None)


def _channel_map(seeds, distinct_items, K):
    """channel[t][v] for every distinct item, via exact integer hashing."""
    out = []
    for seed in seeds:
        a, b = seed.hash_pair()
        out.append({int(v): ((a * int(v) + b) % MERSENNE_P) % K for v in distinct_items})
    return out


def hh_execute(
    items: np.ndarray,
    code: Code,
    hh_params: HhParams,
    fo_params: FoParams,
    pub: PublicRandomness,
    rng: np.random.Generator,
    mode: str = "fast",
) -> HhResult:
    """Run the full succinct-histogram protocol.

    items may contain BOT (-1) for users holding nothing.  All channels,
    including the frequency oracle, run at hh_params.eps_channel so the
    total budget is hh_params.eps.
    """
    if mode not in ("fast", "faithful"):
        raise ValueError(f"unknown mode {mode!r}")
    items = np.asarray(items, dtype=np.int64)
    if np.any((items < BOT) | (items >= code.d)):
        raise ValueError("items must lie in [0, d) or be the BOT sentinel")
    n = len(items)
    if n != hh_params.n:
        raise ValueError(f"got {n} items but parameters were derived for n={hh_params.n}")
    K, T, eps_ch = hh_params.K, hh_params.T, hh_params.eps_channel
    if mode == "faithful" and K * T > FAITHFUL_CHANNEL_CAP:
        raise ValueError(
            f"faithful mode materializes K*T = {K * T} channels; cap is "
            f"{FAITHFUL_CHANNEL_CAP}, use fast mode or a smaller K override"
        )

    seeds = draw_hash_seeds(pub, T, hh_params.ell)
    values, counts = np.unique(items[items != BOT], return_counts=True)
    chan = _channel_map(seeds, values, K)

    pp_aggs = {}
    for t in range(T):
        by_channel = {}
        for v, cnt in zip(values, counts):
            by_channel.setdefault(chan[t][int(v)], []).append((int(v), int(cnt)))
        channel_ids = range(K) if mode == "faithful" else sorted(by_channel)
        for k in channel_ids:
            agg = AggregateState(m=code.m, eps=eps_ch)
            active = 0
            for v, cnt in sorted(by_channel.get(k, [])):
                j, s = _active_reports_batch(code.encode(v), cnt, eps_ch, rng)
                agg.absorb_batch(j, s)
                active += cnt
            idle = n - active
            if mode == "fast":
                plus_d, minus_d = simulate_idle_noise(idle, code.m, rng)
                agg.add_count_deltas(plus_d, minus_d)
            else:
                j, s = _idle_reports_batch(idle, code.m, rng)
                agg.absorb_batch(j, s)
            pp_aggs[(t, k)] = agg

    fo_agg = fo_simulate_reports(items, fo_params.m_fo, eps_ch, pub, rng)

    histogram, candidates, decodes = hh_finalize(
        pp_aggs, fo_agg, code, hh_params, pub
    )
    return HhResult(
        histogram=histogram,
        candidates=candidates,
        decodes=decodes,
        seeds=seeds,
        mode=mode,
        hh_params=hh_params,
        fo_params=fo_params,
        fo_agg=fo_agg,
        pp_aggs=pp_aggs,
    )


def hh_finalize(
    pp_aggs: dict,
    fo_agg: AggregateState,
    code: Code,
    hh_params: HhParams,
    pub: PublicRandomness,
) -> tuple:
    """Decode every provided channel aggregate, deduplicate candidates,
    estimate them against the frequency oracle, and prune.

    Deterministic given its inputs: channels are processed in sorted
    (t, k) order and candidate deduplication keeps the first occurrence.
    Used verbatim by both in-process runs and the aggregation service.
    """
    decodes = []
    candidate_items = []
    seen = set()
    keys = sorted(pp_aggs)
    if keys:
        diffs = np.stack([pp_aggs[key].count_diff() for key in keys])
        Y = np.where(diffs >= 0, 1, -1).astype(np.int8)
        decoded = code.decode_many(Y)
        scale = c_eps(hh_params.eps_channel)
        for key, y, diff, v in zip(keys, Y, diffs, decoded):
            if v is None:
                continue
            cw = code.encode(v)
            if not int(np.count_nonzero(cw != y)) < code.correctable_flips():
                continue
            n_ch = pp_aggs[key].n_total
            pp_est = float(scale / n_ch * (cw.astype(np.float64) @ diff))
            decodes.append((key[0], key[1], v, pp_est))
            if v not in seen:
                seen.add(v)
                candidate_items.append(v)
    if candidate_items:
        ests = fo_estimate_many(fo_agg, pub, candidate_items)
        candidates = list(zip(candidate_items, (float(e) for e in ests)))
    else:
        candidates = []
    histogram = prune(candidates, hh_params.threshold)
    return histogram, candidates, decodes


def hh_run(
    items: np.ndarray,
    code: Code,
    hh_params: HhParams,
    fo_params: FoParams,
    pub: PublicRandomness,
    rng: np.random.Generator,
    mode: str = "fast",
) -> SuccinctHistogram:
    """Full protocol; returns just the succinct histogram."""
    return hh_execute(items, code, hh_params, fo_params, pub, rng, mode).histogram
