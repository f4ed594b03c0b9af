"""Frequency oracle from random sign projections and one-coordinate reports.

Each item v is assigned a pseudorandom column of signs with implicit scale
1/sqrt(m); the column is regenerated on demand from the public randomness
(label ("phi", v)), never materialized as a d x m matrix.  Clients run the
basic randomizer on their item's column; the server keeps exact integer
counts of (position, sign) pairs.  The mean report vector and all frequency
estimates are derived from those counts, so aggregation is associative,
order-free, and bit-exact under any partitioning into shards.

The estimate of f(v) is the inner product of v's column with the mean
report vector; it is intentionally not clipped here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import FoParams, PublicRandomness, c_eps
from .randomizer import SparseReport, randomize

__all__ = [
    "phi_column",
    "phi_sign_at",
    "AggregateState",
    "FrequencyOracle",
    "fo_client_report",
    "fo_absorb",
    "fo_simulate_reports",
    "fo_estimate",
]


def phi_column(pub: PublicRandomness, v: int, m: int) -> np.ndarray:
    """Sign column of item v, regenerated bit-exactly from the seed."""
    return pub.sign_array(("phi", v), m)


def phi_sign_at(pub: PublicRandomness, v: int, j: int) -> int:
    """Single coordinate of v's column without generating the whole column."""
    return pub.sign_at(("phi", v), j)


@dataclass
class AggregateState:
    """Exact integer sign counts per coordinate.

    The mean report vector is c_eps(eps) * sqrt(m) * (plus - minus) / n_total,
    but estimates are computed straight from the integer counts.
    """

    m: int
    eps: float
    n_total: int = 0
    plus: np.ndarray = field(default=None)
    minus: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.plus is None:
            self.plus = np.zeros(self.m, dtype=np.int64)
        if self.minus is None:
            self.minus = np.zeros(self.m, dtype=np.int64)

    def absorb(self, report: SparseReport) -> None:
        if not (0 <= report.position < self.m):
            raise ValueError(f"position {report.position} out of range [0, {self.m})")
        if report.sign > 0:
            self.plus[report.position] += 1
        else:
            self.minus[report.position] += 1
        self.n_total += 1

    def absorb_batch(self, positions: np.ndarray, signs: np.ndarray) -> None:
        positions = np.asarray(positions)
        signs = np.asarray(signs)
        if positions.size and (positions.min() < 0 or positions.max() >= self.m):
            raise ValueError("position out of range")
        np.add.at(self.plus, positions[signs > 0], 1)
        np.add.at(self.minus, positions[signs < 0], 1)
        self.n_total += len(positions)

    def add_count_deltas(self, plus_delta: np.ndarray, minus_delta: np.ndarray) -> None:
        self.plus += plus_delta
        self.minus += minus_delta
        self.n_total += int(plus_delta.sum() + minus_delta.sum())

    def merge(self, other: "AggregateState") -> None:
        if other.m != self.m or other.eps != self.eps:
            raise ValueError("cannot merge aggregates with different parameters")
        self.plus += other.plus
        self.minus += other.minus
        self.n_total += other.n_total

    def count_diff(self) -> np.ndarray:
        return self.plus - self.minus

    def zbar(self) -> np.ndarray:
        """Mean report vector (float); requires at least one report."""
        if self.n_total < 1:
            raise ValueError("no reports absorbed")
        scale = c_eps(self.eps) * np.sqrt(self.m)
        return scale * self.count_diff() / self.n_total

    # Wire form: header m, n_total (u64) and eps (f64), then the two count
    # arrays as little-endian u64.
    _HEADER = struct.Struct("<QQd")

    def to_bytes(self) -> bytes:
        head = self._HEADER.pack(self.m, self.n_total, self.eps)
        return (
            head
            + self.plus.astype("<u8").tobytes()
            + self.minus.astype("<u8").tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "AggregateState":
        m, n_total, eps = cls._HEADER.unpack_from(blob, 0)
        off = cls._HEADER.size
        need = off + 16 * m
        if len(blob) != need:
            raise ValueError(f"aggregate blob has {len(blob)} bytes, expected {need}")
        plus = np.frombuffer(blob, dtype="<u8", count=m, offset=off).astype(np.int64)
        minus = np.frombuffer(blob, dtype="<u8", count=m, offset=off + 8 * m).astype(np.int64)
        return cls(m=int(m), eps=float(eps), n_total=int(n_total), plus=plus, minus=minus)


def fo_client_report(
    v: int, params: FoParams, pub: PublicRandomness, eps: float, rng: np.random.Generator
) -> SparseReport:
    """One user's privatized report: the basic randomizer applied to the
    user's projection column.  A user with no item (v is None) randomizes
    the zero input."""
    if v is None:
        return randomize(None, params.m_fo, eps, rng)
    if not (0 <= v < params.d):
        raise ValueError(f"item {v} outside universe of size {params.d}")
    return randomize(phi_column(pub, v, params.m_fo), params.m_fo, eps, rng)


def fo_absorb(agg: AggregateState, report: SparseReport) -> AggregateState:
    agg.absorb(report)
    return agg


def fo_simulate_reports(
    items: np.ndarray,
    m: int,
    eps: float,
    pub: PublicRandomness,
    rng: np.random.Generator,
) -> AggregateState:
    """Aggregate the reports of all users in one pass.

    Sampling is grouped by distinct item so each column is generated once;
    per-user draws are identical in distribution to calling
    fo_client_report in a loop.  Items equal to -1 denote users with no
    item, whose reports are uniform.
    """
    items = np.asarray(items)
    agg = AggregateState(m=m, eps=eps)
    p_keep = np.exp(eps) / (np.exp(eps) + 1.0)
    values, counts = np.unique(items, return_counts=True)
    for v, cnt in zip(values, counts):
        j = rng.integers(0, m, size=cnt)
        if v < 0:
            signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=cnt)
        else:
            col = phi_column(pub, int(v), m)
            keep = rng.random(cnt) < p_keep
            signs = np.where(keep, col[j], -col[j])
        agg.absorb_batch(j, signs)
    return agg


def fo_estimate(agg: AggregateState, pub: PublicRandomness, v: int) -> float:
    """Estimate f(v) as the inner product of v's column with the mean
    report vector, computed exactly from integer counts.  May fall outside
    [0, 1]; consumers clip where a proportion is required."""
    if agg.n_total < 1:
        raise ValueError("no reports absorbed")
    col = phi_column(pub, v, agg.m).astype(np.float64)
    diff = agg.count_diff().astype(np.float64)
    return float(c_eps(agg.eps) / agg.n_total * (col @ diff))


def fo_estimate_many(agg: AggregateState, pub: PublicRandomness, items) -> np.ndarray:
    """Estimates for several items; identical results to fo_estimate."""
    diff = agg.count_diff().astype(np.float64)
    scale = c_eps(agg.eps) / agg.n_total
    out = np.empty(len(items), dtype=np.float64)
    for i, v in enumerate(items):
        col = phi_column(pub, int(v), agg.m).astype(np.float64)
        out[i] = scale * (col @ diff)
    return out


@dataclass
class FrequencyOracle:
    """Bundle of the public randomness handle, derived parameters, and the
    running aggregate, mirroring the (projection, mean report) pair that
    the estimator consumes."""

    pub: PublicRandomness
    params: FoParams
    eps: float
    agg: AggregateState = None

    def __post_init__(self):
        if self.agg is None:
            self.agg = AggregateState(m=self.params.m_fo, eps=self.eps)
        if self.agg.m != self.params.m_fo:
            raise ValueError("aggregate dimension disagrees with parameters")

    def client_report(self, v: int, rng: np.random.Generator) -> SparseReport:
        return fo_client_report(v, self.params, self.pub, self.eps, rng)

    def absorb(self, report: SparseReport) -> None:
        self.agg.absorb(report)

    def estimate(self, v: int) -> float:
        return fo_estimate(self.agg, self.pub, v)

    def estimate_many(self, items) -> np.ndarray:
        return fo_estimate_many(self.agg, self.pub, items)
