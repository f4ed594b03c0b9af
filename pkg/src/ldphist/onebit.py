"""Rejection-sampling transform: every user's report becomes a single bit.

A public string y is a full sample from the composite randomizer's
no-item distribution: one uniform (position, sign) pair per hash channel
plus one for the frequency-oracle channel, regenerated bit-exactly from
the public randomness under the label (run id, user id, channel).  The
user accepts y with probability

    p = 1/2 * Pr[randomizer(item) = y] / Pr[randomizer(no item) = y]

and sends only the accept bit.  Conditioned on acceptance, y is
distributed exactly as a true report, so the server regenerates accepted
strings and feeds them to the unchanged aggregation pipeline; rejected
users silently drop out (each user is kept with probability exactly 1/2).

Computing p touches only the item-dependent components: the T channels
the item hashes into and the oracle channel.  Each contributes a factor
2 e^eps' / (e^eps' + 1) when the public sign at the sampled position
matches the item's encoding bit there and 2 / (e^eps' + 1) otherwise;
the remaining (K-1) T idle components contribute exactly 1 and are
skipped.  The total budget (2T + 1) eps' may not exceed ln 2, which is
precisely what keeps p <= 1 for every item and public string.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codec import Code
from .core import FoParams, HhParams, PublicRandomness
from .freq_oracle import AggregateState, phi_sign_at
from .heavy_hitter import BOT, channel_of, draw_hash_seeds

__all__ = [
    "OneBitStructure",
    "PublicString",
    "acceptance_prob",
    "onebit_client",
    "onebit_server_collect",
    "collect_fo_aggregate",
    "collect_pp_aggregates",
]

MAX_TOTAL_EPS = math.log(2)


@dataclass(frozen=True)
class OneBitStructure:
    """Layout of the composite randomizer the 1-bit transform wraps.

    T = 0 with m_fo > 0 describes an oracle-only protocol; m_fo = 0 and
    T = 0 is the degenerate structure with no item-dependent components
    (acceptance probability exactly 1/2), useful only in tests.
    """

    pub: PublicRandomness
    run_id: int
    K: int
    T: int
    eps_channel: float
    m_fo: int
    code: Optional[Code] = None
    seeds: tuple = ()

    def __post_init__(self):
        if self.T > 0 and self.code is None:
            raise ValueError("hash channels require a code")
        if self.T > 0 and len(self.seeds) != self.T:
            raise ValueError(f"need {self.T} hash seeds, got {len(self.seeds)}")
        if self.total_eps() > MAX_TOTAL_EPS + 1e-12:
            raise ValueError(
                f"total budget {self.total_eps():.4f} exceeds ln 2; the acceptance "
                "probability would leave [0, 1]"
            )

    def total_eps(self) -> float:
        return (2 * self.T + 1) * self.eps_channel

    @classmethod
    def from_params(
        cls,
        code: Code,
        hh_params: HhParams,
        fo_params: FoParams,
        pub: PublicRandomness,
        run_id: int = 0,
    ) -> "OneBitStructure":
        seeds = tuple(draw_hash_seeds(pub, hh_params.T, hh_params.ell))
        return cls(
            pub=pub,
            run_id=run_id,
            K=hh_params.K,
            T=hh_params.T,
            eps_channel=hh_params.eps_channel,
            m_fo=fo_params.m_fo,
            code=code,
            seeds=seeds,
        )

    @classmethod
    def fo_only(
        cls, m_fo: int, eps: float, pub: PublicRandomness, run_id: int = 0
    ) -> "OneBitStructure":
        return cls(pub=pub, run_id=run_id, K=1, T=0, eps_channel=eps, m_fo=m_fo)


@dataclass(frozen=True)
class PublicString:
    """User's public sample from the no-item distribution, one uniform
    (position, sign) pair per channel, regenerated lazily on demand."""

    structure: OneBitStructure
    user_id: int

    def _draw(self, label_suffix: tuple, m: int) -> tuple:
        pub = self.structure.pub
        label = ("pub-y", self.structure.run_id, self.user_id) + label_suffix
        u = pub.int_below(label, 2 * m)
        return u >> 1, 1 if (u & 1) == 0 else -1

    def pp_component(self, t: int, k: int) -> tuple:
        return self._draw(("pp", t, k), self.structure.code.m)

    def fo_component(self) -> tuple:
        return self._draw(("fo",), self.structure.m_fo)


def _ratio(match: bool, eps: float) -> float:
    e = math.exp(eps)
    return 2.0 * e / (e + 1.0) if match else 2.0 / (e + 1.0)


def acceptance_prob(v: int, y: PublicString, structure: OneBitStructure) -> float:
    """Acceptance probability of public string y for item v: half the
    likelihood ratio of y under the item's randomizer versus the no-item
    randomizer, evaluated in O(T + 1) component lookups.

    A user holding nothing (v is None or BOT) has likelihood ratio 1
    everywhere and accepts with probability exactly 1/2."""
    if v is None or v == BOT:
        return 0.5
    ratio = 1.0
    eps = structure.eps_channel
    for t in range(structure.T):
        k = channel_of(structure.seeds[t], v, structure.K)
        j, sign = y.pp_component(t, k)
        ratio *= _ratio(int(structure.code.encode(v)[j]) == sign, eps)
    if structure.m_fo > 0:
        j, sign = y.fo_component()
        ratio *= _ratio(phi_sign_at(structure.pub, v, j) == sign, eps)
    p = 0.5 * ratio
    if not (0.0 <= p <= 1.0 + 1e-12):
        raise AssertionError(f"acceptance probability {p} outside [0, 1]")
    return min(p, 1.0)


def onebit_client(
    v: int, y: PublicString, structure: OneBitStructure, rng: np.random.Generator
) -> int:
    """The single bit the user transmits."""
    return int(rng.random() < acceptance_prob(v, y, structure))


def onebit_server_collect(bits, structure: OneBitStructure) -> list:
    """Regenerate the public strings of accepting users; each returned
    (user_id, PublicString) stands in for that user's full report.

    bits is a mapping user_id -> bit or an iterable of (user_id, bit).
    """
    pairs = bits.items() if hasattr(bits, "items") else bits
    return [
        (user_id, PublicString(structure=structure, user_id=user_id))
        for user_id, bit in pairs
        if bit == 1
    ]


def collect_fo_aggregate(accepted: list, structure: OneBitStructure) -> AggregateState:
    """Aggregate the oracle components of accepted users' strings."""
    agg = AggregateState(m=structure.m_fo, eps=structure.eps_channel)
    positions = np.empty(len(accepted), dtype=np.int64)
    signs = np.empty(len(accepted), dtype=np.int64)
    for i, (_, y) in enumerate(accepted):
        positions[i], signs[i] = y.fo_component()
    agg.absorb_batch(positions, signs)
    return agg


def collect_pp_aggregates(accepted: list, structure: OneBitStructure) -> dict:
    """Aggregate every hash channel of accepted users' strings (the report
    set the histogram pipeline consumes).  Materializes K*T aggregates."""
    aggs = {
        (t, k): AggregateState(m=structure.code.m, eps=structure.eps_channel)
        for t in range(structure.T)
        for k in range(structure.K)
    }
    for _, y in accepted:
        for t in range(structure.T):
            for k in range(structure.K):
                j, s = y.pp_component(t, k)
                if s > 0:
                    aggs[(t, k)].plus[j] += 1
                else:
                    aggs[(t, k)].minus[j] += 1
                aggs[(t, k)].n_total += 1
    return aggs
