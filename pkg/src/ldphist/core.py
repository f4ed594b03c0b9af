"""Shared domain types, protocol parameter derivation, and public randomness.

All protocols in this package are parameterized by a universe size ``d``, a
user count ``n``, a privacy budget ``eps`` (nats), and a confidence parameter
``beta``.  The derivation formulas use natural logarithms for every
concentration-derived quantity (gamma, projection dimension, pruning
threshold) and base-2 logarithms for bit lengths (message bits, hash seed
length, repetition count).  Derived integer parameters round up.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Tuple, Union

import numpy as np

__all__ = [
    "Universe",
    "PrivacyBudget",
    "FoParams",
    "HhParams",
    "PublicRandomness",
    "derive_fo_params",
    "derive_hh_params",
    "c_eps",
    "report_magnitude",
    "load_params_file",
]


LabelPart = Union[str, int, bytes]


@dataclass(frozen=True)
class Universe:
    """The item universe: items are the integers 0 .. d-1."""

    d: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"universe size must be >= 2, got {self.d}")

    def contains(self, v: int) -> bool:
        return 0 <= v < self.d


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy loss epsilon (nats) and approximation term delta.

    Protocol execution always uses delta = 0 (pure local privacy); a nonzero
    delta is meaningful only for audit queries.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not (0 <= self.delta < 1):
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class FoParams:
    """Derived parameters of the frequency-oracle protocol.

    gamma is the target inner-product distortion of the random sign
    projection and m_fo its dimension.  The inputs (d, n, eps) are retained
    so that run manifests can echo the full derivation.
    """

    gamma: float
    m_fo: int
    beta: float
    d: int
    n: int
    eps: float

    def __post_init__(self):
        if self.m_fo < 1:
            raise ValueError("projection dimension must be >= 1")


@dataclass(frozen=True)
class HhParams:
    """Derived parameters of the succinct-histogram protocol.

    K channels per repetition, T repetitions, hash seeds of ell bits, a
    per-sub-protocol budget eps_channel = eps / (2T + 1), and the pruning
    threshold applied to frequency estimates of decoded candidates.
    iso_failure_bound is (1/threshold) * (n/K)**T, the probability bound on
    some heavy hitter failing to get an interference-free channel; callers
    overriding K should check it against beta / 3.
    """

    K: int
    T: int
    ell: int
    eps_channel: float
    threshold: float
    iso_failure_bound: float
    d: int
    n: int
    eps: float
    beta: float


def _check_common(d: int, n: int, eps: float, beta: float) -> None:
    if d < 2:
        raise ValueError(f"universe size must be >= 2, got {d}")
    if n < 1:
        raise ValueError(f"user count must be >= 1, got {n}")
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if not (0 < beta < 1):
        raise ValueError(f"beta must be in (0, 1), got {beta}")


def derive_fo_params(d: int, n: int, eps: float, beta: float) -> FoParams:
    """Derive the frequency-oracle projection parameters.

    gamma = sqrt(ln(2d/beta) / (eps^2 n)) and
    m_fo  = ceil(ln(d+1) * ln(2/beta) / gamma^2), rounded up to at least 1.
    """
    _check_common(d, n, eps, beta)
    gamma = math.sqrt(math.log(2.0 * d / beta) / (eps * eps * n))
    m_fo = max(1, math.ceil(math.log(d + 1.0) * math.log(2.0 / beta) / (gamma * gamma)))
    return FoParams(gamma=gamma, m_fo=m_fo, beta=beta, d=d, n=n, eps=eps)


def derive_hh_params(
    d: int, n: int, eps: float, beta: float, k_override: int | None = None
) -> HhParams:
    """Derive the succinct-histogram protocol parameters.

    K defaults to floor(n^{3/2}); an override must be >= 2 and is intended
    for desk-scale runs, in which case the returned isolation failure bound
    should be checked against beta / 3.  T = max(1, ceil(log2(3/beta))).
    Raises if the pruning threshold reaches 1, which makes the protocol
    vacuous (no frequency can survive the prune).
    """
    _check_common(d, n, eps, beta)
    if k_override is not None:
        if k_override < 2:
            raise ValueError(f"K override must be >= 2, got {k_override}")
        K = int(k_override)
    else:
        K = math.floor(n ** 1.5)
    T = max(1, math.ceil(math.log2(3.0 / beta)))
    eps_channel = eps / (2 * T + 1)
    ell = 2 * max(math.ceil(math.log2(d)), math.ceil(math.log2(max(n, 2))))
    threshold = ((2 * T + 1) / eps) * math.sqrt(
        math.log(d) * math.log(1.0 / beta) / n
    )
    if threshold >= 1.0:
        raise ValueError(
            f"pruning threshold {threshold:.4g} >= 1: no frequency can pass it; "
            f"increase n or eps (d={d}, n={n}, eps={eps}, beta={beta})"
        )
    iso_failure_bound = (1.0 / threshold) * (n / K) ** T
    return HhParams(
        K=K,
        T=T,
        ell=ell,
        eps_channel=eps_channel,
        threshold=threshold,
        iso_failure_bound=iso_failure_bound,
        d=d,
        n=n,
        eps=eps,
        beta=beta,
    )


def c_eps(eps: float) -> float:
    """Debiasing scale (e^eps + 1) / (e^eps - 1) of the basic randomizer."""
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    e = math.exp(eps)
    return (e + 1.0) / (e - 1.0)


def report_magnitude(eps: float, m: int) -> float:
    """Magnitude c_eps * sqrt(m) carried by every report coordinate."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return c_eps(eps) * math.sqrt(m)


# ---------------------------------------------------------------------------
# Public randomness
# ---------------------------------------------------------------------------

_BLOCK = 64  # bytes per PRF block


def _encode_label(parts: Iterable[LabelPart]) -> bytes:
    """Unambiguous byte encoding of a label tuple (type tag + length prefix)."""
    out = bytearray()
    for p in parts:
        if isinstance(p, bytes):
            tag, data = b"b", p
        elif isinstance(p, str):
            tag, data = b"s", p.encode("utf-8")
        elif isinstance(p, (int, np.integer)):
            tag, data = b"i", int(p).to_bytes(16, "little", signed=True)
        else:
            raise TypeError(f"unsupported label part type: {type(p)!r}")
        out += tag + len(data).to_bytes(4, "little") + data
    return bytes(out)


class PublicRandomness:
    """Deterministic public coin source shared by all protocol parties.

    Construction: a 256-bit master seed keys BLAKE2b; the byte stream for a
    label is the concatenation of 64-byte blocks
    ``BLAKE2b(key=master_seed, data=encode(label) || little_endian_u64(i))``
    for block counter i = 0, 1, ...  Distinct labels give independent
    streams, and the same seed and label always reproduce identical bytes.
    """

    def __init__(self, master_seed: bytes):
        if not isinstance(master_seed, bytes):
            raise TypeError("master seed must be bytes")
        if len(master_seed) != 32:
            raise ValueError(f"master seed must be 32 bytes, got {len(master_seed)}")
        self.master_seed = master_seed

    @classmethod
    def from_any(cls, seed: Union[int, str, bytes]) -> "PublicRandomness":
        """Derive a 32-byte master seed from an int, string, or bytes value."""
        if isinstance(seed, bytes) and len(seed) == 32:
            return cls(seed)
        if isinstance(seed, int):
            material = seed.to_bytes(32, "little", signed=True)
        elif isinstance(seed, str):
            material = seed.encode("utf-8")
        elif isinstance(seed, bytes):
            material = seed
        else:
            raise TypeError(f"unsupported seed type: {type(seed)!r}")
        return cls(hashlib.blake2b(material, digest_size=32).digest())

    def _block(self, label_bytes: bytes, index: int) -> bytes:
        h = hashlib.blake2b(key=self.master_seed, digest_size=_BLOCK)
        h.update(label_bytes)
        h.update(struct.pack("<Q", index))
        return h.digest()

    def bytes_at(self, label: Tuple[LabelPart, ...], nbytes: int) -> bytes:
        """First nbytes bytes of the stream for this label."""
        lb = _encode_label(label)
        nblocks = -(-nbytes // _BLOCK)
        raw = b"".join(self._block(lb, i) for i in range(nblocks))
        return raw[:nbytes]

    def byte_at(self, label: Tuple[LabelPart, ...], index: int) -> int:
        """Single byte at a given stream offset, touching only one block."""
        lb = _encode_label(label)
        block = self._block(lb, index // _BLOCK)
        return block[index % _BLOCK]

    def sign_array(self, label: Tuple[LabelPart, ...], count: int) -> np.ndarray:
        """count pseudorandom signs in {-1, +1} as int8 (bit k of byte k//8,
        little bit order)."""
        raw = self.bytes_at(label, -(-count // 8))
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        return (1 - 2 * bits[:count].astype(np.int8)).astype(np.int8)

    def sign_at(self, label: Tuple[LabelPart, ...], index: int) -> int:
        """Single sign at a given bit offset of the label's stream."""
        byte = self.byte_at(label, index // 8)
        bit = (byte >> (index % 8)) & 1
        return 1 - 2 * bit

    def u64_array(self, label: Tuple[LabelPart, ...], count: int) -> np.ndarray:
        raw = self.bytes_at(label, 8 * count)
        return np.frombuffer(raw, dtype="<u8").copy()

    def int_below(self, label: Tuple[LabelPart, ...], bound: int) -> int:
        """Exactly uniform integer in [0, bound) via 64-bit rejection sampling."""
        if not (1 <= bound <= 1 << 63):
            raise ValueError(f"bound out of range: {bound}")
        limit = ((1 << 64) // bound) * bound
        lb = _encode_label(label)
        i = 0
        while True:
            block = self._block(lb, i)
            for off in range(0, _BLOCK, 8):
                u = int.from_bytes(block[off : off + 8], "little")
                if u < limit:
                    return u % bound
            i += 1


# ---------------------------------------------------------------------------
# Plain-text parameter files
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_params_file(path: str) -> dict:
    """Load key=value parameter lines; '#' starts a comment."""
    params = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            params[key.strip()] = _parse_value(value)
    return params
