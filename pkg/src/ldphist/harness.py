"""Dataset generators, error metrics, and reproducible experiment runs.

Every experiment is a pure function of its configuration and seed: trial
seeds are derived from the config seed, public randomness comes from a
seeded master value, and outputs (a CSV table and a JSON manifest echoing
every derived parameter) are byte-stable across runs and machines.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .codec import build_code
from .core import PublicRandomness, derive_fo_params, derive_hh_params
from .freq_oracle import fo_estimate_many, fo_simulate_reports
from .heavy_hitter import BOT, SuccinctHistogram, hh_execute, pp_run
from .onebit import (
    OneBitStructure,
    PublicString,
    acceptance_prob,
    collect_fo_aggregate,
    collect_pp_aggregates,
    onebit_server_collect,
)

__all__ = [
    "DatasetSpec",
    "gen_dataset",
    "truth_frequencies",
    "linf_error",
    "hh_precision_recall",
    "ExperimentConfig",
    "MetricsRecord",
    "run_experiment",
    "fo_scaling_sweep",
]

CSV_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    """A deterministic synthetic dataset.

    kinds: "uniform"; "zipf" with exponent s over ranks 0..d-1;
    "planted" with exact per-item counts from (item, frequency) pairs and
    the remaining users uniform over the unplanted items; "promise" where
    ceil(eta * n) users hold `item` and everyone else holds nothing (BOT).
    """

    kind: str
    d: int
    n: int
    seed: int
    s: float = 1.1
    planted: tuple = ()
    eta: float = 0.0
    item: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform", "zipf", "planted", "promise"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "planted":
            total = sum(f for _, f in self.planted)
            if total > 1.0 + 1e-12:
                raise ValueError(f"planted frequencies sum to {total} > 1")
            if len({v for v, _ in self.planted}) != len(self.planted):
                raise ValueError("planted items must be distinct")
        if self.kind == "promise" and not (0.0 <= self.eta <= 1.0):
            raise ValueError("eta must be in [0, 1]")


def gen_dataset(spec: DatasetSpec) -> np.ndarray:
    """Items array of length n; BOT (-1) marks users holding nothing."""
    rng = np.random.default_rng([spec.seed, 0xD5EED])
    if spec.kind == "uniform":
        return rng.integers(0, spec.d, spec.n).astype(np.int64)
    if spec.kind == "zipf":
        ranks = np.arange(1, spec.d + 1, dtype=np.float64)
        weights = ranks ** (-spec.s)
        weights /= weights.sum()
        return rng.choice(spec.d, size=spec.n, p=weights).astype(np.int64)
    if spec.kind == "promise":
        k = math.ceil(spec.eta * spec.n)
        items = np.full(spec.n, BOT, dtype=np.int64)
        items[:k] = spec.item
        return items
    # planted: exact counts, remainder uniform over the other items
    items = np.empty(spec.n, dtype=np.int64)
    pos = 0
    planted_ids = [v for v, _ in spec.planted]
    for v, f in spec.planted:
        cnt = int(round(f * spec.n))
        items[pos : pos + cnt] = v
        pos += cnt
    rest = np.setdiff1d(np.arange(spec.d), np.array(planted_ids, dtype=np.int64))
    if pos < spec.n:
        if len(rest) == 0:
            raise ValueError("no unplanted items left for the remainder")
        items[pos:] = rng.choice(rest, size=spec.n - pos)
    return items


def truth_frequencies(items: np.ndarray, d: int) -> np.ndarray:
    """Empirical frequency of every item; BOT users count toward n."""
    held = items[items != BOT]
    return np.bincount(held, minlength=d) / len(items)


def items_checksum(items: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(items, dtype=np.int64).tobytes()).hexdigest()


def linf_error(truth: np.ndarray, hist: SuccinctHistogram) -> float:
    """Worst-case absolute error over the whole universe, with items off
    the histogram implicitly estimated as 0."""
    est = np.zeros(len(truth))
    for v, f in hist.entries:
        est[v] = f
    return float(np.max(np.abs(est - truth)))


def hh_precision_recall(truth: np.ndarray, hist: SuccinctHistogram, threshold: float) -> tuple:
    """Precision/recall of the output list against the true heavy set
    {v : f(v) >= threshold}.  Empty sets score 1.0."""
    out = set(hist.items())
    heavy = {int(v) for v in np.nonzero(truth >= threshold)[0]}
    precision = 1.0 if not out else len(out & heavy) / len(out)
    recall = 1.0 if not heavy else len(out & heavy) / len(heavy)
    return precision, recall


@dataclass
class ExperimentConfig:
    protocol: str  # "fo", "pp", "hist"
    dataset: DatasetSpec
    eps: float
    beta: float
    seed: int = 0
    trials: int = 1
    k_override: Optional[int] = None
    code_kind: str = "reference"
    mode: str = "fast"
    one_bit: bool = False

    def __post_init__(self):
        if self.protocol not in ("fo", "pp", "hist"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.one_bit and self.protocol == "pp":
            raise ValueError("one-bit mode applies to fo and hist runs")


@dataclass
class MetricsRecord:
    protocol: str
    config: dict
    derived: dict
    trial_metrics: list
    linf_error: float  # median over trials
    hh_precision: float
    hh_recall: float
    runtime_s: float
    items_sha256: str
    csv_schema_version: int = CSV_SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, 0xC0FFEE])


def _trial_pub(seed: int, trial: int) -> PublicRandomness:
    return PublicRandomness.from_any(f"experiment:{seed}:{trial}")


def run_experiment(
    config: ExperimentConfig,
    out_csv: str = None,
    out_manifest: str = None,
    out_aggregate: str = None,
) -> MetricsRecord:
    """Run the configured protocol for the configured number of trials.

    Writes the final trial's per-item CSV, a JSON manifest, and (for
    oracle runs) the final trial's framed aggregate blob when paths are
    given; all outputs are byte-stable for a fixed (config, seed).
    """
    started = time.time()
    spec = config.dataset
    d, n = spec.d, spec.n
    runner = {"fo": _run_fo_trial, "pp": _run_pp_trial, "hist": _run_hist_trial}[config.protocol]

    derived = {}
    trial_metrics = []
    final_rows = ""
    final_blob = None
    checksum = ""
    for trial in range(config.trials):
        items = gen_dataset(DatasetSpec(**{**asdict(spec), "seed": spec.seed + trial}))
        checksum = items_checksum(items)
        truth = truth_frequencies(items, d)
        metrics, rows, derived = runner(config, items, truth, trial)
        final_blob = metrics.pop("aggregate_blob", None)
        metrics["trial"] = trial
        metrics["items_sha256"] = checksum
        trial_metrics.append(metrics)
        final_rows = rows

    linf_values = [m["linf_error"] for m in trial_metrics]
    precisions = [m.get("precision", 1.0) for m in trial_metrics]
    recalls = [m.get("recall", 1.0) for m in trial_metrics]
    record = MetricsRecord(
        protocol=config.protocol,
        config=asdict(config),
        derived=derived,
        trial_metrics=trial_metrics,
        linf_error=float(np.median(linf_values)),
        hh_precision=float(np.median(precisions)),
        hh_recall=float(np.median(recalls)),
        runtime_s=time.time() - started,
        items_sha256=checksum,
    )
    if out_csv:
        with open(out_csv, "w", encoding="utf-8") as fh:
            fh.write(final_rows)
    if out_aggregate and final_blob is not None:
        with open(out_aggregate, "wb") as fh:
            fh.write(final_blob)
    if out_manifest:
        manifest = json.loads(record.to_json())
        manifest["runtime_s"] = None  # keep manifest bytes reproducible
        with open(out_manifest, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
    return record


def _echo_params(obj) -> dict:
    return {k: (v if not isinstance(v, float) else float(v)) for k, v in asdict(obj).items()}


def _run_fo_trial(config: ExperimentConfig, items, truth, trial):
    spec = config.dataset
    params = derive_fo_params(spec.d, spec.n, config.eps, config.beta)
    pub = _trial_pub(config.seed, trial)
    rng = _trial_rng(config.seed, trial)
    if config.one_bit:
        structure = OneBitStructure.fo_only(params.m_fo, config.eps, pub, run_id=trial)
        bits = {}
        for user in range(spec.n):
            y = PublicString(structure=structure, user_id=user)
            bits[user] = int(rng.random() < acceptance_prob(int(items[user]), y, structure))
        accepted = onebit_server_collect(sorted(bits.items()), structure)
        agg = collect_fo_aggregate(accepted, structure)
        acceptance = len(accepted) / spec.n
    else:
        agg = fo_simulate_reports(items, params.m_fo, config.eps, pub, rng)
        acceptance = 1.0
    est = fo_estimate_many(agg, pub, np.arange(spec.d))
    linf = float(np.max(np.abs(est - truth)))
    rows = ["item,true_frequency,estimated_frequency"]
    rows += [f"{v},{truth[v]:.17g},{est[v]:.17g}" for v in range(spec.d)]
    metrics = {
        "linf_error": linf,
        "acceptance_rate": acceptance,
        "n_reports": int(agg.n_total),
        "aggregate_blob": agg.to_bytes(),
    }
    return metrics, "\n".join(rows) + "\n", {"fo_params": _echo_params(params)}


def _run_pp_trial(config: ExperimentConfig, items, truth, trial):
    spec = config.dataset
    code = build_code(spec.d, config.code_kind)
    rng = _trial_rng(config.seed, trial)
    res = pp_run(items, code, config.eps, rng)
    planted = spec.item if spec.kind == "promise" else None
    recovered = planted is not None and res.item == planted
    if planted is None:
        err = 0.0
    elif recovered:
        err = abs(res.estimate - truth[planted])
    else:
        err = float(truth[planted])  # the missing item's implicit-zero error
    rows = ["recovered_item,estimate,true_frequency"]
    rows.append(f"{res.item if res.item is not None else ''},{res.estimate:.17g},"
                f"{truth[planted] if planted is not None else 0:.17g}")
    metrics = {
        "linf_error": err,
        "recovered": bool(recovered),
        "decoded_item": res.item,
        "estimate": res.estimate,
    }
    return metrics, "\n".join(rows) + "\n", {"code": code.header()}


def _run_hist_trial(config: ExperimentConfig, items, truth, trial):
    spec = config.dataset
    hh = derive_hh_params(spec.d, spec.n, config.eps, config.beta, config.k_override)
    fo = derive_fo_params(spec.d, spec.n, hh.eps_channel, config.beta / 3)
    code = build_code(spec.d, config.code_kind)
    pub = _trial_pub(config.seed, trial)
    rng = _trial_rng(config.seed, trial)
    extra = {}
    if config.one_bit:
        hist, seeds, extra = _run_hist_one_bit(config, items, hh, fo, code, pub, rng, trial)
        mode = "one-bit"
    else:
        res = hh_execute(items, code, hh, fo, pub, rng, mode=config.mode)
        hist, seeds, mode = res.histogram, res.seeds, res.mode
    linf = linf_error(truth, hist)
    precision, recall = hh_precision_recall(truth, hist, hh.threshold)
    junk = [int(v) for v in hist.items() if truth[v] < hh.threshold / 2]
    metrics = {
        "linf_error": linf,
        "precision": precision,
        "recall": recall,
        "output_size": len(hist.entries),
        "junk_items": junk,
        "planted_errors": {
            int(v): float(hist.estimate(v) - truth[v]) for v, _ in spec.planted
        },
        "planted_recovered": all(v in hist.items() for v, _ in spec.planted),
        **extra,
    }
    derived = {
        "hh_params": _echo_params(hh),
        "fo_params": _echo_params(fo),
        "code": code.header(),
        "seeds": [s.bits.hex() for s in seeds],
        "mode": mode,
    }
    return metrics, hist.to_csv(truth), derived


def _run_hist_one_bit(config, items, hh, fo, code, pub, rng, trial):
    """Full protocol where each user transmits a single accept bit; the
    server regenerates accepted users' public strings into the unchanged
    aggregation pipeline.  Materializes all K*T channels, so it is meant
    for service-scale channel counts."""
    from .heavy_hitter import FAITHFUL_CHANNEL_CAP, hh_finalize

    if hh.K * hh.T > FAITHFUL_CHANNEL_CAP:
        raise ValueError(
            f"one-bit collection materializes K*T = {hh.K * hh.T} channels; "
            f"cap is {FAITHFUL_CHANNEL_CAP}, use a smaller K override"
        )
    structure = OneBitStructure.from_params(code, hh, fo, pub, run_id=trial)
    bits = {}
    for user in range(len(items)):
        y = PublicString(structure=structure, user_id=user)
        bits[user] = int(rng.random() < acceptance_prob(int(items[user]), y, structure))
    accepted = onebit_server_collect(sorted(bits.items()), structure)
    pp_aggs = collect_pp_aggregates(accepted, structure)
    fo_agg = collect_fo_aggregate(accepted, structure)
    hist, _, _ = hh_finalize(pp_aggs, fo_agg, code, hh, pub)
    extra = {"acceptance_rate": len(accepted) / max(1, len(items))}
    return hist, list(structure.seeds), extra


def fo_scaling_sweep(
    d: int, eps: float, beta: float, n_values, trials: int, seed: int = 0
) -> dict:
    """Median worst-case oracle error per n; the returned record includes
    the ratio between consecutive medians (expected near 2 when n
    quadruples)."""
    medians = {}
    for n in n_values:
        cfg = ExperimentConfig(
            protocol="fo",
            dataset=DatasetSpec(kind="uniform", d=d, n=n, seed=seed),
            eps=eps,
            beta=beta,
            seed=seed,
            trials=trials,
        )
        medians[n] = run_experiment(cfg).linf_error
    ns = sorted(medians)
    ratios = [medians[a] / medians[b] for a, b in zip(ns, ns[1:])]
    return {"medians": medians, "ratios": ratios}
