import itertools
import math
from dataclasses import dataclass

import numpy as np
import pytest

from ldphist.codec import build_code
from ldphist.core import PublicRandomness
from ldphist.freq_oracle import phi_column
from ldphist.heavy_hitter import channel_of, draw_hash_seeds
from ldphist.onebit import (
    MAX_TOTAL_EPS,
    OneBitStructure,
    PublicString,
    acceptance_prob,
    collect_fo_aggregate,
    collect_pp_aggregates,
    onebit_client,
    onebit_server_collect,
)
from ldphist.randomizer import ChannelMatrix, audit_ldp, report_distribution

PUB = PublicRandomness.from_any(314)


def composite_toy(eps_total=math.log(2), m_fo=4, d=4, K=2, T=1):
    code = build_code(d, "reference")
    seeds = tuple(draw_hash_seeds(PUB, T, 16))
    return OneBitStructure(
        pub=PUB,
        run_id=1,
        K=K,
        T=T,
        eps_channel=eps_total / (2 * T + 1),
        m_fo=m_fo,
        code=code,
        seeds=seeds,
    )


@dataclass(frozen=True)
class _FixedString:
    """Test double with explicit component values."""

    pp: dict
    fo: tuple

    def pp_component(self, t, k):
        return self.pp[(t, k)]

    def fo_component(self):
        return self.fo


def _enumerate_strings(structure):
    """All joint values of the item-dependent component space (every hash
    channel of every repetition, plus the oracle component)."""
    m_pp = structure.code.m
    pp_keys = [(t, k) for t in range(structure.T) for k in range(structure.K)]
    pp_space = list(itertools.product(range(m_pp), (1, -1)))
    fo_space = list(itertools.product(range(structure.m_fo), (1, -1)))
    for combo in itertools.product(pp_space, repeat=len(pp_keys)):
        for fo in fo_space:
            yield _FixedString(pp=dict(zip(pp_keys, combo)), fo=fo)


class TestStructure:
    def test_budget_cap_enforced(self):
        with pytest.raises(ValueError, match="ln 2"):
            composite_toy(eps_total=MAX_TOTAL_EPS + 0.01)

    def test_budget_cap_boundary_ok(self):
        composite_toy(eps_total=MAX_TOTAL_EPS)

    def test_seeds_required(self):
        code = build_code(4, "reference")
        with pytest.raises(ValueError, match="seeds"):
            OneBitStructure(pub=PUB, run_id=0, K=2, T=1, eps_channel=0.1,
                            m_fo=4, code=code, seeds=())


class TestPublicString:
    def test_regenerable(self):
        s = composite_toy()
        a = PublicString(structure=s, user_id=9)
        b = PublicString(structure=s, user_id=9)
        assert a.pp_component(0, 1) == b.pp_component(0, 1)
        assert a.fo_component() == b.fo_component()
        assert a.fo_component() != PublicString(structure=s, user_id=10).fo_component() or \
               a.pp_component(0, 0) != PublicString(structure=s, user_id=10).pp_component(0, 0)

    def test_components_roughly_uniform(self):
        s = composite_toy(m_fo=4)
        counts = np.zeros(8)
        users = 20_000
        for u in range(users):
            j, sign = PublicString(structure=s, user_id=u).fo_component()
            counts[2 * j + (0 if sign > 0 else 1)] += 1
        assert np.max(np.abs(counts / users - 1 / 8)) < 5 * math.sqrt(0.125 * 0.875 / users)


class TestAcceptanceProb:
    def test_single_component_match_factor(self):
        # Matching sign in a component contributes e^eps/(1+e^eps) to p.
        eps = 0.4
        s = OneBitStructure(pub=PUB, run_id=0, K=1, T=0, eps_channel=eps, m_fo=8)
        v = 2
        col = phi_column(PUB, v, 8)
        y_match = _FixedString(pp={}, fo=(3, int(col[3])))
        y_miss = _FixedString(pp={}, fo=(3, -int(col[3])))
        e = math.exp(eps)
        assert acceptance_prob(v, y_match, s) == pytest.approx(e / (1 + e), abs=1e-12)
        assert acceptance_prob(v, y_miss, s) == pytest.approx(1 / (1 + e), abs=1e-12)

    def test_all_mismatch_minimum_positive(self):
        s = composite_toy()
        v = 1
        eps = s.eps_channel
        code = s.code
        k_active = channel_of(s.seeds[0], v, s.K)
        cw = code.encode(v)
        col = phi_column(PUB, v, s.m_fo)
        y = _FixedString(
            pp={(0, k): (0, -int(cw[0])) for k in range(s.K)},
            fo=(0, -int(col[0])),
        )
        p = acceptance_prob(v, y, s)
        expected = 0.5 * (2 / (math.exp(eps) + 1)) ** 2
        assert p == pytest.approx(expected, abs=1e-12)
        assert p > 0

    def test_mean_acceptance_is_half_exact(self):
        # Summation over the full finite component space.
        s = composite_toy(m_fo=2, d=4)
        m_pp = s.code.m
        cell = 1.0 / (2 * m_pp) ** (s.K * s.T) / (2 * s.m_fo)
        for v in range(4):
            total = sum(
                cell * acceptance_prob(v, y, s) for y in _enumerate_strings(s)
            )
            assert total == pytest.approx(0.5, abs=1e-12)

    def test_degenerate_structure_half(self):
        s = OneBitStructure(pub=PUB, run_id=0, K=1, T=0, eps_channel=0.1, m_fo=0)
        y = _FixedString(pp={}, fo=None)
        assert acceptance_prob(0, y, s) == 0.5

    def test_empirical_acceptance_rate(self):
        s = composite_toy()
        rng = np.random.default_rng(0)
        users = 100_000
        items = rng.integers(0, 4, users)
        bits = sum(
            onebit_client(int(items[u]), PublicString(structure=s, user_id=u), s, rng)
            for u in range(users)
        )
        assert abs(bits / users - 0.5) <= 0.01


class TestPrivacy:
    def test_bit_channel_audit_exhaustive(self):
        # For every public string, the item -> bit channel stays within the
        # total budget; the y-marginal channel is exactly uninformative.
        s = composite_toy(m_fo=2, d=4)
        total = s.total_eps()
        mean_p = np.zeros(4)
        cell = 1.0 / (2 * s.code.m) ** (s.K * s.T) / (2 * s.m_fo)
        worst = 0.0
        for y in _enumerate_strings(s):
            p = np.array([acceptance_prob(v, y, s) for v in range(4)])
            mean_p += cell * p
            ch = ChannelMatrix(
                inputs=list(range(4)),
                outputs=[1, 0],
                probs=np.column_stack([p, 1 - p]),
            )
            worst = max(worst, audit_ldp(ch).eps_observed)
        assert worst <= total + 1e-9
        assert np.allclose(mean_p, 0.5, atol=1e-12)

    def test_likelihood_ratios_bounded_both_ways(self):
        s = composite_toy(m_fo=2, d=4)
        total = s.total_eps()
        lo, hi = math.exp(-total), math.exp(total)
        for y in itertools.islice(_enumerate_strings(s), 0, 4096, 37):
            ps = [acceptance_prob(v, y, s) for v in range(4)]
            for pa, pb in itertools.permutations(ps, 2):
                assert lo - 1e-12 <= pa / pb <= hi + 1e-12
                assert lo - 1e-12 <= (1 - pa) / (1 - pb) <= hi + 1e-12


class TestServerCollect:
    def test_all_rejected_empty(self):
        s = composite_toy()
        assert onebit_server_collect({0: 0, 1: 0}, s) == []

    def test_accepted_strings_regenerated(self):
        s = composite_toy()
        accepted = onebit_server_collect({0: 1, 1: 0, 2: 1}, s)
        assert [u for u, _ in accepted] == [0, 2]
        agg = collect_fo_aggregate(accepted, s)
        assert agg.n_total == 2

    def test_conditional_distribution_matches_randomizer(self):
        # Oracle-only toy: the accepted strings' empirical distribution over
        # the 2 m_fo outcomes matches the true report distribution (TV).
        m_fo, eps = 16, math.log(2)
        s = OneBitStructure(pub=PUB, run_id=3, K=1, T=0, eps_channel=eps, m_fo=m_fo)
        v = 3
        rng = np.random.default_rng(1)
        counts = np.zeros(2 * m_fo)
        accepted = 0
        for u in range(60_000):
            y = PublicString(structure=s, user_id=u)
            if rng.random() < acceptance_prob(v, y, s):
                j, sign = y.fo_component()
                counts[2 * j + (0 if sign > 0 else 1)] += 1
                accepted += 1
        empirical = counts / accepted
        exact = report_distribution(phi_column(PUB, v, m_fo), m_fo, eps)
        tv = 0.5 * np.abs(empirical - exact).sum()
        assert tv <= 0.02
        assert abs(accepted / 60_000 - 0.5) < 0.01

    def test_component_conditional_on_composite(self):
        # The active hash channel's component, conditioned on acceptance,
        # is distributed as the randomized codeword of the user's item.
        s = composite_toy()
        v = 2
        m_pp = s.code.m
        k_active = channel_of(s.seeds[0], v, s.K)
        rng = np.random.default_rng(2)
        counts = np.zeros(2 * m_pp)
        accepted = 0
        for u in range(60_000):
            y = PublicString(structure=s, user_id=u)
            if rng.random() < acceptance_prob(v, y, s):
                j, sign = y.pp_component(0, k_active)
                counts[2 * j + (0 if sign > 0 else 1)] += 1
                accepted += 1
        empirical = counts / accepted
        exact = report_distribution(s.code.encode(v), m_pp, s.eps_channel)
        assert 0.5 * np.abs(empirical - exact).sum() <= 0.02

    def test_pp_aggregates_sizes(self):
        s = composite_toy()
        accepted = onebit_server_collect({u: 1 for u in range(10)}, s)
        aggs = collect_pp_aggregates(accepted, s)
        assert set(aggs) == {(0, 0), (0, 1)}
        assert all(a.n_total == 10 for a in aggs.values())
