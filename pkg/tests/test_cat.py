import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edusim.cat import (
    SELECTORS, CatSession, ItemPool, PoolExhausted, ReplayResponder, bernoulli_kl,
    eap_estimate, fsi_scores, fsi_select, kli_delta, kli_select, maat_select, make_selector,
    post_session_survey, register_selector, run_session,
)
from edusim.cognition import IrtModel, infer_ability
from edusim.data import Exercise, make_log

from conftest import make_agent


def logistic(z):
    return 1 / (1 + math.exp(-z))


def oracle_fisher(theta, a, b):
    p = logistic(a * (theta - b))
    return a * a * p * (1 - p)


def oracle_kli(theta, a, b, n, points):
    delta = 3 / math.sqrt(max(n, 1))
    lo, step = theta - delta, 2 * delta / (points - 1)

    def kl(t):
        p = min(max(logistic(a * (theta - b)), 1e-12), 1 - 1e-12)
        q = min(max(logistic(a * (t - b)), 1e-12), 1 - 1e-12)
        return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))

    vals = [kl(lo + j * step) for j in range(points)]
    return step * (sum(vals) - 0.5 * (vals[0] + vals[-1]))


def brute_argmax(ids, score):
    best, best_id = -math.inf, None
    for i in sorted(ids):
        s = score(i)
        if s > best:
            best, best_id = s, i
    return best_id


def random_pool(rng, n=50, n_concepts=8):
    ids = [f"i{j:03d}" for j in range(n)]
    return ItemPool.build(ids, rng.uniform(0.5, 2.5, n), rng.uniform(-3, 3, n),
                          [f"k{j % n_concepts}" for j in rng.permutation(n)])


def instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        pool = random_pool(rng)
        administered = list(rng.choice(pool.ids, rng.integers(0, 10), replace=False))
        yield float(rng.uniform(-3, 3)), pool, administered, rng


class TestFsi:
    def test_item_at_theta_wins_on_equal_a(self):
        pool = ItemPool.build(["a", "b", "c"], [1.0, 1.0, 1.0], [-1.0, 0.4, 2.0], "xyz")
        assert fsi_select(0.4, pool, []) == "b"

    def test_brute_force(self):
        for theta, pool, adm, _ in instances(100):
            remaining = [i for i in pool.ids if i not in adm]
            expect = brute_argmax(remaining, lambda i: oracle_fisher(
                theta, pool.a[pool.index(i)], pool.b[pool.index(i)]))
            assert fsi_select(theta, pool, adm) == expect

    def test_tie_goes_to_lowest_id(self):
        pool = ItemPool.build(["q2", "q1", "q3"], [1.0] * 3, [0.0] * 3, "AAA")
        assert fsi_select(0.0, pool, []) == "q1"
        assert fsi_select(0.0, pool, ["q1"]) == "q2"

    def test_empty_pool(self):
        pool = ItemPool.build(["a"], [1.0], [0.0], "A")
        with pytest.raises(PoolExhausted):
            fsi_select(0.0, pool, ["a"])

    @given(st.floats(0.01, 100))
    def test_scale_invariance(self, c):
        pool = random_pool(np.random.default_rng(1))
        scores = fsi_scores(0.3, pool)
        assert pool.ids[int(np.argmax(scores * c))] == fsi_select(0.3, pool, [])


class TestKli:
    def test_kl_identity(self):
        assert bernoulli_kl(0.3, 0.3) == pytest.approx(0.0, abs=1e-15)

    def test_delta(self):
        assert kli_delta(0) == kli_delta(1) == 3.0
        assert kli_delta(100) == pytest.approx(0.3)

    def test_brute_force(self):
        for theta, pool, adm, rng in instances(100, seed=1):
            n = int(rng.integers(0, 20))
            remaining = [i for i in pool.ids if i not in adm]
            expect = brute_argmax(remaining, lambda i: oracle_kli(
                theta, pool.a[pool.index(i)], pool.b[pool.index(i)], n, 61))
            assert kli_select(theta, pool, adm, n) == expect

    def test_fine_grid_oracle(self):
        for theta, pool, adm, rng in instances(20, seed=2):
            n = int(rng.integers(1, 10))
            remaining = [i for i in pool.ids if i not in adm]
            expect = brute_argmax(remaining, lambda i: oracle_kli(
                theta, pool.a[pool.index(i)], pool.b[pool.index(i)], n, 1001))
            assert kli_select(theta, pool, adm, n) == expect

    def test_small_delta_approaches_fsi(self):
        # on a smooth pool with a shared slope, both pick the item nearest theta
        ids = [f"i{j:02d}" for j in range(30)]
        pool = ItemPool.build(ids, [1.2] * 30, np.linspace(-3, 3, 30), ["k"] * 30)
        for theta in (-1.3, 0.2, 2.1):
            assert kli_select(theta, pool, [], 100) == fsi_select(theta, pool, [])


class TestMaat:
    def test_alpha_one_is_fsi(self):
        for theta, pool, adm, rng in instances(100, seed=3):
            covered = set(rng.choice([f"k{j}" for j in range(8)], 3))
            assert maat_select(theta, pool, adm, covered, 1.0) == fsi_select(theta, pool, adm)

    def test_alpha_zero_picks_uncovered(self):
        pool = ItemPool.build(["a", "b", "c"], [2.0, 2.0, 0.5], [0.0, 0.1, 3.0], ["A", "A", "B"])
        assert maat_select(0.0, pool, [], {"A"}, 0.0) == "c"

    def test_brute_force(self):
        for theta, pool, adm, rng in instances(100, seed=4):
            covered = set(rng.choice([f"k{j}" for j in range(8)], 3))
            remaining = [i for i in pool.ids if i not in adm]
            top = max(oracle_fisher(theta, pool.a[pool.index(i)], pool.b[pool.index(i)])
                      for i in remaining)

            def score(i):
                j = pool.index(i)
                return (0.5 * oracle_fisher(theta, pool.a[j], pool.b[j]) / top
                        + 0.5 * (pool.concepts[j] not in covered))
            assert maat_select(theta, pool, adm, covered, 0.5) == brute_argmax(remaining, score)

    def test_bad_alpha(self):
        pool = ItemPool.build(["a"], [1.0], [0.0], "A")
        with pytest.raises(ValueError):
            maat_select(0.0, pool, [], set(), 1.5)


class TestEstimate:
    def test_no_responses(self):
        assert eap_estimate([], [], []) == pytest.approx(0.0, abs=1e-12)

    def test_five_correct(self):
        assert eap_estimate([1] * 5, [1.0] * 5, [0.0] * 5) > 0

    def test_agrees_with_infer_ability(self):
        rng = np.random.default_rng(0)
        ids = [f"e{j}" for j in range(15)]
        a, b = rng.uniform(0.5, 2.5, 15), rng.uniform(-3, 3, 15)
        model = IrtModel(a=dict(zip(ids, a)), b=dict(zip(ids, b)))
        ys = rng.integers(0, 2, 15)
        log = make_log("u", list(zip(ids, ys.tolist())))
        assert abs(eap_estimate(ys, a, b) - infer_ability(model, log)) <= 1e-9


def agent_setup(n_items=40, ability=0.0, seed=0):
    rng = np.random.default_rng(seed)
    ex = {f"e{j:03d}": Exercise(f"e{j:03d}", f"k{j % 6}") for j in range(n_items)}
    model = IrtModel(a={e: float(x) for e, x in zip(ex, rng.uniform(0.5, 2.5, n_items))},
                     b={e: float(x) for e, x in zip(ex, rng.uniform(-3, 3, n_items))})
    pool = ItemPool.from_model(ex.values(), model)
    agent = make_agent(ability=ability, exercises=ex, model=model, seed=seed)
    return agent, pool, ex


class TestSession:
    @pytest.mark.parametrize("name", ["fsi", "kli", "maat", "random"])
    def test_ten_rounds(self, name):
        agent, pool, ex = agent_setup()
        s = run_session(agent, make_selector(name), 10, pool, ex)
        assert len(s.administered) == len(s.responses) == len(s.theta_trajectory) == 10
        assert len(set(s.administered)) == 10 and s.selector == name

    def test_rerun_identical(self):
        runs = []
        for _ in range(2):
            agent, pool, ex = agent_setup(seed=3)
            runs.append(run_session(agent, make_selector("kli"), 10, pool, ex).to_json())
        assert runs[0] == runs[1]

    def test_exhaustion_keeps_partial_session(self):
        agent, pool, ex = agent_setup(n_items=4)
        with pytest.raises(PoolExhausted) as err:
            run_session(agent, make_selector("fsi"), 6, pool, ex)
        assert len(err.value.session.administered) == 4

    def test_rejections_recorded_as_incorrect(self):
        agent, pool, ex = agent_setup(ability=-3.0)
        for c in range(6):
            agent.proficiency.prof[f"k{c}"] = 0.0
        s = run_session(agent, make_selector("maat"), 10, pool, ex)
        assert all(r == 0 for r, ok in zip(s.responses, s.accepted) if not ok)

    def test_correct_only_trajectory_non_decreasing(self):
        violations = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            pool = random_pool(rng, n=30)
            ex = {i: Exercise(i, c) for i, c in zip(pool.ids, pool.concepts)}
            s = run_session(ReplayResponder("u", {i: 1 for i in pool.ids}),
                            make_selector("fsi"), 10, pool, ex)
            violations += int(np.any(np.diff(s.theta_trajectory) < -1e-12))
        assert violations == 0

    def test_open_registry(self):
        @register_selector("first")
        def _first(**_):
            class First:
                name = "first"

                def __call__(self, theta, pool, session):
                    return next(i for i in pool.ids if i not in session.administered)
            return First()
        try:
            agent, pool, ex = agent_setup()
            s = run_session(agent, make_selector("first"), 3, pool, ex)
            assert s.administered == list(pool.ids[:3])
        finally:
            del SELECTORS["first"]

    def test_unknown_selector_lists_registered(self):
        with pytest.raises(KeyError, match="fsi, kli, maat, random"):
            make_selector("nope")


class TestSurvey:
    def test_easy_session_satisfies(self):
        agent, pool, ex = agent_setup(ability=0.0)
        near = sorted(pool.ids, key=lambda i: abs(pool.b[pool.index(i)]))[:5]
        session = CatSession("u", "manual", 5, proficiency_before=agent.proficiency.snapshot())
        for i in near:
            out = agent.step(ex[i])
            session.administered.append(i)
            session.responses.append(out.final_label)
            session.accepted.append(out.accepted)
        result = post_session_survey(agent, session, pool)
        assert result.satisfaction and result.aod and session.survey is result

    def test_no_gain_without_improvement(self):
        agent, pool, ex = agent_setup()
        session = CatSession("u", "manual", 1, proficiency_before=agent.proficiency.snapshot())
        i = pool.ids[0]
        session.administered.append(i)
        session.accepted.append(True)
        session.responses.append(0)
        agent.proficiency.update(pool.concepts[0], 0)
        assert post_session_survey(agent, session, pool).gain is False

    def test_all_fields_populated(self):
        agent, pool, ex = agent_setup(seed=5)
        s = run_session(agent, make_selector("fsi"), 10, pool, ex)
        d = post_session_survey(agent, s, pool).to_dict()
        assert set(d) == {"satisfaction", "aod", "gain"}
        assert all(isinstance(v, bool) for v in d.values())
