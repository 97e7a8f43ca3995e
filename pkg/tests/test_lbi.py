import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import naive_lbi_double, naive_lbi_fixed
from trendbreak.fixed import FixedFormat, quantize_array
from trendbreak.lbi import (
    CoefficientState,
    SolverConfig,
    build_report,
    detect,
    extract_support,
    initial_state,
    iterate,
    iterate_once,
    ols_debias,
    shrink,
    solve,
)
from trendbreak.signal import BreakProfile, Signal, generate_testbench, scale_signal, synthesize_profile

FINITE = st.floats(-100, 100, allow_nan=False)


class TestShrink:
    def test_examples(self):
        assert shrink(0.5, 0.2) == pytest.approx(0.3)
        assert shrink(-0.1, 0.2) == 0.0
        assert shrink(-0.5, 0.2) == pytest.approx(-0.3)

    @given(FINITE)
    def test_identity_at_zero(self, v):
        assert shrink(v, 0.0) == v

    @given(FINITE, FINITE, st.floats(0, 10))
    def test_non_expansive(self, a, b, lam):
        assert abs(shrink(a, lam) - shrink(b, lam)) <= abs(a - b) + 1e-12

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            shrink(1.0, -0.1)

    def test_array(self):
        np.testing.assert_allclose(shrink(np.array([1.0, -1.0, 0.1]), 0.5), [0.5, -0.5, 0.0])


class TestConfig:
    def test_exactly_one_budget(self):
        with pytest.raises(ValueError):
            SolverConfig(1.0)
        with pytest.raises(ValueError):
            SolverConfig(1.0, total_iterations=5, iterations_per_sample=2)

    def test_budget_resolution(self):
        assert SolverConfig(1.0, iterations_per_sample=650).iterations(500) == 325000
        assert SolverConfig(1.0, total_iterations=7).iterations(500) == 7

    @pytest.mark.parametrize("kwargs", [{"lam": -1.0, "total_iterations": 1}, {"lam": 1.0, "total_iterations": 0},
                                        {"lam": 1.0, "total_iterations": 1, "domain": "float"}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestIterateOnce:
    def test_single_sample(self):
        cfg = SolverConfig(0.0, total_iterations=1)
        state = iterate_once(initial_state(1, cfg), Signal([1.0]), cfg)
        assert state.beta.tolist() == [1.0]

    def test_two_samples_hand_executed(self):
        cfg = SolverConfig(0.5, total_iterations=1)
        state = iterate_once(initial_state(2, cfg), Signal([1.0, 1.0]), cfg)
        assert state.v.tolist() == [1.0, 0.0]
        assert state.beta.tolist() == [0.5, 0.0]
        assert naive_lbi_double([1.0, 1.0], 0.5, 1) == ([0.5, 0.0], [1.0, 0.0])

    def test_counters(self):
        cfg = SolverConfig(0.5, total_iterations=1)
        state = initial_state(3, cfg)
        for expected_k in (2, 3, 1, 2):
            state = iterate_once(state, Signal([1.0, 2.0, 3.0]), cfg)
            assert state.k == expected_k
        assert state.iterations_done == 4

    def test_input_not_mutated(self):
        cfg = SolverConfig(0.0, total_iterations=1)
        state = initial_state(2, cfg)
        iterate_once(state, Signal([1.0, 1.0]), cfg)
        assert state.beta.tolist() == [0.0, 0.0] and state.i == 1

    @pytest.mark.parametrize("domain", ["double", "fixed"])
    def test_zero_error_leaves_vectors(self, domain):
        # beta = [0.25, 0.25], y[2] = 0.5: at k=2 the error vanishes
        cfg = SolverConfig(0.0, total_iterations=1, domain=domain)
        state = initial_state(2, cfg, beta_start=[0.25, 0.25], v_start=[0.25, 0.25])
        state.i, state.k = 2, 2
        new = iterate_once(state, Signal([0.9, 0.5]), cfg)
        np.testing.assert_array_equal(new.beta, state.beta)
        np.testing.assert_array_equal(new.v, state.v)
        assert (new.i, new.k) == (3, 1)

    @pytest.mark.parametrize("domain", ["double", "fixed"])
    def test_untouched_tail(self, domain, rng):
        n = 30
        cfg = SolverConfig(0.1, total_iterations=1, domain=domain)
        state = initial_state(n, cfg, rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n))
        y = Signal(rng.uniform(-1, 1, n))
        for _ in range(2 * n):
            k = state.k
            new = iterate_once(state, y, cfg)
            np.testing.assert_array_equal(new.beta[k:], state.beta[k:])
            np.testing.assert_array_equal(new.v[k:], state.v[k:])
            state = new

    @pytest.mark.parametrize("domain", ["double", "fixed"])
    def test_beta_v_linkage(self, domain, rng):
        n = 25
        cfg = SolverConfig(0.3, total_iterations=1, domain=domain)
        y = scale_signal(Signal(rng.normal(size=n)))
        state = initial_state(n, cfg)
        for _ in range(3 * n):
            state = iterate_once(state, y, cfg)
            if domain == "double":
                np.testing.assert_array_equal(state.beta, shrink(state.v, 0.3))
            else:
                lam = cfg.lam_raw()
                expected = np.sign(state.v) * np.maximum(np.abs(state.v) - lam, 0)
                np.testing.assert_array_equal(state.beta, expected)


class TestAgainstNaiveOracle:
    @given(st.integers(1, 12), st.floats(0, 1.5), st.integers(1, 60), st.integers(0, 2**32 - 1))
    def test_double(self, n, lam, iters, seed):
        y = scale_signal(Signal(np.random.default_rng(seed).normal(size=n) + 0.01))
        state = solve(y, SolverConfig(lam, total_iterations=iters))
        beta, v = naive_lbi_double(y.samples.tolist(), lam, iters)
        np.testing.assert_allclose(state.beta, beta, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(state.v, v, rtol=1e-12, atol=1e-12)

    @given(st.integers(1, 12), st.floats(0, 1.5), st.integers(1, 80), st.integers(0, 2**32 - 1))
    def test_fixed_bit_exact(self, n, lam, iters, seed):
        y = scale_signal(Signal(np.random.default_rng(seed).normal(size=n) + 0.01))
        cfg = SolverConfig(lam, total_iterations=iters, domain="fixed")
        state = solve(y, cfg)
        beta, v, events = naive_lbi_fixed(quantize_array(y.samples).tolist(), cfg.lam_raw(), iters)
        assert state.beta.tolist() == beta
        assert state.v.tolist() == v
        assert state.saturation_events == events

    def test_fixed_saturation_counted(self):
        # unscaled input of magnitude 7 produces errors beyond the word range
        y = Signal([7.0, -7.9, 7.9, -7.9])
        cfg = SolverConfig(0.0, total_iterations=40, domain="fixed")
        state = solve(y, cfg)
        _, _, events = naive_lbi_fixed(quantize_array(y.samples).tolist(), 0, 40)
        assert state.saturation_events == events > 0

    def test_starts_are_used(self):
        y = Signal([0.2, 0.4, 0.1])
        b0, v0 = [0.1, 0.0, -0.2], [0.3, 0.1, -0.4]
        state = solve(y, SolverConfig(0.2, total_iterations=9), b0, v0)
        beta, v = naive_lbi_double(y.samples.tolist(), 0.2, 9, b0, v0)
        np.testing.assert_allclose(state.beta, beta, atol=1e-15)
        np.testing.assert_allclose(state.v, v, atol=1e-15)


class TestSolve:
    def test_single_iteration_equals_iterate_once(self, rng):
        y = scale_signal(Signal(rng.normal(size=9)))
        for domain in ("double", "fixed"):
            cfg = SolverConfig(0.2, total_iterations=1, domain=domain)
            np.testing.assert_array_equal(solve(y, cfg).beta, iterate_once(initial_state(9, cfg), y, cfg).beta)

    def test_chunked_equals_single_run(self, rng):
        y = scale_signal(Signal(rng.normal(size=17)))
        for domain in ("double", "fixed"):
            cfg = SolverConfig(0.2, total_iterations=100, domain=domain)
            state = initial_state(17, cfg)
            for chunk in (13, 0, 50, 37):
                state = iterate(state, y, cfg, chunk)
            whole = solve(y, cfg)
            np.testing.assert_array_equal(state.beta, whole.beta)
            np.testing.assert_array_equal(state.v, whole.v)

    @pytest.mark.parametrize("domain", ["double", "fixed"])
    def test_deterministic(self, domain):
        _, y = generate_testbench(80, 4, seed=9)
        y = scale_signal(y)
        cfg = SolverConfig(1.0, iterations_per_sample=50, domain=domain)
        a, b = solve(y, cfg), solve(y, cfg)
        assert a.beta.tobytes() == b.beta.tobytes() and a.v.tobytes() == b.v.tobytes()

    def test_single_break_at_40(self):
        p = BreakProfile(100, {40: 1.0})
        y = scale_signal(synthesize_profile(p, 0.0, seed=0))
        cfg = SolverConfig(1.0, iterations_per_sample=650)
        state = solve(y, cfg)
        assert extract_support(state, 0.5, relative=True) == [40]
        report = ols_debias(y, [40])
        assert report.magnitudes[0] == pytest.approx(1.0, abs=1e-6)

    def test_testbench_recovery_beats_zero_estimator(self):
        p, y = generate_testbench(1000, 10, noise_sigma=0.05, seed=4)
        report = detect(y, SolverConfig(1.0, iterations_per_sample=150), prune=1e-9)
        est = report.dense(1000)
        assert np.sum((est - p.dense()) ** 2) < np.sum(p.dense() ** 2)

    def test_fixed_and_double_close(self):
        p, y = generate_testbench(300, 6, seed=12)
        ys = scale_signal(y)
        d = solve(ys, SolverConfig(1.0, iterations_per_sample=300))
        f = solve(ys, SolverConfig(1.0, iterations_per_sample=300, domain="fixed"))
        ideal = p.dense()
        err_d = np.sum((d.beta_values() * ys.scale_factor - ideal) ** 2)
        err_f = np.sum((f.beta_values() * ys.scale_factor - ideal) ** 2)
        assert abs(err_f - err_d) <= 0.05 * err_d

    def test_length_mismatch(self):
        cfg = SolverConfig(1.0, total_iterations=3)
        with pytest.raises(ValueError):
            iterate(initial_state(4, cfg), Signal([1.0, 2.0]), cfg, 3)

    def test_domain_mismatch(self):
        cfg = SolverConfig(1.0, total_iterations=3)
        state = initial_state(2, SolverConfig(1.0, total_iterations=3, domain="fixed"))
        with pytest.raises(ValueError):
            iterate(state, Signal([1.0, 2.0]), cfg, 3)


class TestSaturationAudit:
    @pytest.mark.parametrize("seed", range(5))
    def test_scaled_testbench_never_saturates(self, seed):
        _, y = generate_testbench(300, 10, seed=seed)
        state = solve(scale_signal(y), SolverConfig(1.0, iterations_per_sample=650, domain="fixed"))
        assert state.saturation_events == 0
        assert state.max_abs_sum <= 2.0


class TestSupportAndOls:
    def _state(self, beta, domain="double"):
        arr = np.asarray(beta)
        return CoefficientState(arr, np.zeros_like(arr), domain=domain)

    def test_extract_examples(self):
        assert extract_support(self._state([0.0, 0.0, 0.0])) == []
        assert extract_support(self._state([0.0, 0.3, 0.0])) == [2]
        assert extract_support(self._state(np.array([0, 1, -1, 0], dtype=np.int64), "fixed")) == [2, 3]

    def test_extract_thresholds(self):
        state = self._state([0.1, -0.6, 0.3, 1.0])
        assert extract_support(state, 0.3) == [2, 4]
        assert extract_support(state, 0.5, relative=True) == [2, 4]
        with pytest.raises(ValueError):
            extract_support(state, -1.0)

    def test_ols_noiseless_step(self):
        y = synthesize_profile(BreakProfile(10, {5: 1.0}), 0.0, seed=0)
        assert ols_debias(y, [5]).magnitudes == [1.0]

    def test_ols_constant(self):
        assert ols_debias(Signal([2.5] * 6), [1]).magnitudes[0] == pytest.approx(2.5, abs=1e-14)

    def test_ols_descaled(self):
        y = scale_signal(synthesize_profile(BreakProfile(10, {3: 4.0, 7: -1.0}), 0.0, seed=0))
        np.testing.assert_allclose(ols_debias(y, [3, 7]).magnitudes, [4.0, -1.0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_ols_against_normal_equations(self, seed):
        rng = np.random.default_rng(seed)
        n = 60
        support = sorted(rng.choice(n, size=5, replace=False) + 1)
        p = BreakProfile(n, {int(s): float(rng.uniform(-2, 2)) for s in support})
        y = synthesize_profile(p, 0.0, seed=seed)
        report = ols_debias(y, support)
        np.testing.assert_allclose(report.magnitudes, [p.breaks[s] for s in support], atol=1e-9)
        # noisy signal against the dense normal equations
        noisy = synthesize_profile(p, 0.3, seed=seed)
        a = np.tril(np.ones((n, n)))[:, np.asarray(support) - 1]
        oracle = np.linalg.solve(a.T @ a, a.T @ noisy.samples)
        np.testing.assert_allclose(ols_debias(noisy, support).magnitudes, oracle, atol=1e-9)

    @pytest.mark.parametrize("support", [[], [2, 2], [0], [11]])
    def test_ols_rejects(self, support):
        with pytest.raises(ValueError):
            ols_debias(Signal(np.ones(10)), support)

    def test_prune_drops_numerical_noise(self):
        y = synthesize_profile(BreakProfile(10, {5: 1.0}), 0.0, seed=0)
        cfg = SolverConfig(1.0, iterations_per_sample=650)
        state = solve(y, cfg)
        report = build_report(y, state, cfg, [4, 5, 6], prune=1e-9)
        assert report.support == [5]
        assert report.magnitudes[0] == pytest.approx(1.0, abs=1e-12)

    def test_report_without_ols(self):
        y = scale_signal(Signal([0, 0, 2, 2.0]))
        cfg = SolverConfig(0.5, iterations_per_sample=300)
        report = detect(y, cfg, ols=False)
        assert not report.debiased
        assert report.to_dict()["lambda"] == 0.5
        assert report.iterations == 1200


class TestRecovery:
    @pytest.mark.parametrize("seed", range(10))
    def test_noiseless_single_break(self, seed):
        rng = np.random.default_rng(100 + seed)
        pos = int(rng.integers(1, 201))
        mag = float(rng.uniform(0.5, 1.5) * rng.choice([-1, 1]))
        p = BreakProfile(200, {pos: mag})
        y = synthesize_profile(p, 0.0, seed=seed)
        report = detect(y, SolverConfig(1.0, iterations_per_sample=650))
        keep = [(s, m) for s, m in zip(report.support, report.magnitudes) if abs(m) > 0.5 * abs(mag)]
        assert [s for s, _ in keep] == [pos]
        refit = ols_debias(y, [pos]).magnitudes[0]
        assert refit == pytest.approx(mag, abs=1e-6)


@given(st.lists(st.integers(1, 40), min_size=1, max_size=8, unique=True), st.integers(0, 2**32 - 1))
def test_ols_matches_generic_least_squares(support, seed):
    y = Signal(np.random.default_rng(seed).normal(size=40))
    a = np.tril(np.ones((40, 40)))[:, np.sort(support) - 1]
    oracle, *_ = np.linalg.lstsq(a, y.samples, rcond=None)
    np.testing.assert_allclose(ols_debias(y, support).magnitudes, oracle, atol=1e-10)
