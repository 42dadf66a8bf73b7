import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdestride.dictionary import (
    PRESETS,
    DesignSystem,
    assemble_design,
    enumerate_terms,
    load_design,
    preset_terms,
    raw_coefficients,
    save_design,
    spatial_derivative,
    standardize,
    time_derivative,
)
from pdestride.field import Field, SampleSet, sample_points
from pdestride.solvers import ols_refit


def _space_field(fn, n=21, dx=0.1, nt=4):
    x = dx * np.arange(n) - 1.0
    vals = np.repeat(fn(x)[:, None], nt, axis=1)
    return Field("u", vals, (dx, 0.01)), x


class TestDerivatives:
    def test_forward_difference_quadratic(self):
        t = 0.1 * np.arange(5)
        f = Field("u", np.tile(t**2, (3, 1)), (1.0, 0.1))
        d = time_derivative(f)
        assert d.values[1, 0] == pytest.approx(0.1, abs=1e-15)
        assert np.all(np.isnan(d.values[:, -1]))

    def test_constant_in_time(self):
        f = Field("u", np.tile(np.arange(4.0)[:, None], (1, 6)), (1.0, 0.5))
        assert np.all(time_derivative(f).values[:, :-1] == 0.0)

    def test_exponential(self):
        t = 0.01 * np.arange(4)
        f = Field("u", np.tile(np.exp(t), (3, 1)), (1.0, 0.01))
        assert time_derivative(f).values[0, 0] == pytest.approx(1.00502, abs=1e-5)
        assert time_derivative(f).values[0, 0] == pytest.approx((np.exp(0.01) - 1) / 0.01, abs=1e-12)

    @pytest.mark.parametrize("dx", [0.01, 0.3, 1.7])
    def test_second_order_exact_on_quadratic(self, dx):
        f, _ = _space_field(lambda x: x**2, dx=dx)
        d = spatial_derivative(f, 0, 2).values[1:-1]
        assert np.allclose(d, 2.0, atol=1e-9)

    def test_first_order_exact_on_linear(self):
        f, _ = _space_field(lambda x: x)
        assert np.allclose(spatial_derivative(f, 0, 1).values[1:-1], 1.0, atol=1e-12)

    def test_sine_taylor(self):
        dx = 0.01
        x = dx * np.arange(-5, 6)
        f = Field("u", np.tile(np.sin(x)[:, None], (1, 3)), (dx, 1.0))
        d = spatial_derivative(f, 0, 1).values[5, 0]
        assert d == pytest.approx(1 - dx**2 / 6, abs=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(
        coeffs=st.lists(st.floats(-3, 3), min_size=4, max_size=4),
        dx=st.sampled_from([0.25, 0.5, 1.0]),
    )
    def test_exactness_on_low_degree_polynomials(self, coeffs, dx):
        a0, a1, a2, a3 = coeffs
        quad, _ = _space_field(lambda x: a0 + a1 * x + a2 * x**2, dx=dx)
        d1 = spatial_derivative(quad, 0, 1).values[1:-1, 0]
        xs = dx * np.arange(21) - 1.0
        assert np.allclose(d1, (a1 + 2 * a2 * xs)[1:-1], atol=1e-12 * (1 + 10 * max(map(abs, coeffs))) / dx)
        cubic, _ = _space_field(lambda x: a0 + a1 * x + a2 * x**2 + a3 * x**3, dx=dx)
        d2 = spatial_derivative(cubic, 0, 2).values[1:-1, 0]
        assert np.allclose(d2, (2 * a2 + 6 * a3 * xs)[1:-1], atol=1e-11 / dx**2)

    def test_composed_orders_and_invalid_border(self):
        f, x = _space_field(lambda x: x**4, n=31)
        d4 = spatial_derivative(f, 0, 4).values[:, 0]
        assert np.all(np.isnan(d4[:2])) and np.all(np.isnan(d4[-2:]))
        assert np.allclose(d4[2:-2], 24.0, atol=1e-6)
        d3 = spatial_derivative(f, 0, 3).values[:, 0]
        assert np.all(np.isnan(d3[:2])) and np.allclose(d3[2:-2], 24 * x[2:-2], atol=1e-6)

    def test_bad_axis_and_order(self):
        f, _ = _space_field(lambda x: x)
        with pytest.raises(ValueError):
            spatial_derivative(f, 1, 1)
        with pytest.raises(ValueError):
            spatial_derivative(f, 0, 9)
        with pytest.raises(ValueError):
            spatial_derivative(f, 0, 3, d_max=2)


class TestEnumeration:
    def test_counts(self):
        assert len(enumerate_terms(1, 3, 4, 1)) == 1 + 3 + 4 * 4
        assert [t.label for t in enumerate_terms(1, 1, 1, 1)] == ["1", "u", "u_x", "u*u_x"]

    def test_preset_sizes(self):
        for name, cfg in PRESETS.items():
            assert len(preset_terms(name)) == cfg["p"]
        assert len(preset_terms("gray-scott-p69", names=["u", "v"])) == 69

    def test_burgers_p19_labels(self):
        labels = [t.label for t in preset_terms("burgers-p19")]
        assert labels[:8] == ["1", "u", "u^2", "u^3", "u_x", "u_xx", "u_xxx", "u_xxxx"]
        assert "u*u_x" in labels and "u_xx" in labels
        assert labels[-1] == "u^3*u_xxx"

    def test_presets_are_prefixes_and_contain_truth(self):
        p19 = [t.label for t in preset_terms("burgers-p19")]
        for name in ("burgers-p11", "burgers-p15"):
            labels = [t.label for t in preset_terms(name)]
            assert labels == p19[: len(labels)]
            assert {"u*u_x", "u_xx"} <= set(labels)
        gs = {t.label for t in preset_terms("gray-scott-p26", names=["u", "v"])}
        assert {"1", "u", "u*v^2", "u_xx", "u_yy", "u_zz", "v", "v_xx"} <= gs

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            preset_terms("heat-p3")

    def test_term_invariants(self):
        for t in enumerate_terms(2, 3, 2, 3):
            assert t.degree <= 3
            if t.derivative is not None:
                assert 1 <= t.derivative[2] <= 2
            assert t.is_constant == (t.label == "1")

    def test_labels_stable(self):
        a = [t.label for t in enumerate_terms(2, 2, 2, 2)]
        b = [t.label for t in enumerate_terms(2, 2, 2, 2)]
        assert a == b and len(set(a)) == len(a)


class TestAssembly:
    def test_constant_and_product_columns(self):
        f, x = _space_field(lambda x: x, n=11, dx=0.5)
        terms = enumerate_terms(1, 1, 1, 1)
        idx = np.array([[6, 1], [3, 2]])  # x[6] = 2.0
        d = assemble_design([f], 0, terms, SampleSet(idx))
        assert np.all(d.theta[:, 0] == 1.0)
        assert x[6] == 2.0
        assert d.theta[0, 3] == pytest.approx(2.0)
        assert d.labels == ("1", "u", "u_x", "u*u_x")
        assert np.all(d.ut == 0.0)

    def test_boundary_sample_rejected(self):
        f, _ = _space_field(lambda x: x, n=11)
        with pytest.raises(RuntimeError):
            assemble_design([f], 0, enumerate_terms(1, 1, 2, 1), SampleSet(np.array([[0, 1]])))

    def test_matches_full_field_derivatives(self, burgers_short):
        terms = preset_terms("burgers-p19")
        s = sample_points(burgers_short, None, 100, seed=2, margin=2)
        d = assemble_design([burgers_short], "u", terms, s)
        i, t = s.indices[7]
        u = burgers_short.values[i, t]
        uxx = spatial_derivative(burgers_short, 0, 2).values[i, t]
        ux = spatial_derivative(burgers_short, 0, 1).values[i, t]
        assert d.theta[7, d.labels.index("u_xx")] == pytest.approx(uxx, rel=1e-12)
        assert d.theta[7, d.labels.index("u*u_x")] == pytest.approx(u * ux, rel=1e-12)
        assert d.ut[7] == pytest.approx(time_derivative(burgers_short).values[i, t], rel=1e-12)

    def test_deterministic(self, burgers_short):
        terms = preset_terms("burgers-p15")
        s = sample_points(burgers_short, None, 80, seed=5, margin=2)
        a = assemble_design([burgers_short], 0, terms, s)
        b = assemble_design([burgers_short], 0, terms, s)
        assert a.theta.tobytes() == b.theta.tobytes() and a.ut.tobytes() == b.ut.tobytes()

    def test_burgers_truth_explains_response(self, burgers):
        terms = preset_terms("burgers-p19")
        s = sample_points(burgers, None, 250, seed=0, margin=2)
        d = assemble_design([burgers], 0, terms, s)
        k = [d.labels.index("u*u_x"), d.labels.index("u_xx")]
        coef = ols_refit(d.theta, d.ut, k)
        rel = np.linalg.norm(d.ut - d.theta @ coef.values) / np.linalg.norm(d.ut)
        assert rel < 0.01
        assert coef.values[k[0]] == pytest.approx(-1.0, rel=0.02)
        assert coef.values[k[1]] == pytest.approx(0.1, rel=0.02)


class TestStandardize:
    def test_closed_form(self):
        d = DesignSystem(np.array([[1.0], [2.0], [3.0]]), [1.0, 2.0, 4.0], ["a"])
        s = standardize(d)
        assert np.allclose(s.theta[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4)
        assert abs(s.ut.mean()) <= 1e-12

    def test_moments_and_constant_dropped(self):
        rng = np.random.default_rng(0)
        theta = np.column_stack([np.ones(30), rng.standard_normal((30, 3)) * 5 + 2])
        s = standardize(DesignSystem(theta, rng.standard_normal(30), ["1", "a", "b", "c"]))
        assert s.labels == ("a", "b", "c")
        assert np.all(np.abs(s.theta.mean(axis=0)) <= 1e-10)
        assert np.all(np.abs(s.theta.var(axis=0) - 1) <= 1e-8)
        assert abs(s.ut.mean()) <= 1e-10
        assert s.standardization["intercept_label"] == "1"

    def test_degenerate_column_dropped_with_warning(self):
        rng = np.random.default_rng(1)
        theta = np.column_stack([rng.standard_normal(10), np.full(10, 2.0)])
        with pytest.warns(RuntimeWarning, match="zero-variance"):
            s = standardize(DesignSystem(theta, rng.standard_normal(10), ["a", "b"]))
        assert s.labels == ("a",)
        assert s.standardization["dropped"] == [{"label": "b", "reason": "degenerate"}]

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(5, 60), p=st.integers(1, 6))
    def test_idempotent(self, seed, n, p):
        rng = np.random.default_rng(seed)
        d = DesignSystem(rng.standard_normal((n, p)) * 3 + 1, rng.standard_normal(n), [str(k) for k in range(p)])
        once = standardize(d)
        twice = standardize(once)
        assert np.allclose(twice.theta, once.theta, atol=1e-10)
        assert np.allclose(twice.ut, once.ut, atol=1e-10)
        xi1, b1 = raw_coefficients(once, np.ones(once.p))
        xi2, b2 = raw_coefficients(twice, np.ones(twice.p))
        assert np.allclose(xi1, xi2, rtol=1e-8) and b1 == pytest.approx(b2, rel=1e-8, abs=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), mask=st.integers(1, 31))
    def test_back_transform_matches_raw_ols(self, seed, mask):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((50, 5)) * rng.uniform(0.1, 10, 5) + rng.uniform(-5, 5, 5)
        ut = raw @ rng.standard_normal(5) + 3.0 + 0.1 * rng.standard_normal(50)
        d = DesignSystem(np.column_stack([np.ones(50), raw]), ut, ["1", "a", "b", "c", "d", "e"])
        s = standardize(d)
        support = [k for k in range(5) if mask >> k & 1]
        beta = np.zeros(5)
        sol, *_ = np.linalg.lstsq(s.theta[:, support], s.ut, rcond=None)
        beta[support] = sol
        xi, b0 = raw_coefficients(s, beta)
        oracle = ols_refit(d.theta, d.ut, [k + 1 for k in support], intercept=True)
        assert np.allclose(xi, oracle.values, rtol=1e-8, atol=1e-10)
        assert b0 == pytest.approx(oracle.intercept, rel=1e-8, abs=1e-10)


class TestDesignFiles:
    def test_roundtrip(self, tmp_path, burgers_short):
        terms = preset_terms("burgers-p11")
        s = sample_points(burgers_short, None, 60, seed=3, margin=2)
        d = assemble_design([burgers_short], 0, terms, s, {"sigma": 0.02})
        save_design(d, tmp_path / "des.json")
        e = load_design(tmp_path / "des")
        assert e.theta.tobytes() == d.theta.tobytes() and e.ut.tobytes() == d.ut.tobytes()
        assert e.labels == d.labels and e.provenance["sigma"] == 0.02

    def test_standardized_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            s = standardize(DesignSystem(rng.standard_normal((9, 2)), rng.standard_normal(9), ["a", "b"]))
        save_design(s, tmp_path / "s")
        assert load_design(tmp_path / "s.json").standardization == s.standardization
