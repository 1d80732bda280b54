import math

import numpy as np
import pytest
from scipy.optimize import brentq

from plasmafbp import (
    ContinuationStalled,
    Mesh,
    continue_in_k,
    curve_summary,
    gaussian_nonlinearity,
    make_spec,
    nonlinearity_from_text,
    solve_linear_k0,
    sweep_xi,
    tanh_nonlinearity,
    trace_mu_crossings,
    zero_nonlinearity,
)
from plasmafbp.continuation import count_crossings, extend_sweep
from plasmafbp.solver import ILL_CONDITIONED, verify_state

from test_solver import mms_spec


def gauss_roots(level):
    f = lambda t: t * math.exp(-t * t) - level
    peak = 1 / math.sqrt(2)
    return brentq(f, 0.0, peak, xtol=1e-15), brentq(f, peak, 10.0, xtol=1e-15)


@pytest.fixture(scope="module")
def tanh_curve(tanh_spec):
    return sweep_xi(tanh_spec, -5, 5, 0.1)


@pytest.fixture(scope="module")
def gauss_setup(line400):
    spec = make_spec(line400, gaussian_nonlinearity())
    return spec, sweep_xi(spec, -6, 6, 0.1)


@pytest.fixture(scope="module")
def wide_curve(tanh_cos_spec):
    return sweep_xi(tanh_cos_spec, -30, 30, 0.25)


def test_k_continuation_constant_family(tanh_spec):
    state, trace = continue_in_k(tanh_spec, 1.0)
    assert [round(t.k, 12) for t in trace] == [round(0.1 * i, 12) for i in range(11)]
    for t in trace:
        assert abs(t.state.mu - t.k * math.tanh(1.0)) <= 1e-9
        assert np.max(np.abs(t.state.u - 1.0)) <= 1e-12
    assert state.mu == pytest.approx(0.76159, abs=1e-5)


def test_zero_nonlinearity_single_step(line100):
    spec = make_spec(line100, zero_nonlinearity(), theta="0.2*cos(pi*x)")
    state, trace = continue_in_k(spec, 0.5)
    assert [t.k for t in trace] == [0.0, 1.0]
    ref = solve_linear_k0(spec, 0.5)
    assert np.max(np.abs(state.vector() - ref.vector())) <= 1e-12


def test_k_continuation_reaches_manufactured_solution():
    errs = []
    for n in (200, 400):
        spec = mms_spec(n)
        m = spec.mesh
        exact = np.cos(np.pi * m.coords[:, 0]) + 2
        xi = m.average(exact, 1.0)
        state, _ = continue_in_k(spec, xi)
        errs.append(np.max(np.abs(state.u - exact)))
    assert errs[1] <= 2 * math.pi**2 * (2 / 400) ** 2
    assert 3.4 <= errs[0] / errs[1] <= 4.6


def test_k_stall_carries_hypothesis_report():
    spec = make_spec(Mesh.interval(1.0, 200), nonlinearity_from_text("100*tanh(u)"), theta="cos(pi*x)")
    with pytest.raises(ContinuationStalled) as info:
        continue_in_k(spec, 2.0)
    err = info.value
    assert 0.0 <= err.last_good < 1.0
    assert err.cause is not None
    assert err.hypotheses is not None and not err.hypotheses.satisfied


def test_tanh_sweep_closed_form(tanh_curve):
    assert len(tanh_curve) == 101 and not tanh_curve.stalled
    assert np.max(np.abs(tanh_curve.mu - np.tanh(tanh_curve.xi))) <= 1e-9
    assert np.all(np.diff(tanh_curve.xi) > 0)
    assert np.max(np.diff(tanh_curve.xi)) <= 0.1 + 1e-12
    assert tanh_curve.xi[0] == -5 and tanh_curve.xi[-1] == 5


def test_curve_conditioning_is_logged_quantity(tanh_curve):
    conds = np.array([s.cond_est for s in tanh_curve.samples])
    assert np.all(np.isfinite(conds)) and np.all(conds < ILL_CONDITIONED)


def test_gaussian_sweep_closed_form(gauss_setup):
    spec, curve = gauss_setup
    xi = curve.xi
    assert np.max(np.abs(curve.mu - xi * np.exp(-xi**2))) <= 1e-9
    summary = curve_summary(curve, spec)
    assert summary.mu_max == pytest.approx(math.exp(-0.5) / math.sqrt(2), abs=1e-4)
    assert summary.mu_min == pytest.approx(-summary.mu_max, abs=1e-15)
    assert abs(summary.tail_low) <= 1e-6 and abs(summary.tail_high) <= 1e-6
    assert summary.limit_low == 0.0 and summary.limit_high == 0.0


def test_wide_sweep_limits(wide_curve):
    assert len(wide_curve) == 241 and not wide_curve.stalled
    assert abs(wide_curve.mu[0] + 1) <= 0.02 and abs(wide_curve.mu[-1] - 1) <= 0.02
    # sign condition u*g(u) > 0: mu changes sign across the sweep
    assert wide_curve.mu[0] < 0 < wide_curve.mu[-1]


def test_sup_norm_flattens(wide_curve):
    xi = wide_curve.xi
    sup = np.array([s.sup_norm_U for s in wide_curve.samples])
    for sign in (-1, 1):
        a = sup[np.argmin(np.abs(xi - 20 * sign))]
        b = sup[np.argmin(np.abs(xi - 30 * sign))]
        assert max(a, b) / min(a, b) < 2.0


def test_trace_tanh(tanh_spec, tanh_curve):
    res = trace_mu_crossings(tanh_curve, tanh_spec, 0.5)
    assert len(res.solutions) == 1 and not res.failures
    assert res.roots[0] == pytest.approx(math.atanh(0.5), abs=1e-9)
    assert abs(res.solutions[0].mu - 0.5) <= 1e-10
    assert trace_mu_crossings(tanh_curve, tanh_spec, 1.5).solutions == []


def test_trace_gaussian_two_roots(gauss_setup):
    spec, curve = gauss_setup
    res = trace_mu_crossings(curve, spec, 0.2)
    lo, hi = gauss_roots(0.2)
    assert len(res.roots) == 2
    assert res.roots[0] == pytest.approx(lo, abs=1e-8)
    assert res.roots[1] == pytest.approx(hi, abs=1e-8)
    assert res.roots[0] < 1 / math.sqrt(2) < res.roots[1]


def test_trace_reports_grazing(gauss_setup):
    spec, curve = gauss_setup
    level = float(np.max(curve.mu))
    res = trace_mu_crossings(curve, spec, level)
    assert res.crossings == [] and len(res.grazing) == 1
    assert res.grazing[0] == pytest.approx(0.7, abs=1e-12)


def test_trace_states_verified(tanh_cos_spec, wide_curve):
    res = trace_mu_crossings(wide_curve, tanh_cos_spec, 0.5)
    assert len(res.solutions) == 1
    c = res.crossings[0]
    tau = tanh_cos_spec.tol
    assert c.checks["interior"] <= tau and c.checks["flux"] <= tau and c.checks["average"] <= tau
    assert c.checks["mean_balance"] <= 2 * tau and c.checks["mu_minus_mu0"] <= 1e-10
    target = tanh_cos_spec.with_mu0(0.5)
    again = verify_state(target, c.state, k=1.0)
    assert again["interior"] <= tau
    # the sign condition guarantees a crossing at mu0 = 0
    assert len(trace_mu_crossings(wide_curve, tanh_cos_spec, 0.0).solutions) >= 1


def test_trace_without_stored_states(tanh_spec, tanh_curve):
    bare = type(tanh_curve)(samples=tanh_curve.samples)
    res = trace_mu_crossings(bare, tanh_spec, -0.25)
    assert res.roots == [pytest.approx(math.atanh(-0.25), abs=1e-9)]


def test_path_independence(tanh_cos_spec):
    a = sweep_xi(tanh_cos_spec, -1, 1, 0.1, anchor=-1.0)
    b = sweep_xi(tanh_cos_spec, -1, 1, 0.1, anchor=0.7)
    i = int(np.argmin(np.abs(a.xi - 0.3)))
    j = int(np.argmin(np.abs(b.xi - 0.3)))
    assert a.xi[i] == pytest.approx(b.xi[j], abs=1e-12)
    direct, _ = continue_in_k(tanh_cos_spec, float(a.xi[i]))
    for s in (a.states[i], b.states[j]):
        assert np.max(np.abs(s.reshifted(direct.xi1).vector() - direct.vector())) <= 1e-8


def test_sweep_stall_returns_partial_curve(line400):
    spec = make_spec(line400, nonlinearity_from_text("30*tanh(u)"), theta="0.5*cos(pi*x)")
    curve = sweep_xi(spec, -3, 3, 0.1)
    assert curve.stalled and "stalled" in curve.error
    assert 1 < len(curve) < 61
    assert np.all(np.diff(curve.xi) > 0)


def test_sweep_verification_flag(line100):
    spec = make_spec(line100, tanh_nonlinearity(), theta="0.1*cos(pi*x)")
    curve = sweep_xi(spec, -1, 1, 0.25, verify=True)
    assert curve.provenance["jacobian_mismatch"] <= 1e-6


def test_extend_sweep_matches_full_sweep(tanh_cos_spec):
    full = sweep_xi(tanh_cos_spec, -1, 1, 0.25)
    part = sweep_xi(tanh_cos_spec, -1, 0, 0.25)
    ext = extend_sweep(tanh_cos_spec, part.states[-1], 1.0, 0.25)
    mu = np.concatenate([part.mu, ext.mu])
    assert np.allclose(np.concatenate([part.xi, ext.xi]), full.xi, atol=1e-12)
    assert np.max(np.abs(mu - full.mu)) <= 1e-9


def test_sweep_argument_checks(tanh_spec):
    with pytest.raises(ValueError):
        sweep_xi(tanh_spec, 1, 0, 0.1)
    with pytest.raises(ValueError):
        sweep_xi(tanh_spec, 0, 1, 0.0)


def test_summary_examples(tanh_spec, tanh_curve, line100):
    s = curve_summary(tanh_curve, tanh_spec, level=0.5)
    assert s.mu_min <= np.min(tanh_curve.mu) and s.mu_max >= np.max(tanh_curve.mu)
    assert abs(s.tail_high - 1) <= 0.02 and abs(s.tail_low + 1) <= 0.02
    assert s.limit_low == pytest.approx(-1.0, abs=1e-12) and s.limit_high == pytest.approx(1.0, abs=1e-12)
    assert s.crossing_count == 1 == count_crossings(tanh_curve, 0.5)
    zero = make_spec(line100, zero_nonlinearity())
    flat = curve_summary(sweep_xi(zero, -1, 1, 0.1))
    assert flat.mu_min == 0.0 and flat.mu_max == 0.0


def test_summary_needs_ten_samples(tanh_spec):
    with pytest.raises(ValueError):
        curve_summary(sweep_xi(tanh_spec, 0, 0.5, 0.1))
