import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plasmafbp import HypothesisViolation, Mesh, check_hypotheses, ll_window, make_spec
from plasmafbp.analysis import enforce
from plasmafbp.model import gaussian_nonlinearity, modulated_tanh, nonlinearity_from_text, tanh_nonlinearity


def test_tanh_window(line100):
    w = ll_window(tanh_nonlinearity(), line100)
    assert (w.lower, w.upper) == pytest.approx((-1.0, 1.0), abs=1e-14)
    assert w.source == "declared" and not w.degenerate
    probed = ll_window(nonlinearity_from_text("tanh(u)"), line100)
    assert probed.source == "probed"
    assert (probed.lower, probed.upper) == pytest.approx((-1.0, 1.0), abs=1e-12)


def test_modulated_window(line400):
    for g in (modulated_tanh("1 + 0.5*sin(pi*x)"), nonlinearity_from_text("(1 + 0.5*sin(pi*x))*tanh(u)")):
        w = ll_window(g, line400)
        assert w.lower == pytest.approx(-1.0, abs=1e-3) and w.upper == pytest.approx(1.0, abs=1e-3)


def test_gaussian_window_is_degenerate(line100):
    for g in (gaussian_nonlinearity(), nonlinearity_from_text("u*exp(-u^2)")):
        w = ll_window(g, line100)
        assert w.available and w.degenerate
        assert w.lower == 0.0 and w.upper == 0.0
        assert "empty" in w.describe()


@pytest.mark.parametrize("text", ["u", "sin(u)", "atan(u) + 1e-3*u", "log(u)"])
def test_window_unavailable(line100, text):
    w = ll_window(nonlinearity_from_text(text), line100)
    assert not w.available and w.reason
    assert w.contains(0.0) is None


def test_report_for_tanh(tanh_spec):
    rep = check_hypotheses(tanh_spec)
    assert rep.c0 == pytest.approx(math.pi**2, rel=2e-3)
    assert rep.lambda2 == pytest.approx(math.pi**2, rel=2e-3)
    assert abs(rep.c0 - rep.lambda2) / rep.lambda2 <= 1e-3
    assert rep.M == pytest.approx(1.0, abs=1e-6) and rep.M_estimated
    assert rep.satisfied and rep.satisfied == (rep.M < min(rep.c0, rep.lambda2))
    assert "inside (-1,1)" in rep.verdict


def test_report_violation_and_outside_verdict(line400):
    bad = make_spec(line400, nonlinearity_from_text("15*tanh(u)"))
    rep = check_hypotheses(bad)
    assert not rep.satisfied and rep.M == pytest.approx(15.0, abs=1e-5)
    with pytest.raises(HypothesisViolation):
        enforce(rep, strict=True)
    out = check_hypotheses(make_spec(line400, tanh_nonlinearity(), mu0=1.5))
    assert out.verdict == "outside (-1,1): no solution exists"
    assert "NO" in rep.text() and "outside" in out.text()


def test_non_strict_violation_warns(line100, caplog):
    rep = check_hypotheses(make_spec(line100, nonlinearity_from_text("15*tanh(u)")))
    with caplog.at_level(logging.WARNING):
        enforce(rep, strict=False)
    assert "continuation may stall" in caplog.text


def test_declared_bound_marked(line100):
    rep = check_hypotheses(make_spec(line100, nonlinearity_from_text("tanh(u)", bound=1.0)))
    assert rep.M == 1.0 and not rep.M_estimated


def test_report_is_deterministic(line100):
    spec = make_spec(Mesh.rectangle(1.0, 1.5, 10, 12), tanh_nonlinearity(), theta="0.1*cos(pi*x)")
    a, b = check_hypotheses(spec).to_dict(), check_hypotheses(spec).to_dict()
    assert a == b


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.99))
def test_window_scales_linearly(alpha):
    m = Mesh.interval(1.0, 40)
    for g in (tanh_nonlinearity(), modulated_tanh("1 + 0.5*sin(pi*x)")):
        base, scaled = ll_window(g, m), ll_window(g.scaled(alpha), m)
        assert abs(scaled.lower - alpha * base.lower) <= 1e-9
        assert abs(scaled.upper - alpha * base.upper) <= 1e-9
    probe = nonlinearity_from_text("tanh(u)")
    base, scaled = ll_window(probe, m), ll_window(probe.scaled(alpha), m)
    assert abs(scaled.upper - alpha * base.upper) <= 1e-9
