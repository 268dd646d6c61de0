"""Tests for the closed-form boundaries: frozen spot values, monotonicity,
the general-to-SGD specialization, the maximal-inequality constant, and the
stitched dyadic-epoch schedule."""

import json
import math

import numpy as np
import pytest

from anytime_iter import (
    RecursionParams,
    StepSchedule,
    boundary_catalog,
    conf_boundary,
    oja_boundary,
    pl_boundary,
    pl_last_iterate,
    rakhlin_fixed_horizon,
    ridge_boundary,
    sgd_boundary,
    sgd_last_iterate,
    stitch_schedule,
    two_phase_oja_schedule,
    write_catalog_json,
    write_width_csv,
)
from anytime_iter.boundaries import _k_const, maximal_inequality_m, maximal_threshold

E2 = math.exp(-2.0)
REL = 1e-12


def close(x, y, rel=REL):
    return math.isclose(x, y, rel_tol=rel, abs_tol=0.0)


# ---------------------------------------------------------------------------
# Step schedules
# ---------------------------------------------------------------------------


def test_inverse_time_schedule_values():
    sch = StepSchedule.inverse_time(2.0, 32.0)
    assert sch.eta(1) == 2.0 / 33.0
    assert np.allclose(sch.etas(3), [2 / 33, 2 / 34, 2 / 35])


def test_schedule_rejects_inadmissible_steps():
    with pytest.raises(ValueError):
        StepSchedule.inverse_time(2.0, 0.5).etas(3)  # eta_1 = 2/1.5 > 1


def test_piecewise_constant_schedule():
    sch = StepSchedule.piecewise_constant([(3, 0.5), (6, 0.25)])
    assert np.allclose(sch.etas(6), [0.5, 0.5, 0.5, 0.25, 0.25, 0.25])


def test_two_phase_schedule():
    sch = StepSchedule.two_phase(eta0=0.1, h0_end=4, c=1.0, beta=2.0)
    etas = sch.etas(6)
    assert np.allclose(etas[:4], 0.1)
    # decaying phase: c/(beta + t - h0_end)
    assert np.allclose(etas[4:], [1.0 / 3.0, 1.0 / 4.0])


# ---------------------------------------------------------------------------
# Frozen golden values (independently recomputed from the closed forms)
# ---------------------------------------------------------------------------


def test_sgd_boundary_golden():
    d = E2 - 1e-15
    assert close(float(sgd_boundary(1.0, 1.0, d).eval(0, d)), 112.59328551512884, rel=1e-10)
    assert close(float(sgd_boundary(2.0, 0.5, 0.01).eval(100, 0.01)), 940.3858107458325)


def test_sgd_boundary_scales_as_b2_over_lam2():
    d = 0.01
    w1 = float(sgd_boundary(1.0, 1.0, d).eval(17, d))
    w2 = float(sgd_boundary(3.0, 2.0, d).eval(17, d))
    assert close(w2, w1 * 9.0 / 4.0)


def test_last_iterate_golden():
    assert close(sgd_last_iterate(1.0, 1.0, math.exp(-1.0), 7), 2.1)
    assert close(pl_last_iterate(1.0, 1.0, 2.0, math.exp(-5.0), 7), 2.625)


def test_pl_last_iterate_domain():
    with pytest.raises(ValueError):
        pl_last_iterate(1.0, 1.0, 2.0, math.exp(-3.0), 7)  # needs delta < e^-4


def test_rakhlin_golden_and_domain():
    assert close(rakhlin_fixed_horizon(1.0, 1.0, math.exp(-1.0), 100, 100), 15.769600865041303)
    with pytest.raises(ValueError):
        rakhlin_fixed_horizon(1.0, 1.0, 0.01, 100, 101)  # beyond its horizon


def test_pl_boundary_golden_and_branch_switch():
    d = math.exp(-3.0)
    assert close(float(pl_boundary(1.0, 1.0, 2.0, d).eval(0, d)), 3073.99009098941)
    # the max switches branch once log(1/delta) crosses 64*tau/mu
    deep = math.exp(-200.0)
    assert close(float(pl_boundary(1.0, 1.0, 2.0, deep).eval(0, deep)), 3174.7966427575643)


def test_oja_boundary_golden():
    d = math.exp(-3.0)
    b, l_off = oja_boundary(1.0, 1.0, d)
    assert l_off == 1152
    assert close(float(b.eval(0, d)), 384.24876137367625)
    assert b.valid_from == 0 and close(b.confidence_cost, 2.0 * (math.e + 1.0))


def test_oja_offset_floor():
    # tiny log(1/delta)^2 factor would give l_off < 32; the floor applies
    b_small, l_off = oja_boundary(0.1, 5.0, E2 * 0.999)
    assert l_off == 32


def test_ridge_boundary_golden():
    d = math.exp(-3.0)
    assert close(float(ridge_boundary(1.0, 1.0, 1.0, 1.0, 1.0, d).eval(0, d)), 2306.4925682420576)


def test_ridge_bias_floor():
    # with lambda_pen > 0 the width approaches the bias term, not zero
    d = 0.01
    b = ridge_boundary(1.0, 1.0, 1.0, 1.0, 1.0, d)
    w = float(b.eval(10**9, d))
    assert close(w, 1.0, rel=1e-3)  # bias = lambda_pen^2*||theta*||^2/lambda_min^2 = 1


def test_k_const_golden():
    assert _k_const(32) == 32.0
    assert _k_const(40) == 38.0
    assert _k_const(10) == 1024.0


def test_conf_boundary_golden():
    d = math.exp(-3.0)
    p = RecursionParams(c1=1.0, c2=1.0, c3=1.0)
    assert close(float(conf_boundary(p, 1.0, 32, d).eval(0, d)), 1536.995045494705)
    assert close(float(conf_boundary(p, 1.0, 100, d).eval(5, d)), 4842.026691303636)


def test_delta_domain_enforced():
    for make in (
        lambda d: sgd_boundary(1.0, 1.0, d),
        lambda d: oja_boundary(1.0, 1.0, d),
        lambda d: ridge_boundary(1.0, 1.0, 0.0, 1.0, 1.0, d),
    ):
        with pytest.raises(ValueError):
            make(0.5)


# ---------------------------------------------------------------------------
# Monotonicity and shape
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "boundary,t_start",
    [
        (sgd_boundary(1.0, 1.0, 0.01), 0),
        (pl_boundary(1.0, 1.0, 2.0, 0.01), 0),
        # the streaming-PCA boundary rises slightly while t is small compared
        # to its offset (the exploration region); it decays from the offset on
        (oja_boundary(1.0, 1.0, 0.01)[0], oja_boundary(1.0, 1.0, 0.01)[1]),
        (ridge_boundary(1.0, 1.0, 0.0, 1.0, 1.0, 0.01), 0),
    ],
)
def test_width_nonincreasing_in_t(boundary, t_start):
    t = np.unique(np.round(np.logspace(math.log10(t_start + 1), 8, 200)).astype(int))
    w = np.asarray(boundary.eval(t, 0.01))
    assert np.all(np.diff(w) <= 1e-15)


def test_width_nonincreasing_in_delta():
    # larger delta -> smaller log(1/delta) -> narrower boundary
    b = sgd_boundary(1.0, 1.0, 0.001)
    assert float(b.eval(100, 0.001)) > float(b.eval(100, 0.01))


# ---------------------------------------------------------------------------
# Specialization of the general boundary to SGD
# ---------------------------------------------------------------------------


def test_conf_specializes_to_sgd():
    # with (C1, C2, C3, a) = (2*lam, B^2, 2*B, B^2/lam^2) and offset 32 the
    # general boundary collapses to the SGD formula once log(1/delta) >= 32
    b_const, lam = 2.0, 0.5
    d = math.exp(-33.0)
    p = RecursionParams(c1=2 * lam, c2=b_const**2, c3=2 * b_const)
    cb = conf_boundary(p, b_const**2 / lam**2, 32, d)
    sb = sgd_boundary(b_const, lam, d)
    t = np.arange(0, 10**4)
    assert np.max(np.abs(np.asarray(cb.eval(t, d)) / np.asarray(sb.eval(t, d)) - 1.0)) <= 1e-12


# ---------------------------------------------------------------------------
# Maximal inequality
# ---------------------------------------------------------------------------


def test_maximal_inequality_golden():
    m = maximal_inequality_m(1.0, 1.0, 1.0, 1.0, 32, 0, 100, math.exp(-4.0))
    assert close(m, 75.67875)


def test_maximal_threshold_formula():
    thr = maximal_threshold(2.0, 0, 100, math.exp(-1.0), 7)
    assert close(float(thr), 2.0 * 100 * 1.0 / 100.0)


def test_maximal_inequality_validation():
    with pytest.raises(ValueError):
        maximal_inequality_m(1.0, 1.0, 1.0, 1.0, 32, 10, 10, 0.01)
    with pytest.raises(ValueError):
        maximal_inequality_m(1.0, 1.0, 1.0, 1.0, 2, 0, 10, 0.01)


# ---------------------------------------------------------------------------
# Stitched schedule
# ---------------------------------------------------------------------------


def test_stitch_kappa_golden():
    p = RecursionParams(c1=1.0, c2=1.0, c3=1.0)
    ss = stitch_schedule(p, 0.01, 10**5)
    # D = max{c2/c1, c3/sqrt(c1)} = 1, denom = 2*128 = 256, kappa = 2^-17
    assert ss.kappa == 2.0**-17
    assert ss.d_const == 1.0


def test_stitch_epoch_contraction_window():
    p = RecursionParams(c1=1.0, c2=1.0, c3=1.0)
    ss = stitch_schedule(p, 0.01, 10**5)
    for i, eta in enumerate(ss.etas):
        n_i = ss.epochs[i + 1] - ss.epochs[i]
        factor = (1.0 - p.c1 * eta) ** n_i
        assert 1.0 / 16.0 <= factor <= 1.0 / 8.0
        # n_i is minimal: one fewer step stays above 1/8
        assert (1.0 - p.c1 * eta) ** (n_i - 1) > 1.0 / 8.0


def test_stitch_targets_and_confidences():
    p = RecursionParams(c1=2.0, c2=0.5, c3=1.0)
    ss = stitch_schedule(p, 0.01, 10**4)
    for i in range(1, len(ss.h)):
        assert close(ss.h[i], ss.h0 * 2.0**-i)
        assert close(ss.deltas[i - 1], 0.01 / (i + 10.0) ** 2)
        assert close(ss.etas[i - 1], ss.kappa * ss.h[i - 1] / math.log(1.0 / ss.deltas[i - 1]))


def test_stitch_widths_start_at_h0_and_decay():
    p = RecursionParams(c1=1.0, c2=1.0, c3=1.0)
    ss = stitch_schedule(p, 0.01, 10**4)
    assert float(ss.widths(0)) == ss.h0
    t = np.arange(0, ss.epochs[-1] + 1)
    w = ss.widths(t)
    assert w[-1] < ss.h0
    assert np.all(w > 0)


def test_stitch_with_superlinear_terms():
    # extra terms with exponent sums above one are admitted and shrink h0
    p_extra = RecursionParams(
        c1=1.0,
        c2=1.0,
        c3=1.0,
        terms_mean=((0.5, 1.0, 1.0),),
        terms_mag=((0.5, 0.5, 2.0),),
    )
    ss = stitch_schedule(p_extra, 0.01, 10**4)
    base = stitch_schedule(RecursionParams(c1=1.0, c2=1.0, c3=1.0), 0.01, 10**4)
    assert ss.h0 <= base.h0
    assert ss.kappa <= base.kappa


def test_stitch_rejects_linear_terms():
    p = RecursionParams(c1=1.0, c2=1.0, c3=1.0, terms_mean=((1.0, 0.0, 1.0),))
    with pytest.raises(ValueError):
        stitch_schedule(p, 0.01, 100)


def test_stitch_step_schedule_round_trip():
    p = RecursionParams(c1=1.0, c2=1.0, c3=1.0)
    ss = stitch_schedule(p, 0.01, 10**4)
    sch = ss.to_step_schedule()
    etas = sch.etas(ss.epochs[-1])
    for i, eta in enumerate(ss.etas):
        assert np.all(etas[ss.epochs[i] : ss.epochs[i + 1]] == eta)


def test_two_phase_oja_schedule_split():
    sch = two_phase_oja_schedule(1.0, 1.0, 0.3, c_explore=0.5, c_stable=2.0)
    h0 = math.ceil(0.5 * 1.0 / (0.3**6 * 1.0))
    assert sch.h0_end == h0
    etas = sch.etas(h0 + 2)
    assert np.allclose(etas[:h0], 2.0 / h0)
    assert etas[h0] < etas[h0 - 1] + 1e-15


# ---------------------------------------------------------------------------
# Catalog / exports
# ---------------------------------------------------------------------------


def test_catalog_json(tmp_path):
    bounds = [sgd_boundary(1.0, 1.0, 0.01), ridge_boundary(1.0, 1.0, 0.0, 1.0, 1.0, 0.01)]
    entries = boundary_catalog(bounds)
    assert {e["label"] for e in entries} == {"sgd", "ridge"}
    for e in entries:
        assert set(e) == {"label", "params", "formula", "confidence_cost", "valid_from"}
    path = tmp_path / "catalog.json"
    write_catalog_json(bounds, path)
    assert json.loads(path.read_text()) == json.loads(json.dumps(entries))


def test_width_csv(tmp_path):
    b = sgd_boundary(1.0, 1.0, 0.01)
    path = tmp_path / "w.csv"
    write_width_csv(b, 0.01, [0, 10, 100], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,width"
    assert len(lines) == 4
    t0, w0 = lines[1].split(",")
    assert float(w0) == float(b.eval(0, 0.01))
