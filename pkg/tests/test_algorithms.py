"""Tests for the algorithm runners: deterministic contractions, path-wise
recursion checks, batching equivalences, and geometry invariants."""

import math

import numpy as np
import pytest

from anytime_iter import (
    PcaProblem,
    RecursionParams,
    RmProblem,
    SgdProblem,
    StepSchedule,
    check_pca_recursion,
    check_recursion,
    krasulina_stream,
    oja_stream,
    pl_recursion_params,
    ridge_sgd,
    rm_recursion_params,
    robbins_monro,
    sgd_pl,
    sgd_recursion_params,
    sgd_strongly_convex,
    sin2,
)
from anytime_iter.algorithms import pca_batch, sgd_batch
from anytime_iter.seeding import rep_seed
from anytime_iter.streams import LinearModelStream


SGD = SgdProblem(curvature=(1.0, 1.0), x_star=(0.0, 0.0), radius=0.5, b_noise=0.5)
PCA = PcaProblem(eigs=(2.0, 1.0))


def warm_v0(problem, direction=(0.6, 0.8)):
    v = problem.v_star + 0.3 * np.asarray(direction, dtype=float)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Problem containers
# ---------------------------------------------------------------------------


def test_sgd_problem_derived_constants():
    p = SgdProblem(curvature=(1.0, 4.0), x_star=(0.5, 0.0), radius=1.0, b_noise=0.25)
    assert p.lam == 1.0 and p.mu == 4.0 and p.tau == 2.0
    assert p.b == 4.0 * (1.0 + 0.5) + 0.25


def test_pca_problem_derived_constants():
    assert PCA.b == math.sqrt(3.0)
    assert PCA.rho == 1.0
    assert np.allclose(PCA.cov, np.diag([2.0, 1.0]))
    assert np.allclose(PCA.v_star, [1.0, 0.0])


def test_pca_problem_rotation():
    c, s = math.cos(0.7), math.sin(0.7)
    rot = ((c, -s), (s, c))
    p = PcaProblem(eigs=(2.0, 1.0), rotation=rot)
    r = np.asarray(rot)
    assert np.allclose(p.cov, r @ np.diag([2.0, 1.0]) @ r.T)
    assert np.allclose(p.v_star, r[:, 0])


def test_rm_problem_poly_sq_matches_m_squared():
    p = RmProblem(m_kind="cubic_plus_linear", cub_a=0.5, cub_b=2.0)
    for x in (0.3, 1.7, -2.0):
        l = (x - p.theta) ** 2
        assert math.isclose(p.poly_sq(l), p.m_func(x) ** 2, rel_tol=1e-12)


def test_sin2_values():
    assert sin2([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert math.isclose(sin2([1.0, 0.0], [0.0, 2.0]), 1.0)
    assert math.isclose(sin2([1.0, 1.0], [1.0, 0.0]), 0.5, rel_tol=1e-12)
    with pytest.raises(ValueError):
        sin2([0.0, 0.0], [1.0, 0.0])


# ---------------------------------------------------------------------------
# Deterministic (noiseless) behavior
# ---------------------------------------------------------------------------


def test_sgd_noiseless_contracts_per_coordinate():
    p = SgdProblem(curvature=(1.0, 2.0), x_star=(0.0, 0.0), radius=1.0, b_noise=0.0)
    sch = StepSchedule.inverse_time(1.0, 10.0)
    tr = sgd_strongly_convex(p, sch, (0.5, 0.5), 20, seed=0)
    # x_{t,i} = x_{0,i} * prod (1 - eta_s * a_i), never projected
    etas = sch.etas(20)
    expect = 0.5 * np.prod(1.0 - etas * 1.0), 0.5 * np.prod(1.0 - etas * 2.0)
    assert math.isclose(tr.losses[-1], expect[0] ** 2 + expect[1] ** 2, rel_tol=1e-12)
    assert np.all(tr.noise >= 0.0)  # only the eta^2*||grad||^2 part remains


def test_projection_is_idempotent_and_radial():
    y = np.array([3.0, 4.0])
    proj = SGD.projector(y)
    assert math.isclose(np.linalg.norm(proj), SGD.radius, rel_tol=1e-12)
    assert np.allclose(SGD.projector(proj), proj)
    inside = np.array([0.1, 0.1])
    assert np.array_equal(SGD.projector(inside), inside)


def test_ridge_noiseless_converges_to_truth():
    stream = LinearModelStream(theta_star=(0.5, -0.25), x_radius=1.0, noise_radius=0.0)
    sch = StepSchedule.inverse_time(2.0 / stream.lambda_min, 32.0)
    tr = ridge_sgd(stream, 2.0, 0.0, sch, (0.0, 0.0), 3000, seed=1)
    assert tr.losses[-1] < 1e-3
    assert tr.losses[-1] < tr.losses[0]


# ---------------------------------------------------------------------------
# Recursion fidelity (path-wise inequality checks)
# ---------------------------------------------------------------------------


def test_sgd_trace_passes_recursion_check():
    b = StepSchedule.inverse_time(1.0 / SGD.lam, 32.0)
    for seed in range(5):
        tr = sgd_strongly_convex(SGD, b, (0.5, 0.0), 1000, seed)
        assert check_recursion(tr, sgd_recursion_params(SGD)).ok


def test_sgd_noise_channel_is_exact_identity():
    sch = StepSchedule.inverse_time(1.0, 32.0)
    tr = sgd_strongly_convex(SGD, sch, (0.5, 0.0), 200, seed=3)
    # whenever the projection is inactive, L_t = (1 - 2*lam*eta)L + U exactly;
    # the projection can only shrink the loss, so <= holds throughout
    lhs = tr.losses[1:]
    rhs = (1.0 - 2.0 * SGD.lam * tr.steps) * tr.losses[:-1] + tr.noise
    assert np.all(lhs <= rhs + 1e-12)


def test_pl_trace_passes_recursion_check():
    # ball chosen large enough that the projection never triggers
    p = SgdProblem(curvature=(1.0, 1.0), x_star=(0.0, 0.0), radius=4.0, b_noise=0.5)
    sch = StepSchedule.inverse_time(2.0 / p.tau, 32.0)
    for seed in range(5):
        tr = sgd_pl(p, sch, (1.0, 0.0), 1000, seed)
        assert tr.meta["proj_hits"] == "0"
        assert check_recursion(tr, pl_recursion_params(p)).ok


def test_rm_linear_trace_passes_recursion_check():
    p = RmProblem(m_kind="linear", slope=1.0)
    sch = StepSchedule.inverse_time(0.5, 1.0)
    for seed in range(5):
        tr = robbins_monro(p, sch, 1.0, 1000, seed)
        assert check_recursion(tr, rm_recursion_params(p)).ok


def test_rm_cubic_trace_passes_recursion_check():
    p = RmProblem(m_kind="cubic_plus_linear", cub_a=0.2, cub_b=1.0)
    sch = StepSchedule.inverse_time(0.25, 4.0)
    for seed in range(5):
        tr = robbins_monro(p, sch, 0.5, 1000, seed)
        assert check_recursion(tr, rm_recursion_params(p)).ok


@pytest.mark.parametrize("variant,runner", [("krasulina", krasulina_stream), ("oja", oja_stream)])
def test_pca_trace_passes_recursion_check(variant, runner):
    sch = StepSchedule.inverse_time(2.0 / PCA.rho, 200.0)
    for seed in range(5):
        tr = runner(PCA, sch, warm_v0(PCA), 1000, seed)
        assert check_pca_recursion(tr, PCA.b, PCA.rho, variant).ok


def test_pca_checker_detects_planted_violation():
    sch = StepSchedule.inverse_time(2.0, 200.0)
    tr = krasulina_stream(PCA, sch, warm_v0(PCA), 100, seed=0)
    losses = tr.losses.copy()
    losses[50] = 1.0  # jump the loss without touching the recorded noise
    from anytime_iter.recursion import Trace

    bad = Trace(losses=losses, steps=tr.steps, noise=tr.noise)
    rep = check_pca_recursion(bad, PCA.b, PCA.rho, "krasulina")
    assert not rep.ok and rep.first_violation.t == 50


# ---------------------------------------------------------------------------
# PCA geometry
# ---------------------------------------------------------------------------


def test_krasulina_update_orthogonal_to_iterate():
    sch = StepSchedule.inverse_time(1.0, 100.0)
    tr = krasulina_stream(PCA, sch, warm_v0(PCA), 200, seed=2)
    # z_t . v_{t-1} = 0 by construction
    assert np.max(np.abs(tr.aux["z_dot_v"])) < 1e-12


def test_krasulina_norm_growth_window():
    sch = StepSchedule.inverse_time(1.0, 100.0)
    tr = krasulina_stream(PCA, sch, warm_v0(PCA), 200, seed=2)
    b4 = PCA.b**4
    ratio = tr.aux["norm_ratio"]
    assert np.all(ratio >= 1.0 - 1e-12)
    assert np.all(ratio <= 1.0 + 4.0 * b4 * tr.steps**2 + 1e-12)


def test_oja_rotation_equivariance():
    # rotating the data rotates the iterates; the sin^2 path is unchanged
    c, s = math.cos(0.3), math.sin(0.3)
    rot = ((c, -s), (s, c))
    base = PcaProblem(eigs=(2.0, 1.0))
    rotated = PcaProblem(eigs=(2.0, 1.0), rotation=rot)
    sch = StepSchedule.inverse_time(1.0, 100.0)
    v0 = warm_v0(base)
    v0_rot = np.asarray(rot) @ v0
    a = oja_stream(base, sch, v0, 300, seed=4)
    b = oja_stream(rotated, sch, v0_rot, 300, seed=4)
    assert np.max(np.abs(a.losses - b.losses)) < 1e-12


def test_oja_normalized_iterates_stay_unit():
    sch = StepSchedule.inverse_time(1.0, 100.0)
    res = pca_batch(PCA, sch.etas(100), warm_v0(PCA), [rep_seed(0, 0)], "oja", True)
    assert math.isclose(float(np.linalg.norm(res["final_v"][0])), 1.0, rel_tol=1e-9)


def test_pca_q_channel_conditionally_centered():
    # E[Q_t | F_{t-1}] = 0: across replications the q channel averages to ~0
    n = 400
    seeds = [rep_seed(99, i) for i in range(n)]
    etas = StepSchedule.inverse_time(1.0, 100.0).etas(50)
    res = pca_batch(PCA, etas, warm_v0(PCA), seeds, "krasulina", False)
    means = res["q"].mean(axis=0)
    scale = 8.0 * PCA.b**2 * etas / math.sqrt(n)
    assert np.all(np.abs(means) <= 4.0 * scale)


# ---------------------------------------------------------------------------
# Batching equivalence and determinism
# ---------------------------------------------------------------------------


def test_batch_matches_single_bitwise():
    etas = StepSchedule.inverse_time(1.0, 32.0).etas(100)
    seeds = [rep_seed(7, i) for i in range(3)]
    batch = sgd_batch(SGD, etas, np.array([0.5, 0.0]), seeds)
    for i, seed in enumerate(seeds):
        single = sgd_batch(SGD, etas, np.array([0.5, 0.0]), [seed])
        assert np.array_equal(batch["loss_sc"][i], single["loss_sc"][0])
        assert np.array_equal(batch["noise_sc"][i], single["noise_sc"][0])


def test_trace_runner_deterministic():
    sch = StepSchedule.inverse_time(1.0, 32.0)
    a = sgd_strongly_convex(SGD, sch, (0.5, 0.0), 50, seed=1)
    b = sgd_strongly_convex(SGD, sch, (0.5, 0.0), 50, seed=1)
    assert np.array_equal(a.losses, b.losses)


def test_sgd_y_channel_conditionally_centered():
    n = 400
    seeds = [rep_seed(13, i) for i in range(n)]
    etas = StepSchedule.inverse_time(1.0, 32.0).etas(50)
    res = sgd_batch(SGD, etas, np.array([0.5, 0.0]), seeds)
    means = res["y_sc"].mean(axis=0)
    # |Y_t| <= B*sqrt(L) <= B*radius*... use the crude bound B*2*radius
    scale = SGD.b * 2.0 * SGD.radius / math.sqrt(n)
    assert np.all(np.abs(means) <= 4.0 * scale)


# ---------------------------------------------------------------------------
# Ridge variants
# ---------------------------------------------------------------------------


def test_ridge_penalty_flag_changes_dynamics():
    stream = LinearModelStream(theta_star=(0.5, 0.0), x_radius=1.0, noise_radius=0.25)
    sch = StepSchedule.inverse_time(2.0 / stream.lambda_min, 32.0)
    a = ridge_sgd(stream, 2.0, 0.1, sch, (0.0, 0.0), 100, seed=0, penalty_in_gradient=True)
    b = ridge_sgd(stream, 2.0, 0.1, sch, (0.0, 0.0), 100, seed=0, penalty_in_gradient=False)
    assert not np.array_equal(a.losses, b.losses)
    c = ridge_sgd(stream, 2.0, 0.0, sch, (0.0, 0.0), 100, seed=0, penalty_in_gradient=False)
    d = ridge_sgd(stream, 2.0, 0.0, sch, (0.0, 0.0), 100, seed=0, penalty_in_gradient=True)
    # at lambda = 0 the two variants agree up to multiplication order
    assert np.allclose(c.losses, d.losses, rtol=1e-12, atol=1e-15)


def test_ridge_iterates_stay_in_ball():
    stream = LinearModelStream(theta_star=(0.9, 0.0), x_radius=1.0, noise_radius=0.5)
    sch = StepSchedule.inverse_time(2.0 / stream.lambda_min, 32.0)
    tr = ridge_sgd(stream, 1.0, 0.0, sch, (0.0, 0.0), 500, seed=5)
    # loss is ||theta - theta*||^2 with theta confined to the ball of radius 0.5
    assert np.all(np.sqrt(tr.losses) >= 0.9 - 0.5 - 1e-9)


# ---------------------------------------------------------------------------
# Input validation
# ---------------------------------------------------------------------------


def test_v0_must_be_unit():
    sch = StepSchedule.inverse_time(1.0, 100.0)
    with pytest.raises(ValueError):
        oja_stream(PCA, sch, (2.0, 0.0), 10, seed=0)


def test_x0_must_lie_in_ball():
    sch = StepSchedule.inverse_time(1.0, 32.0)
    with pytest.raises(ValueError):
        sgd_strongly_convex(SGD, sch, (1.0, 1.0), 10, seed=0)
