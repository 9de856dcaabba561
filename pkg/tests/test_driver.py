import copy

import numpy as np
import pytest
import scipy.sparse as sp

from hyflexa.driver import (
    Constant,
    Diminishing,
    SolverConfig,
    init_state,
    iterate,
    run,
    step_size_next,
)
from hyflexa.exceptions import ConfigError, NumericError, SolverError
from hyflexa.lasso import LassoProblem, default_tau, generate_nesterov, soft_threshold
from hyflexa.oracle import check_coordinatewise_stationarity
from hyflexa.problem import BlockPartition, l1_nonsmooth, quadratic_problem
from hyflexa.sampling import MinimalRho, Nice, Threshold, Uniform, draw
from hyflexa.surrogate import ExactBlock, ProximalLinear


def trace_rows(result):
    return [(t.k, t.objective, t.residual, t.full_residual, t.gamma, t.sampled, t.updated) for t in result.trace]


def test_step_size_examples():
    assert step_size_next(1.0, 0.5) == 0.5
    assert step_size_next(0.5, 0.5) == 0.375
    rng = np.random.default_rng(0)
    for g, th in rng.uniform(1e-6, 1.0, (100, 2)):
        out = step_size_next(g, th)
        assert 0 < out < g


def test_step_size_asymptote():
    theta = 1e-2
    g = 1.0
    for _ in range(100_000):
        nxt = step_size_next(g, theta)
        assert 0 < nxt < g
        g = nxt
    assert abs(g * theta * 100_000 - 1) <= 0.1


@pytest.mark.parametrize("kw", [{"gamma0": 0.0}, {"gamma0": 1.5}, {"theta": 0.0}, {"theta": 1.0}])
def test_schedule_validation(kw):
    with pytest.raises(ConfigError):
        Diminishing(**kw)


def test_constant_schedule():
    assert Constant(0.3).next(0.3) == 0.3
    with pytest.raises(ConfigError):
        Constant(0.0)


@pytest.mark.parametrize("kw", [{"max_iters": 0}, {"residual_tol": -1.0}, {"workers": 0}, {"alpha1": -1.0},
                                {"full_every": -1}, {"divergence_factor": 0.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_single_block_exact_step_is_minimizer():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((4, 4))
    Q = M @ M.T + np.eye(4)
    p = rng.standard_normal(4)
    P = quadratic_problem(Q, p, BlockPartition((4,)))
    lam = float(np.linalg.eigvalsh(Q)[0])
    cfg = SolverConfig(surrogate=ExactBlock(convexity=lam), schedule=Constant(1.0), max_iters=1,
                       alpha1=1e-12, residual_tol=0.0)
    res = run(P, cfg)
    assert res.iterations == 1
    assert res.final_x == pytest.approx(np.linalg.solve(Q, -p), abs=1e-9)


def test_blocks_outside_greedy_set_are_unchanged():
    P = generate_nesterov(40, 120, 40, 5, seed=2)
    cfg = SolverConfig(sampling=Uniform(120, 30.0), greedy=Threshold(0.5), max_iters=50, residual_tol=0.0, seed=3)
    state = init_state(P, cfg)
    for _ in range(50):
        x_before = state.x.copy()
        S = draw(cfg.sampling, copy.deepcopy(state.rng))
        iterate(state, P, cfg)
        changed = np.flatnonzero(state.x != x_before)
        assert set(changed.tolist()) <= set(S.tolist())
        assert changed.size <= state.last.updated
        assert state.last.updated <= state.last.sampled


def test_greedy_rho_updates_fewer_blocks():
    P = generate_nesterov(40, 120, 40, 5, seed=2)
    base = dict(sampling=Nice(120, 60), max_iters=20, residual_tol=0.0, seed=3)
    rho = run(P, SolverConfig(greedy=MinimalRho(0.2), **base))
    full = run(P, SolverConfig(greedy=Threshold(0.0), **base))
    assert all(t.updated == 60 for t in full.trace)
    assert all(t.updated <= 60 for t in rho.trace)
    assert sum(t.updated for t in rho.trace) < sum(t.updated for t in full.trace)


def reference_full_loop(P, iters, theta):
    # straight-line all-block update written independently of the engine
    A = P.A.toarray()
    b, c = P.b, P.c
    sq = np.einsum("ij,ij->j", A, A)
    q = 2 * sq + 1e-3 * 2 * sq
    x = np.zeros(P.n)
    gamma = 1.0
    out = []
    for _ in range(iters):
        r = A @ x - b
        g = 2 * A.T @ r
        xhat = np.sign(x - g / q) * np.maximum(np.abs(x - g / q) - c / q, 0)
        out.append(float(r @ r) + c * np.abs(x).sum())
        x = x + gamma * (xhat - x)
        gamma = gamma * (1 - theta * gamma)
    return x, out


def test_fully_parallel_matches_reference_loop():
    P = generate_nesterov(30, 40, 50, 10, seed=4)
    cfg = SolverConfig(max_iters=100, residual_tol=0.0, schedule=Diminishing(1.0, 0.5))
    res = run(P, cfg)
    x_ref, V_ref = reference_full_loop(P, 100, 0.5)
    assert all(t.updated == 40 for t in res.trace)
    assert np.allclose(res.final_x, x_ref, rtol=1e-10, atol=1e-12)
    assert [t.objective for t in res.trace] == pytest.approx(V_ref, rel=1e-10)


def test_huge_tolerance_stops_after_one_pass():
    P = generate_nesterov(20, 40, 50, 10, seed=1)
    res = run(P, SolverConfig(residual_tol=np.inf))
    assert res.converged and res.iterations == 1 and res.status == "converged"
    assert res.trace[-1].residual <= np.inf


def test_converged_implies_residual_below_tolerance():
    P = generate_nesterov(50, 100, 50, 5, seed=1)
    cfg = SolverConfig(sampling=Nice(100, 10), greedy=Threshold(0.1), schedule=Diminishing(1.0, 1e-3),
                       max_iters=30_000, residual_tol=1e-8, seed=2)
    res = run(P, cfg)
    assert res.converged
    assert res.trace[-1].residual <= 1e-8
    _, vs = P.known_optimum
    assert (res.final_objective - vs) / vs <= 1e-6
    assert check_coordinatewise_stationarity(P, res.final_x, 1e-5).passed


def test_max_iters_status():
    P = generate_nesterov(20, 40, 50, 10, seed=1)
    res = run(P, SolverConfig(sampling=Nice(40, 4), max_iters=5, residual_tol=0.0))
    assert not res.converged and res.status == "max_iters" and res.iterations == 5
    assert len(res.trace) == 5


def test_record_trace_off():
    P = generate_nesterov(20, 40, 50, 10, seed=1)
    res = run(P, SolverConfig(max_iters=5, residual_tol=0.0, record_trace=False))
    assert res.trace == [] and res.iterations == 5


@pytest.mark.parametrize("rule", [None, Nice(200, 20), Uniform(200, 15.5)], ids=["full", "nice", "uniform"])
def test_worker_count_does_not_change_trace(rule):
    P = generate_nesterov(80, 200, 40, 5, seed=6)
    runs = []
    for w in (1, 2, 8):
        cfg = SolverConfig(sampling=rule, greedy=Threshold(0.2), max_iters=60, residual_tol=0.0, seed=11,
                           workers=w, full_every=7)
        runs.append(run(P, cfg))
    for r in runs[1:]:
        assert trace_rows(r) == trace_rows(runs[0])
        assert np.array_equal(r.final_x, runs[0].final_x)


def test_worker_count_generic_engine(softplus_problem):
    P, _ = softplus_problem
    runs = [run(P, SolverConfig(surrogate=ExactBlock(pad=0.5), alpha1=1e-3, greedy=Threshold(0.3), max_iters=20,
                                residual_tol=0.0, seed=5, workers=w)) for w in (1, 2, 8)]
    for r in runs[1:]:
        assert trace_rows(r) == trace_rows(runs[0])


def test_seed_changes_trajectory():
    P = generate_nesterov(20, 40, 50, 10, seed=1)
    a = run(P, SolverConfig(sampling=Nice(40, 4), max_iters=10, residual_tol=0.0, seed=1))
    b = run(P, SolverConfig(sampling=Nice(40, 4), max_iters=10, residual_tol=0.0, seed=2))
    assert not np.array_equal(a.final_x, b.final_x)


def test_descent_check_passes_with_exact_solves():
    P = generate_nesterov(50, 150, 30, 2, seed=3)
    cfg = SolverConfig(sampling=Nice(150, 4), greedy=Threshold(0.1), schedule=Diminishing(1.0, 1e-3),
                       max_iters=3000, residual_tol=1e-9, check_descent=True, seed=1)
    res = run(P, cfg)
    assert res.iterations > 1


def test_descent_check_generic(softplus_problem):
    P, _ = softplus_problem
    cfg = SolverConfig(surrogate=ProximalLinear(30.0), max_iters=200, residual_tol=0.0, check_descent=True)
    run(P, cfg)


def test_generic_engine_reaches_stationarity(softplus_problem):
    P, _ = softplus_problem
    cfg = SolverConfig(surrogate=ExactBlock(pad=0.1), alpha1=1e-3, greedy=Threshold(0.1),
                       schedule=Diminishing(1.0, 1e-2), max_iters=5000, residual_tol=1e-8, seed=1)
    res = run(P, cfg)
    assert res.converged
    assert check_coordinatewise_stationarity(P, res.final_x, 1e-5).passed
    V = [t.objective for t in res.trace]
    assert V[-1] < V[0]


def test_divergent_jacobi_is_reported():
    # fully parallel unit steps on correlated columns blow up; the guard turns
    # this into an error instead of a spurious fixed point
    P = generate_nesterov(30, 60, 50, 10, seed=5)
    with pytest.raises(SolverError) as info:
        run(P, SolverConfig(max_iters=5000, residual_tol=1e-12))
    assert isinstance(info.value.cause, NumericError)
    assert len(info.value.trace) == info.value.iteration


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_objective_is_reported():
    P = quadratic_problem(np.eye(2), nonsmooth=l1_nonsmooth(1.0))
    with pytest.raises(SolverError) as info:
        run(P, SolverConfig(max_iters=3), x0=np.array([np.inf, 0.0]))
    assert info.value.iteration == 0


def test_objective_target_stops_early():
    P = generate_nesterov(50, 100, 50, 5, seed=1)
    _, vs = P.known_optimum
    cfg = SolverConfig(sampling=Nice(100, 10), greedy=Threshold(0.1), schedule=Diminishing(1.0, 1e-3),
                       max_iters=30_000, residual_tol=0.0, objective_target=vs * (1 + 1e-3), seed=2)
    res = run(P, cfg)
    assert res.status == "target" and not res.converged
    assert res.final_objective <= vs * (1 + 1e-3)
    assert res.trace[-2].objective > vs * (1 + 1e-3)


def test_x0_validation():
    P = generate_nesterov(10, 20, 50, 10, seed=1)
    with pytest.raises(ValueError):
        run(P, SolverConfig(), x0=np.zeros(3))
    with pytest.raises(ConfigError):
        run(P, SolverConfig(sampling=Nice(10, 2)))


def test_proximal_linear_at_lipschitz_weight_is_prox_gradient():
    # sigma = 0, fully parallel, weight L, unit step: ISTA with step 1/L
    rng = np.random.default_rng(8)
    A = sp.random(15, 25, density=0.5, random_state=rng, format="csc")
    b = rng.standard_normal(15)
    P = LassoProblem(A, b, 0.3)
    L = 2 * np.linalg.norm(A.toarray(), 2) ** 2
    res = run(P, SolverConfig(surrogate=ProximalLinear(L), schedule=Constant(1.0), max_iters=5, residual_tol=0.0))
    x = np.zeros(25)
    for _ in range(5):
        x = soft_threshold(x - 2 * A.T @ (A @ x - b) / L, 0.3 / L)
    assert res.final_x == pytest.approx(x, rel=1e-12, abs=1e-14)


def test_default_tau_value():
    P = generate_nesterov(10, 20, 50, 10, seed=1)
    assert default_tau(P) == pytest.approx(2e-3 * P.column_sq_norms)


def test_from_mapping():
    cfg = SolverConfig.from_mapping({"sampling.rule": "nice", "sampling.tau": 3, "greedy.sigma": 0.2,
                                     "step.theta": 0.1, "run.max_iters": 7, "run.tol": 1e-3,
                                     "run.workers": 2, "diag.full_every": 5, "seed": 4}, 10)
    assert cfg.sampling == Nice(10, 3) and cfg.greedy == Threshold(0.2)
    assert cfg.schedule == Diminishing(1.0, 0.1)
    assert (cfg.max_iters, cfg.residual_tol, cfg.workers, cfg.full_every, cfg.seed) == (7, 1e-3, 2, 5, 4)
    assert SolverConfig.from_mapping({"step.kind": "constant", "step.constant": 0.5}, 3).schedule == Constant(0.5)
    with pytest.raises(ConfigError):
        SolverConfig.from_mapping({"step.kind": "armijo"}, 3)
