"""Acceptance gate: one test group per criterion, each reported as a single
PASS/FAIL line in the terminal summary (see conftest.py).

Run alone with ``python3 -m pytest tests/test_acceptance.py -v``. Criteria 6
to 8 share one desk-scale training sweep (9 algorithms x 2 seeds, 30 epochs
of 4000 steps) plus a full repeat for the determinism check, so this module
takes tens of minutes on a single core.
"""
import csv
import math
import time
from collections import defaultdict

import numpy as np
import pytest

from cmdpbench.algos import (ALGORITHMS, ConstraintConfig, MultiplierNet, QCostNet,
                             TrustRegionConfig, make_agent, safety_layer_project)
from cmdpbench.bench import RunConfig, read_rows, run_experiment, run_seed
from cmdpbench.env_suite import WorldConfig, chase_velocity, defense_velocity, ghost_velocity
from cmdpbench.numerics import RngStream, finite_difference_gradient, solve_qp_projection_oracle
from cmdpbench.policy_net import GaussianPolicy, Mlp, ValueNet, log_prob, mean_kl, surrogate, \
    surrogate_and_gradient
from cmdpbench.runtime import collect_rollouts, compute_advantages

from test_algos import (DELTA, feasible_instances, projection_oracle, qcqp_oracle)

SUITE = "Goal_Point_8Hazards"
EPOCHS, STEPS, SEEDS = 30, 4000, (0, 1)
KL_BOUND = 0.02 * (1 + 1e-4)
ALL_ALGOS = tuple(ALGORITHMS)
SAFE_ALGOS = tuple(a for a in ALL_ALGOS if a != "trpo")


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


# 1. gradient correctness ----------------------------------------------------

@pytest.mark.criterion(1, "analytic gradients match central differences (rel err < 1e-4, < 10 s)")
def test_c1_gradients():
    t0 = time.perf_counter()
    r = np.random.default_rng(0)
    errs = {}

    pol = GaussianPolicy.init(3, 2, RngStream(0), hidden=(4,))
    obs, act = r.normal(size=(8, 3)), r.normal(size=(8, 2))
    old_lp = log_prob(pol, obs, act) + r.normal(size=8) * 0.1
    adv = r.normal(size=8)
    _, g = surrogate_and_gradient(pol, old_lp, obs, act, adv)
    fd = finite_difference_gradient(lambda p: surrogate(pol.with_flat(p), old_lp, obs, act, adv), pol.flat)
    errs["policy surrogate"] = (rel_err(g, fd), pol.num_params)

    for name, softplus in (("value fit", False), ("cost-value fit", True)):
        net = ValueNet.init(3, RngStream(1), hidden=(5,), softplus_out=softplus)
        y = r.uniform(0, 2, 8)
        _, g = net.mse_and_gradient(obs, y)
        fd = finite_difference_gradient(
            lambda p: ValueNet(net.net.with_flat(p)).mse_and_gradient(obs, y)[0], net.net.flat)
        errs[name] = (rel_err(g, fd), net.net.flat.size)

    mult = MultiplierNet(ValueNet.init(3, RngStream(2), hidden=(5,), softplus_out=True))
    ret = r.uniform(0, 3, 8)
    g = mult.ascent_gradient(obs, ret, 0.5)
    fd = finite_difference_gradient(
        lambda p: float(np.mean(ValueNet(mult.net.net.with_flat(p)).predict(obs) * (ret - 0.5))),
        mult.net.net.flat)
    errs["multiplier net"] = (rel_err(g, fd), mult.net.net.flat.size)

    qc = QCostNet(3, 2, RngStream(3), hidden=(5,))
    s, a = r.normal(size=3), r.uniform(-1, 1, 2)
    _, ga = qc.value_and_action_grad(s, a)
    fd = finite_difference_gradient(lambda aa: qc.value(s[None], aa[None])[0], a)
    errs["Q_C action gradient"] = (rel_err(ga, fd), qc.net.flat.size)

    elapsed = time.perf_counter() - t0
    for name, (err, n) in errs.items():
        print(f"  {name:20s} params={n:3d} rel_err={err:.2e}")
        assert n <= 50, name
        assert err < 1e-4, name
    assert elapsed < 10.0


# 2. trust-region guarantee --------------------------------------------------

@pytest.mark.criterion(2, "accepted updates keep mean KL <= 0.02(1+1e-4) over 50 updates (< 5 min)")
def test_c2_trust_region(tmp_path):
    t0 = time.perf_counter()
    seen = []

    def observer(epoch, batch, est, old_policy, new_policy, report):
        if report.rejected:
            np.testing.assert_array_equal(new_policy.flat, old_policy.flat)
            seen.append((epoch, None))
            return
        kl = mean_kl(batch.old_stats(), new_policy, batch.obs)
        seen.append((epoch, kl))

    algos = ("trpo", "cpo", "trpo_lag", "trpo_fac", "trpo_ipo")
    for algo in algos:
        cfg = RunConfig(SUITE, algo, epochs=10, steps_per_epoch=STEPS, seeds=(0,), out_dir=tmp_path)
        res = run_seed(cfg, 0, observer=observer)
        assert not res.failed, res.error
    elapsed = time.perf_counter() - t0
    accepted = [kl for _, kl in seen if kl is not None]
    print(f"  updates={len(seen)} accepted={len(accepted)} max_kl={max(accepted):.5f} "
          f"time={elapsed:.0f}s")
    assert len(seen) == 50
    assert max(accepted) <= KL_BOUND
    assert elapsed < 300


# 3. projection oracles ------------------------------------------------------

@pytest.mark.criterion(3, "safety layer, CPO and PCPO agree with numeric oracles (< 1 min)")
def test_c3_projection_oracles():
    t0 = time.perf_counter()
    r = np.random.default_rng(11)
    worst_sl = 0.0
    for _ in range(1000):
        n = int(r.integers(1, 6))
        a, g = r.uniform(-1, 1, n), r.normal(size=n)
        c_prev, d = r.uniform(0, 2), r.uniform(0, 1)
        expect = np.clip(solve_qp_projection_oracle(a, g, c_prev, d), -1, 1)
        worst_sl = max(worst_sl, np.max(np.abs(safety_layer_project(a, g, c_prev, d) - expect)))
    assert worst_sl <= 1e-6

    from cmdpbench.algos import cpo_direction, pcpo_direction
    worst_cpo = worst_pcpo = worst_lin = 0.0
    for g, g_c, b, H in feasible_instances(100, seed=5):
        hinv = lambda v, H=H: np.linalg.solve(H, v)
        sol = cpo_direction(g, g_c, b, DELTA, hinv)
        assert sol.case in ("trpo", "both_active")
        worst_lin = max(worst_lin, g_c @ sol.step + b)
        worst_cpo = max(worst_cpo, np.max(np.abs(sol.step - qcqp_oracle(g, g_c, b, H, DELTA))))
        x_trpo = np.sqrt(2 * DELTA / (g @ hinv(g))) * hinv(g)
        for L, linv in ((np.eye(len(g)), None), (H, hinv)):
            step, _ = pcpo_direction(g, g_c, b, DELTA, hinv, linv)
            worst_lin = max(worst_lin, g_c @ step + b)
            worst_pcpo = max(worst_pcpo, np.max(np.abs(step - projection_oracle(x_trpo, g_c, b, L))))
    elapsed = time.perf_counter() - t0
    print(f"  SL={worst_sl:.1e} CPO={worst_cpo:.1e} PCPO={worst_pcpo:.1e} "
          f"max(g_c.x+b)={worst_lin:.1e} time={elapsed:.1f}s")
    assert worst_lin <= 1e-8
    assert worst_cpo <= 1e-6 and worst_pcpo <= 1e-6
    assert elapsed < 60


# 4. movable-object dynamics ------------------------------------------------

@pytest.mark.criterion(4, "all branches of chase/defense/ghost velocity fields, exact closed form (< 1 s)")
def test_c4_dynamics_branches():
    t0 = time.perf_counter()
    o = np.zeros(3)
    v0, v1, v2, r0, r1 = 0.8, 0.3, 0.2, 2.5, 1.0
    P = lambda x, y: np.array([x, y, 0.0])
    cases = [  # (object, robot, branch)
        (P(3.0, 0.0), P(0.0, 0.0), "outside"),
        (P(1.0, 0.5), P(1.2, 0.3), "near"),
        (P(1.5, 1.0), P(-2.0, -2.0), "far"),
    ]
    hit = defaultdict(set)
    for x, rob, branch in cases:
        dor, dro = o - x, rob - x
        expect = {
            "chase": {"outside": v0 * dor, "near": -v1 * dro, "far": np.zeros(3)}[branch],
            "defense": {"outside": v0 * dor, "near": -v1 * dro, "far": v2 * dor}[branch],
            # for ghosts "near" (within r1) is the resting branch and "far" pursues
            "ghost": {"outside": v0 * dor, "near": np.zeros(3), "far": v1 * dro}[branch],
        }
        got = {"chase": chase_velocity(x, rob, o, v0, v1, r0, r1),
               "defense": defense_velocity(x, rob, o, v0, v1, v2, r0, r1),
               "ghost": ghost_velocity(x, rob, o, v0, v1, r0, r1)}
        for kind in got:
            np.testing.assert_allclose(got[kind], expect[kind], rtol=0, atol=1e-12)
            hit[kind].add(branch)
    assert all(len(b) == 3 for b in hit.values())
    assert time.perf_counter() - t0 < 1.0


# 5. degenerate equivalence --------------------------------------------------

@pytest.mark.criterion(5, "zero-cost world: every safe algorithm's first update equals TRPO's (1e-8)")
def test_c5_degenerate_equivalence():
    from cmdpbench.bench.runner import zero_output_layer
    from cmdpbench.env_suite import CmdpEnv, observation_dim
    cfg = WorldConfig(constraint_count=0, max_episode_steps=250)
    obs_dim = observation_dim(cfg)
    rng = RngStream(0)
    policy = GaussianPolicy.init(obs_dim, 2, rng.spawn(1))
    critics = (ValueNet.init(obs_dim, rng.spawn(2)),
               zero_output_layer(ValueNet.init(obs_dim, rng.spawn(3))))
    batch = collect_rollouts(CmdpEnv(cfg, seed=4), policy, critics, 1000, rng.spawn(5))
    est = compute_advantages(batch)
    assert np.all(batch.costs == 0) and np.all(est.cost_advantages == 0) and est.cost_value == 0

    def step_of(name):
        agent = make_agent(name, obs_dim, 2, RngStream(7), total_epochs=30)
        assert agent.shield(0) is None
        new, report = agent.update(policy, batch, est)
        assert not report.rejected
        return new.flat - policy.flat

    ref = step_of("trpo")
    worst = 0.0
    for name in SAFE_ALGOS:
        diff = np.max(np.abs(step_of(name) - ref))
        print(f"  {name:9s} max|step - trpo step| = {diff:.1e}")
        worst = max(worst, diff)
    assert len(SAFE_ALGOS) == 8
    assert worst <= 1e-8


# 6-8. desk-scale training sweep --------------------------------------------

def _sweep(root, step_log):
    out = {}
    t0 = time.perf_counter()
    for algo in ALL_ALGOS:
        cfg = RunConfig(SUITE, algo, epochs=EPOCHS, steps_per_epoch=STEPS, seeds=SEEDS,
                        out_dir=root, step_log=step_log)
        res = run_experiment(cfg)
        for r in res:
            assert not r.failed, f"{algo} seed {r.seed}: {r.error}"
        out[algo] = (cfg, res)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    return _sweep(tmp_path_factory.mktemp("sweep_a"), step_log=True)


@pytest.fixture(scope="module")
def sweep_repeat(tmp_path_factory, sweep):
    return _sweep(tmp_path_factory.mktemp("sweep_b"), step_log=False)


def _seed_mean(results, fn):
    return float(np.mean([fn(r.rows) for r in results]))


def _window_rate(rows, last=10):
    # cost per step accumulated over the final ``last`` epochs
    a, b = rows[-last - 1], rows[-1]
    return (b.rho_c * b.steps - a.rho_c * a.steps) / (b.steps - a.steps)


@pytest.mark.criterion(6, "desk-scale training trends on Goal_Point_8Hazards (a, b, c)")
def test_c6a_trpo_reward_triples(sweep):
    runs, elapsed = sweep
    res = runs["trpo"][1]
    first, final = _seed_mean(res, lambda r: r[0].J_r), _seed_mean(res, lambda r: r[-1].J_r)
    print(f"  sweep time {elapsed / 60:.1f} min; TRPO J_r epoch 1 = {first:.3f}, final = {final:.3f}")
    assert final >= 3 * first
    assert final > first


@pytest.mark.criterion(6, "desk-scale training trends on Goal_Point_8Hazards (a, b, c)")
def test_c6b_lagrangian_cost_rate_below_trpo(sweep):
    runs, _ = sweep
    rate = {a: _seed_mean(runs[a][1], _window_rate) for a in ("trpo", "trpo_lag")}
    col = {a: _seed_mean(runs[a][1], lambda r: np.mean([x.rho_c for x in r[-10:]]))
           for a in ("trpo", "trpo_lag")}
    print(f"  cost rate over last 10 epochs: TRPO {rate['trpo']:.5f}, "
          f"TRPO-Lagrangian {rate['trpo_lag']:.5f} "
          f"(mean rho_c column: {col['trpo']:.5f} vs {col['trpo_lag']:.5f})")
    assert rate["trpo_lag"] < rate["trpo"]


@pytest.mark.criterion(6, "desk-scale training trends on Goal_Point_8Hazards (a, b, c)")
def test_c6c_every_algorithm_improves(sweep):
    runs, _ = sweep
    failures = []
    for algo, (_, res) in runs.items():
        first = _seed_mean(res, lambda r: r[0].J_r)
        final = _seed_mean(res, lambda r: r[-1].J_r)
        rate = _seed_mean(res, _window_rate)
        print(f"  {algo:9s} J_r {first:9.3f} -> {final:9.3f}  M_c(final) "
              f"{_seed_mean(res, lambda r: r[-1].M_c):7.2f}  cost rate(last 10) {rate:.5f}")
        if not final > first:
            failures.append(algo)
    assert not failures, f"no reward improvement: {failures}"


@pytest.mark.criterion(7, "two identical sweeps produce byte-identical CSVs")
def test_c7_determinism(sweep, sweep_repeat):
    a, _ = sweep
    b, _ = sweep_repeat
    n = 0
    for algo in ALL_ALGOS:
        for s in SEEDS:
            assert a[algo][0].csv_path(s).read_bytes() == b[algo][0].csv_path(s).read_bytes(), (algo, s)
            n += 1
    assert n == len(ALL_ALGOS) * len(SEEDS)


def recompute_rows(step_log_path):
    """Metrics from the raw per-step log, independent of the runner."""
    per_epoch = defaultdict(lambda: {"costs": [], "steps": 0, "episodes": defaultdict(lambda: [[], []])})
    with open(step_log_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            e = per_epoch[int(rec["epoch"])]
            r, c = float(rec["reward"]), float(rec["cost"])
            e["costs"].append(c)
            e["steps"] += 1
            ep = int(rec["episode"])
            if ep >= 0:
                e["episodes"][ep][0].append(r)
                e["episodes"][ep][1].append(c)
    rows, cost, steps, prev = [], 0.0, 0, (math.nan, math.nan)
    for epoch in sorted(per_epoch):
        e = per_epoch[epoch]
        cost = cost + math.fsum(e["costs"])
        steps += e["steps"]
        eps = list(e["episodes"].values())
        if eps:
            jr = math.fsum(math.fsum(r) for r, _ in eps) / len(eps)
            mc = math.fsum(math.fsum(c) for _, c in eps) / len(eps)
            prev = (jr, mc)
        rows.append((epoch, steps, prev[0], prev[1], cost / steps))
    return rows


@pytest.mark.criterion(8, "metrics recomputed from raw step logs reproduce the CSV rows exactly")
def test_c8_metrics_from_step_logs(sweep):
    runs, _ = sweep
    checked = 0
    for algo, (cfg, _) in runs.items():
        for s in SEEDS:
            csv_rows = [(r.epoch, r.steps, r.J_r, r.M_c, r.rho_c) for r in read_rows(cfg.csv_path(s))]
            assert recompute_rows(cfg.step_log_path(s)) == csv_rows, (algo, s)
            checked += len(csv_rows)
    assert checked == len(ALL_ALGOS) * len(SEEDS) * EPOCHS


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v", "-s"]))
