"""Acceptance suite: one printed PASS/FAIL line per criterion.

Criteria 1-8 are fast property suites. Criteria 9-11 train the four
actuation study configurations at the default desk-scale budget (16 envs,
2M steps, one seed) and compare them, which takes tens of minutes; they
share a session-scoped fixture so each configuration trains exactly once.
Criterion 12 bounds evaluation throughput.

Set FREEFLYER_DOCK_ACCEPT_STEPS to shrink the training budget during
development; the official run uses the default.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import null_space

from freeflyer_dock.checkpoint import load_checkpoint
from freeflyer_dock.cli import main
from freeflyer_dock.config import RunConfig, ablation_preset, config_fingerprint
from freeflyer_dock.dynamics import InertialParams, RigidBodyState, step_dynamics
from freeflyer_dock.env import EnvConfig, NoiseConfig, SuccessTracker
from freeflyer_dock.evaluation import (
    EpisodeRecord,
    propeller_usage,
    run_eval,
    summarize,
)
from freeflyer_dock.policy import init_policy_params, log_prob_and_entropy, policy_forward
from freeflyer_dock.ppo import compute_gae, ppo_loss_and_grads, train
from freeflyer_dock.propulsion import (
    BodyWrench,
    PolarityMode,
    default_layout,
    per_propeller_torques,
    propeller_wrench,
    residual_drag_scalar,
    wrench_matrix,
)
from freeflyer_dock.rewards import RewardConfig, compute_reward
from freeflyer_dock.rotations import (
    orientation_error_angle,
    quat_conj,
    quat_mul,
    quat_normalize,
    quat_to_rotmat,
    rotmat_to_6d,
    sixd_to_rotmat,
)

ACCEPT_STEPS = int(os.environ.get("FREEFLYER_DOCK_ACCEPT_STEPS", 2_000_000))
EVAL_EPISODES = 100


def report(index: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance {index:2d}] {status}: {name}{suffix}")
    assert ok, f"criterion {index} failed: {name}{suffix}"


def random_quats(n, seed):
    rng = np.random.default_rng(seed)
    return quat_normalize(rng.standard_normal((n, 4)))


def test_criterion_1_rotation_algebra():
    ok = True
    for q in random_quats(1000, 101):
        rot = quat_to_rotmat(q)
        ok &= np.allclose(rot.T @ rot, np.eye(3), atol=1e-9)
        ok &= abs(np.linalg.det(rot) - 1.0) < 1e-9
        ok &= np.allclose(sixd_to_rotmat(rotmat_to_6d(rot)), rot, atol=1e-9)
        ok &= orientation_error_angle(quat_to_rotmat(quat_mul(quat_conj(q), q))) < 1e-9
    for q, p in zip(random_quats(1000, 102), random_quats(1000, 103)):
        rot = quat_to_rotmat(q)
        pm = quat_to_rotmat(p)
        ok &= abs(orientation_error_angle(pm @ rot @ pm.T) - orientation_error_angle(rot)) < 1e-9
    report(1, "rotation algebra round-trips and trace-angle identities", bool(ok))


def test_criterion_2_propulsion_physics():
    cfg = default_layout(PolarityMode.ALTERNATING)
    ok = True
    # exact drag cancellation under uniform commands
    for value in (0.3, 0.75, 1.0):
        u = np.full(8, value)
        on = propeller_wrench(cfg, u)
        off = propeller_wrench(default_layout(drag_dynamics_enabled=False), u)
        ok &= np.array_equal(on.torque, off.torque)
        ok &= residual_drag_scalar(cfg, u) == 0.0
    # polarity-flip antisymmetry of the drag channel
    rng = np.random.default_rng(104)
    from freeflyer_dock.propulsion import Propeller, PropulsionConfig

    flipped = PropulsionConfig(
        propellers=[Propeller(r=p.r, n=p.n, a=p.a, f_max=p.f_max, s=-p.s) for p in cfg.propellers],
        k_drag=cfg.k_drag,
        drag_dynamics_enabled=True,
        polarity_mode=PolarityMode.ALTERNATING,
    )
    for _ in range(20):
        u = rng.uniform(0, 1, 8)
        ok &= residual_drag_scalar(flipped, u) == -residual_drag_scalar(cfg, u)
        moment = propeller_wrench(cfg.with_drag_dynamics(False), u)
        drag_a = propeller_wrench(cfg, u).torque - moment.torque
        drag_b = propeller_wrench(flipped, u).torque - moment.torque
        ok &= np.allclose(drag_b, -drag_a, atol=1e-18)
        ok &= np.array_equal(propeller_wrench(flipped, u).force, propeller_wrench(cfg, u).force)
    # wrench linearity
    base_u = rng.uniform(0, 1, 8)
    base = propeller_wrench(cfg, base_u)
    for alpha in (0.0, 0.3, 0.5, 1.0):
        scaled = propeller_wrench(cfg, alpha * base_u)
        ok &= np.allclose(scaled.force, alpha * base.force, atol=1e-12)
        ok &= np.allclose(scaled.torque, alpha * base.torque, atol=1e-12)
    # controllability: rank 6 and a strictly positive null vector
    for mode in (PolarityMode.ALTERNATING, PolarityMode.SAME_SIGN):
        b_mat = wrench_matrix(default_layout(mode))
        ok &= np.linalg.matrix_rank(b_mat) == 6
        basis = null_space(b_mat)
        found = False
        for ang in np.linspace(0, 2 * np.pi, 3600, endpoint=False):
            x = basis @ np.array([np.cos(ang), np.sin(ang)])
            if np.all(x > 1e-9) or np.all(x < -1e-9):
                found = True
                break
        ok &= found
    report(2, "propulsion drag cancellation, polarity flip, linearity, controllability", bool(ok))


def test_criterion_3_dynamics_conservation():
    inertia = InertialParams(mass=3.2, inertia=np.diag([0.0128] * 3))
    state = RigidBodyState(
        p=np.zeros(3),
        q=quat_normalize([0.8, 0.2, -0.4, 0.1]),
        v=np.array([0.07, -0.03, 0.02]),
        omega=np.array([0.3, -0.2, 0.45]),
    )
    wrench = BodyWrench(force=np.zeros(3), torque=np.zeros(3))
    v0 = state.v.copy()
    ok = True
    for _ in range(10_000):
        state = step_dynamics(state, wrench, inertia, 0.05)
        ok &= abs(np.linalg.norm(state.q) - 1.0) < 1e-9
    ok &= np.array_equal(state.v, v0)
    report(3, "torque-free trajectories preserve v exactly, q norm to 1e-9/step", bool(ok))


def test_criterion_4_reward_formulas():
    cfg = RewardConfig()
    prop = default_layout()
    goal_p = np.zeros(3)
    goal_q = np.array([1.0, 0, 0, 0])
    at_goal = RigidBodyState(p=np.zeros(3), q=goal_q, v=np.zeros(3), omega=np.zeros(3))
    r = compute_reward(
        at_goal, at_goal, goal_p, goal_q, np.zeros(8), np.zeros(8),
        per_propeller_torques(prop, np.zeros(8)), cfg, prop,
    )
    ok = abs(r.pose - 2.0) < 1e-12
    prev = RigidBodyState(p=[1.0, 0, 0], q=goal_q, v=np.zeros(3), omega=np.zeros(3))
    cur = RigidBodyState(p=[0.9, 0, 0], q=goal_q, v=np.zeros(3), omega=np.zeros(3))
    r = compute_reward(
        prev, cur, goal_p, goal_q, np.zeros(8), np.zeros(8),
        per_propeller_torques(prop, np.zeros(8)), cfg, prop,
    )
    ok &= abs(r.prog - 0.41) < 1e-12
    outside = np.array(cfg.cuboid_center) + np.array(cfg.cuboid_half_extents) * [1, 0, 0]
    outside = outside + [0.3, 0, 0]
    outside[1] = cfg.cuboid_center[1] + cfg.cuboid_half_extents[1] + 0.4
    state = RigidBodyState(p=outside, q=goal_q, v=np.zeros(3), omega=np.zeros(3))
    r = compute_reward(
        state, state, goal_p, goal_q, np.zeros(8), np.zeros(8),
        per_propeller_torques(prop, np.zeros(8)), cfg, prop,
    )
    ok &= abs(r.cuboid - (-0.5)) < 1e-12
    # the worked drag case pins its own inputs: f_max 0.1 N, k_drag 0.005 m
    same_sign = default_layout(PolarityMode.SAME_SIGN, f_max=0.1, k_drag=0.005)
    r = compute_reward(
        at_goal, at_goal, goal_p, goal_q, np.ones(8), np.ones(8),
        per_propeller_torques(same_sign, np.ones(8)), cfg, same_sign,
    )
    ok &= abs(r.drag - (-0.004)) < 1e-12
    report(4, "reward formulas match worked arithmetic to 1e-12", bool(ok))


def test_criterion_5_gradient_oracle():
    from tests.test_policy import assert_grads_close, numeric_gradient, small_params

    failures = 0
    for trial in range(100):
        rng = np.random.default_rng(5000 + trial)
        params = small_params(6000 + trial, obs_dim=4, act_dim=2, hidden=(6,))
        obs = rng.standard_normal((3, 4))
        actions = np.tanh(rng.standard_normal((3, 2)) * 0.8)
        dist, _ = policy_forward(params, obs)
        old_logp, _ = log_prob_and_entropy(dist, actions)
        old_logp = old_logp + rng.uniform(-0.05, 0.05, 3)
        adv = rng.standard_normal(3) + 0.5
        ret = rng.standard_normal(3)

        def loss_fn(p):
            value, _, _ = ppo_loss_and_grads(p, obs, actions, old_logp, adv, ret, 0.2, 0.5, 0.01)
            return value

        _, analytic, _ = ppo_loss_and_grads(params, obs, actions, old_logp, adv, ret, 0.2, 0.5, 0.01)
        try:
            assert_grads_close(analytic, numeric_gradient(loss_fn, params), rel_tol=1e-4)
        except AssertionError:
            failures += 1
    report(5, "100 finite-difference gradient checks, rel err < 1e-4", failures == 0, f"{failures} failures")


def test_criterion_6_gae_oracle():
    from tests.test_ppo import gae_reference

    ok = True
    for trial in range(200):
        rng = np.random.default_rng(7000 + trial)
        horizon = int(rng.integers(1, 11))
        rewards = rng.standard_normal(horizon)
        values = rng.standard_normal(horizon)
        dones = (rng.uniform(size=horizon) < 0.25).astype(float)
        bootstrap = rng.standard_normal()
        gamma = rng.uniform(0, 1)
        lam = rng.uniform(0, 1)
        adv, ret = compute_gae(rewards, values, dones, bootstrap, gamma, lam)
        ref_adv, ref_ret = gae_reference(rewards, values, dones, bootstrap, gamma, lam)
        ok &= np.allclose(adv, ref_adv, atol=1e-12) and np.allclose(ret, ref_ret, atol=1e-12)
        # exact limits
        adv0, _ = compute_gae(rewards, values, dones, bootstrap, gamma, 0.0)
        for t in range(horizon):
            v_next = bootstrap if t == horizon - 1 else values[t + 1]
            delta = rewards[t] + gamma * v_next * (1 - dones[t]) - values[t]
            ok &= adv0[t] == delta
        adv1, _ = compute_gae(rewards, values, np.zeros(horizon), bootstrap, 1.0, 1.0)
        for t in range(horizon):
            ok &= abs(adv1[t] - (rewards[t:].sum() + bootstrap - values[t])) < 1e-12
    report(6, "GAE equals brute-force expansion to 1e-12; limits exact", bool(ok))


def test_criterion_7_success_and_metrics_logic():
    tracker = SuccessTracker()
    ok = True
    for i in range(5):
        done = tracker.update(0.019, np.deg2rad(1.9))
        ok &= done == (i == 4)
    tracker = SuccessTracker()
    for _ in range(4):
        tracker.update(0.01, 0.0)
    tracker.update(1.0, 0.0)
    for _ in range(4):
        tracker.update(0.01, 0.0)
    ok &= not tracker.succeeded
    rng = np.random.default_rng(105)
    for _ in range(200):
        records = [
            EpisodeRecord(
                pos_err=rng.uniform(0, 0.05, 10),
                ori_err=rng.uniform(0, 0.08, 10),
                commands=np.zeros((10, 8)),
                stable_success=bool(rng.integers(2)),
                seed=0,
                episode=i,
                fingerprint="",
            )
            for i in range(int(rng.integers(1, 6)))
        ]
        s = summarize(records)
        ok &= s.pct_momentary <= min(s.pct_pos_below, s.pct_ori_below) + 1e-12
    report(7, "dwell counter semantics and momentary <= marginals", bool(ok))


def test_criterion_8_determinism(tmp_path):
    import yaml

    config = {
        "env": {"episode_length": 10},
        "ppo": {"horizon": 5, "n_envs": 3, "total_steps": 45, "epochs": 2,
                 "minibatches": 2, "checkpoint_interval": 100, "hidden": [16, 16]},
    }
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(config))
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["train", "--config", str(cfg_path), "--seed", "5", "--out", str(out)]) == 0
        eval_out = tmp_path / f"eval_{tag}"
        ckpt = out / "checkpoints" / "ckpt_final.json"
        assert main(["eval", "--checkpoint", str(ckpt), "--n-envs", "4", "--seed", "9",
                     "--out", str(eval_out)]) == 0
        outputs.append(
            (
                (out / "train_log.jsonl").read_bytes(),
                (out / "checkpoints" / "ckpt_final.json").read_bytes(),
                (eval_out / "records.jsonl").read_bytes(),
            )
        )
    ok = outputs[0] == outputs[1]
    report(8, "identical (config, seed) gives byte-identical logs and records", ok)


@pytest.fixture(scope="session")
def study_runs(tmp_path_factory):
    """Train and evaluate each study configuration once at the default budget."""
    root = tmp_path_factory.mktemp("study")
    results = {}
    for config_id in ("A", "B", "C", "D"):
        cfg = RunConfig()
        cfg.ablation = ablation_preset(config_id)
        cfg.seed = 0
        resolved = cfg.resolved()
        resolved.ppo.total_steps = ACCEPT_STEPS
        fingerprint = config_fingerprint(resolved)
        t0 = time.time()
        run = train(
            env_cfg=resolved.env,
            prop_cfg=resolved.propulsion.build(),
            reward_cfg=resolved.rewards,
            noise_cfg=resolved.noise,
            ppo_cfg=resolved.ppo,
            seed=resolved.seed,
            out_dir=root / config_id,
            fingerprint=fingerprint,
        )
        train_minutes = (time.time() - t0) / 60.0
        checkpoint = load_checkpoint(run.final_checkpoint)
        records = run_eval(
            checkpoint,
            env_cfg=resolved.env,
            prop_cfg=resolved.propulsion.build(),
            reward_cfg=resolved.rewards,
            noise_cfg=resolved.noise,
            n_envs=EVAL_EPISODES,
            seed=2024,
            expected_fingerprint=fingerprint,
        )
        results[config_id] = {
            "summary": summarize(records),
            "usage": propeller_usage(records),
            "records": records,
            "checkpoint": run.final_checkpoint,
            "train_minutes": train_minutes,
            "resolved": resolved,
        }
        print(
            f"[study] config {config_id}: {train_minutes:.1f} min train, "
            f"stable {results[config_id]['summary'].pct_stable_success:.1f}%, "
            f"ori {results[config_id]['summary'].final_ori_err_deg:.2f} deg"
        )
    return results


def test_criterion_9_polarity_ablation_ordering(study_runs):
    summary_b = study_runs["B"]["summary"]
    summary_c = study_runs["C"]["summary"]
    ok_b = summary_b.pct_stable_success >= 50.0
    ok_c = summary_c.pct_stable_success <= 10.0
    ok_ori = summary_b.final_ori_err_deg * 2.0 <= summary_c.final_ori_err_deg
    detail = (
        f"B stable {summary_b.pct_stable_success:.1f}% (need >=50), "
        f"C stable {summary_c.pct_stable_success:.1f}% (need <=10), "
        f"ori B {summary_b.final_ori_err_deg:.2f} vs C {summary_c.final_ori_err_deg:.2f} deg (need 2x)"
    )
    report(9, "alternating polarity beats same-sign polarity", ok_b and ok_c and ok_ori, detail)


def test_criterion_10_drag_dynamics_ordering(study_runs):
    summary_a = study_runs["A"]["summary"]
    summary_b = study_runs["B"]["summary"]
    ok = summary_b.final_ori_err_deg <= summary_a.final_ori_err_deg
    detail = f"ori B {summary_b.final_ori_err_deg:.2f} <= A {summary_a.final_ori_err_deg:.2f} deg"
    report(10, "modeling drag dynamics does not hurt final orientation", ok, detail)


def test_criterion_11_drag_penalty_usage_dispersion(study_runs):
    usage_b = study_runs["B"]["usage"]
    usage_d = study_runs["D"]["usage"]
    cv_b = float(np.std(usage_b) / np.mean(usage_b))
    cv_d = float(np.std(usage_d) / np.mean(usage_d))
    detail = f"usage CV D {cv_d:.3f} > B {cv_b:.3f}"
    report(11, "removing the drag penalty disperses propeller usage", cv_d > cv_b, detail)


def test_criterion_12_eval_throughput(study_runs):
    entry = study_runs["B"]
    resolved = entry["resolved"]
    checkpoint = load_checkpoint(entry["checkpoint"])
    t0 = time.time()
    records = run_eval(
        checkpoint,
        env_cfg=resolved.env,
        prop_cfg=resolved.propulsion.build(),
        reward_cfg=resolved.rewards,
        noise_cfg=resolved.noise,
        n_envs=300,
        seed=77,
    )
    elapsed = time.time() - t0
    ok = elapsed <= 300.0 and len(records) == 300
    report(12, "300 deterministic evaluation episodes within 5 minutes", ok, f"{elapsed:.1f} s")
