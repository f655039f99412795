"""Acceptance gate: one test per criterion, each printed as a PASS/FAIL line
and asserted at its stated tolerance.

Heavy artifacts (the 5000-episode dataset, trained estimators, ablation
models) are cached under runs/acceptance/ keyed by the frozen acceptance
configuration; delete that directory to force a clean rebuild. Criterion
runtime budgets are asserted when the artifact is actually built and replayed
from the cache metadata otherwise. Every line is also appended to
runs/acceptance/acceptance_report.txt.

Run with:  pytest tests/test_acceptance.py -m acceptance -v -s
"""

import dataclasses
import json
import os
import time

import numpy as np
import pytest

from wrenchflow import autodiff as ad
from wrenchflow import control as ctl
from wrenchflow import datagen as dg
from wrenchflow import dynamics as dyn
from wrenchflow.cfm import (Adam, ArchConfig, FlowSchedule, TrainConfig,
                            VelocityFieldModel, cfm_train_step, fit,
                            load_checkpoint, sample, sample_batch, save_checkpoint,
                            standardize_chunk)
from wrenchflow.datagen import NoiseConfig
from wrenchflow.estimators.cpf import ContactParticleFilter
from wrenchflow.estimators.gmo import MomentumObserver
from wrenchflow.evalcli import experiments, harness, pipeline
from wrenchflow.evalcli.cli import _load_mlp, _save_mlp
from wrenchflow.evalcli.config import acceptance_config, resolve_model
from wrenchflow.robotmodel import planar_humanoid_fixture, shift_wrench

pytestmark = pytest.mark.acceptance

CACHE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                     "runs", "acceptance")
SEED = 20240


def _report(num, name, ok, detail):
    line = f"CRITERION {num:>2} {'PASS' if ok else 'FAIL'}: {name} ({detail})"
    print("\n" + line, flush=True)
    os.makedirs(CACHE, exist_ok=True)
    with open(os.path.join(CACHE, "acceptance_report.txt"), "a") as f:
        f.write(line + "\n")
    assert ok, line


def _cache_json(name, builder):
    """Load a cached JSON blob or build + store it (with its build time)."""
    os.makedirs(CACHE, exist_ok=True)
    path = os.path.join(CACHE, name)
    if os.path.exists(path):
        with open(path) as f:
            return json.load(f), True
    t0 = time.time()
    payload = builder()
    payload["_build_seconds"] = time.time() - t0
    with open(path, "w") as f:
        json.dump(payload, f)
    return payload, False


@pytest.fixture(scope="module")
def accept_cfg():
    return acceptance_config(SEED)


@pytest.fixture(scope="module")
def model(accept_cfg):
    return resolve_model(accept_cfg)


@pytest.fixture(scope="module")
def train_dataset(accept_cfg, model):
    """The 5000-rollout training dataset (criterion 6), cached on disk."""
    path = os.path.join(CACHE, "train.wsds")
    meta_path = os.path.join(CACHE, "train_meta.json")
    os.makedirs(CACHE, exist_ok=True)
    if not os.path.exists(path):
        t0 = time.time()
        header, records = pipeline.generate_dataset(accept_cfg, model, SEED)
        dg.write_dataset(path, header, records)
        with open(meta_path, "w") as f:
            json.dump({"gen_seconds": time.time() - t0}, f)
        return header, records, time.time() - t0
    header, records = dg.read_dataset(path)
    gen_seconds = json.load(open(meta_path))["gen_seconds"] if os.path.exists(meta_path) else 0.0
    return header, records, gen_seconds


@pytest.fixture(scope="module")
def cfm_model(accept_cfg, model, train_dataset):
    """The criterion-6 estimator plus its wall-clock budget bookkeeping."""
    header, records, gen_seconds = train_dataset
    path = os.path.join(CACHE, "cfm.wsmf")
    meta_path = os.path.join(CACHE, "cfm_meta.json")
    if not os.path.exists(path):
        t0 = time.time()
        net, _ = pipeline.train_cfm(accept_cfg, model, records, SEED,
                                    log_every=1000,
                                    log_fn=lambda m: print(m, flush=True))
        train_seconds = time.time() - t0
        save_checkpoint(net, path)
        with open(meta_path, "w") as f:
            json.dump({"train_seconds": train_seconds}, f)
    meta = json.load(open(meta_path))
    return load_checkpoint(path), gen_seconds + meta["train_seconds"]


@pytest.fixture(scope="module")
def mlp_model(accept_cfg, train_dataset):
    """Single-contact MLP baseline for criterion 7 (trained outside the
    criterion-6 budget; criterion 7 assumes trained models)."""
    header, records, _ = train_dataset
    path = os.path.join(CACHE, "mlp.wsmf")
    if not os.path.exists(path):
        net, _ = pipeline.train_mlp(accept_cfg, records, SEED)
        _save_mlp(net, path)
    return _load_mlp(path)


@pytest.fixture(scope="module")
def heldout_clips(accept_cfg, model):
    return pipeline.eval_clips(accept_cfg, model, SEED + 77, n_clips=1000)


# ---------------------------------------------------------------------------

def test_criterion_01_dynamics_property_suite(model):
    t0 = time.time()
    rng = np.random.default_rng(1)
    # mass matrix symmetry / positive definiteness, 100 random configurations
    sym_ok = pd_ok = True
    for _ in range(100):
        st = dyn.GeneralizedState(0.0, rng.normal(0, 1, 3), rng.normal(0, 0.6, 6),
                                  rng.normal(0, 1, 9))
        H = dyn.mass_matrix(model, st).H
        sym_ok &= np.abs(H - H.T).max() < 1e-9 * np.abs(H).max()
        pd_ok &= np.linalg.eigvalsh(H).min() > 0
    # Jacobian finite differences, 100 random configurations
    kin = dyn.KinematicTables.from_model(model)
    jac_err = 0.0
    for _ in range(100):
        st = dyn.GeneralizedState(0.0, rng.normal(0, 1, 3), rng.normal(0, 0.6, 6),
                                  rng.normal(0, 1, 9))
        body = int(rng.integers(7))
        pt = rng.normal(0, 0.2, 2)
        J = dyn.point_jacobian(model, st, body, pt).J
        q = st.q
        eps = 1e-6
        for i in range(9):
            dq = np.zeros(9)
            dq[i] = eps
            ang_p, pos_p = dyn.fk_batch(kin, (q + dq)[:3], (q + dq)[3:])
            ang_m, pos_m = dyn.fk_batch(kin, (q - dq)[:3], (q - dq)[3:])
            pp = pos_p[body] + dyn._rot(ang_p[body], pt)
            pm = pos_m[body] + dyn._rot(ang_m[body], pt)
            jac_err = max(jac_err, np.abs(J[:2, i] - (pp - pm) / (2 * eps)).max())
    # force/wrench equivalence at every region
    equiv_err = 0.0
    for region in model.regions:
        st = dyn.GeneralizedState(0.0, rng.normal(0, 0.5, 3), rng.normal(0, 0.5, 6),
                                  rng.normal(0, 0.5, 9))
        pt = region.points_m[int(rng.integers(len(region.points_m)))]
        f = rng.normal(0, 60, 2)
        tau = rng.normal(0, 10, 6)
        jp = dyn.point_jacobian(model, st, region.body_id, pt)
        a1 = dyn.forward_dynamics(model, st, tau, [(jp, np.array([*f, 0.0]))])
        ang, pos = dyn.fk_batch(kin, st.q_base, st.q_joint)
        p_w = pos[region.body_id] + dyn._rot(ang[region.body_id], pt)
        c_w = pos[region.body_id] + dyn._rot(ang[region.body_id], region.com_m)
        jc = dyn.point_jacobian(model, st, region.body_id, region.com_m)
        a2 = dyn.forward_dynamics(model, st, tau, [(jc, shift_wrench(f, p_w, c_w))])
        equiv_err = max(equiv_err, np.abs(a1 - a2).max())
    # energy drift in unforced frictionless flight at dt = 1e-4
    bodies = tuple(dataclasses.replace(b, contact_points_m=np.zeros((0, 2)))
                   for b in model.bodies)
    flight = dataclasses.replace(model, bodies=bodies)
    st = dyn.GeneralizedState(0.0, np.array([0.0, 0.0, 0.1]), flight.q_default_rad.copy(),
                              np.concatenate([[1.5, 2.0, 1.0], rng.normal(0, 1.5, 6)]))
    e0 = dyn.total_energy(flight, st)
    for _ in range(10_000):
        st = dyn.step(flight, st, np.zeros(6), [], dyn.GroundContactConfig(), 1e-4)
    drift = abs(dyn.total_energy(flight, st) - e0) / abs(e0)
    elapsed = time.time() - t0
    ok = sym_ok and pd_ok and jac_err < 1e-5 and equiv_err < 1e-9 \
        and drift < 0.005 and elapsed < 60
    _report(1, "dynamics property suite", ok,
            f"jac_fd={jac_err:.2e}, wrench_equiv={equiv_err:.2e}, "
            f"drift/s={drift:.2e}, {elapsed:.0f}s")


def test_criterion_02_gmo_oracle(model):
    t0 = time.time()
    bodies = tuple(dataclasses.replace(b, contact_points_m=np.zeros((0, 2)))
                   for b in model.bodies)
    flight = dataclasses.replace(model, bodies=bodies)
    gains = ctl.default_gains(flight)
    # constant wrench: relative error < 5% after 5/K_O seconds
    st = ctl.standing_state(flight)
    st = dyn.GeneralizedState(0.0, st.q_base + [0, 5, 0], st.q_joint, st.v)
    obs = MomentumObserver(flight, gain=50.0)
    body, pt, force = 0, np.array([0.10, 0.28]), np.array([40.0, 25.0])
    worst_rel = 0.0
    for k in range(200):
        tau = ctl.pd_torques(flight, st, gains, ctl.TIERS["good"])
        true_gen = dyn.point_jacobian(flight, st, body, pt).J.T @ np.array([*force, 0.0])
        r = obs.update(st, tau, 1e-3)
        if k >= 100:
            worst_rel = max(worst_rel, np.linalg.norm(r - true_gen)
                            / np.linalg.norm(true_gen))
        st = dyn.step(flight, st, tau, [dyn.PointForce(body, pt, force)],
                      dyn.GroundContactConfig(), 1e-3)
    # zero external force: residual bounded by integration error over 10 s
    st = dyn.GeneralizedState(0.0, np.array([0.0, 3.0, 0.2]), flight.q_default_rad.copy(),
                              np.concatenate([[0.5, 1.0, 1.2],
                                              np.random.default_rng(0).normal(0, 1, 6)]))
    obs2 = MomentumObserver(flight, gain=50.0)
    worst_drift = 0.0
    for _ in range(10_000):
        r = obs2.update(st, np.zeros(6), 1e-3)
        worst_drift = max(worst_drift, float(np.linalg.norm(r)))
        st = dyn.step(flight, st, np.zeros(6), [], dyn.GroundContactConfig(), 1e-3)
    elapsed = time.time() - t0
    ok = worst_rel < 0.05 and worst_drift < 0.5 and elapsed < 60
    _report(2, "GMO oracle", ok,
            f"rel_err={worst_rel:.4f}, 10s_drift={worst_drift:.2e} N, {elapsed:.0f}s")


def test_criterion_03_cpf_oracle(model):
    t0 = time.time()
    st = ctl.standing_state(model)
    st = dyn.GeneralizedState(0.0, st.q_base + [0, 5, 0], st.q_joint, st.v)
    hits = 0
    for trial in range(100):
        rng = np.random.default_rng(3000 + trial)
        region_index = int(rng.integers(1, 8))
        region = model.region(region_index)
        f = np.concatenate([rng.normal(0, 50, 2), rng.normal(0, 5, 1)])
        r = dyn.point_jacobian(model, st, region.body_id, region.com_m).J.T @ f
        cpf = ContactParticleFilter(model, rng, n_particles=200)
        for _ in range(10):
            ps = cpf.step(st, r)
        hits += int(np.argmax(ps.region_posterior(7)) + 1 == region_index)
    elapsed = time.time() - t0
    ok = hits >= 90 and elapsed < 120
    _report(3, "CPF oracle", ok, f"mode hits {hits}/100, {elapsed:.0f}s")


def test_criterion_04_autodiff_suite():
    t0 = time.time()
    rng = np.random.default_rng(4)

    def fd_check(build, arrays, coords=8, tol=1e-4):
        tensors = [ad.Tensor.param(np.asarray(a, dtype=np.float64)) for a in arrays]
        out = build(tensors)
        out.backward()
        worst = 0.0
        for t in tensors:
            flat = t.data.reshape(-1)
            for idx in rng.choice(flat.size, size=min(coords, flat.size), replace=False):
                orig = flat[idx]
                eps = 1e-6
                flat[idx] = orig + eps
                fp = float(build([x.detach() for x in tensors]).data)
                flat[idx] = orig - eps
                fm = float(build([x.detach() for x in tensors]).data)
                flat[idx] = orig
                num = (fp - fm) / (2 * eps)
                ana = float(t.grad.reshape(-1)[idx])
                worst = max(worst, abs(num - ana) / max(1e-8, abs(num), abs(ana)))
        return worst

    worst = 0.0
    # primitives
    worst = max(worst, fd_check(lambda ts: (ts[0] @ ts[1]).sum(),
                                [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]))
    worst = max(worst, fd_check(lambda ts: ((ts[0] + ts[1]) * ts[0]).sum(),
                                [rng.normal(size=(3, 4)), rng.normal(size=(4,))]))
    for op in ("tanh", "silu", "exp", "relu"):
        base = rng.normal(size=(3, 4))
        base[np.abs(base) < 0.05] += 0.1
        worst = max(worst, fd_check(lambda ts, o=op: getattr(ts[0], o)().sum(), [base]))
    worst = max(worst, fd_check(
        lambda ts: ts[0].layer_norm(ts[1], ts[2]).sum(),
        [rng.normal(size=(3, 8)), rng.normal(size=(8,)) + 1.0, rng.normal(size=(8,))]))
    worst = max(worst, fd_check(lambda ts: ad.sigmoid(ts[0]).sum(), [rng.normal(size=(3, 4))]))
    worst = max(worst, fd_check(lambda ts: (ad.softmax(ts[0]) * ts[1]).sum(),
                                [rng.normal(size=(3, 5)), rng.normal(size=(3, 5))]))
    targets = (rng.random((3, 4)) > 0.5).astype(float)
    worst = max(worst, fd_check(lambda ts: ad.bce_with_logits(ts[0], targets),
                                [rng.normal(size=(3, 4))]))
    worst = max(worst, fd_check(lambda ts: ad.mse(ts[0], targets), [rng.normal(size=(3, 4))]))
    worst = max(worst, fd_check(lambda ts: ad.concat([ts[0], ts[1]], -1).mean(),
                                [rng.normal(size=(2, 3)), rng.normal(size=(2, 3))]))

    # full composite training loss through the real model, f64
    arch = ArchConfig(obs_dim=5, n_regions=2, wrench_dim=3, horizon=4, d_model=16,
                      n_layers=2, head="attention", n_slots=2, slot_dim=4,
                      context_radius=1, chunk_scales=(50.0, 50.0, 10.0))
    net = VelocityFieldModel(arch, np.random.default_rng(0)).astype(np.float64)
    obs = rng.normal(size=(3, 4, 5))
    chunk = rng.normal(size=(3, 4, 2, 3)) * 20
    gt_mask = (rng.random((3, 4, 2)) > 0.6).astype(float)
    x1 = standardize_chunk(chunk, arch.chunk_scales)
    x0 = rng.normal(size=x1.shape)
    tflow = rng.random(3)
    xt = (1 - tflow[:, None, None, None]) * x0 + tflow[:, None, None, None] * x1
    u = x1 - x0
    cfg = TrainConfig(obs_noise=NoiseConfig())
    lam = np.where(gt_mask > 0, 1.0, cfg.lambda_neg)[..., None] * np.ones_like(x1)
    nonc = (gt_mask <= 0)[..., None] * np.ones_like(x1)
    bce_w = np.where(gt_mask > 0, cfg.mask_pos_weight, 1.0)

    def full_loss(_):
        v, logits = net.forward(xt, tflow, obs)
        l_w = ad.mse(v, u, weights=lam)
        l_m = ad.bce_with_logits(logits, gt_mask, weights=bce_w)
        x1h = ad.Tensor(xt) + v * (1 - tflow[:, None, None, None])
        l_c = ad.mse(x1h, np.zeros_like(x1), weights=nonc) * cfg.lambda_c
        l_s = ad.sigmoid(logits).mean() * cfg.lambda_s
        return l_w + l_m + l_c + l_s

    out = full_loss(None)
    out.backward()
    names = [k for k, p in net.params.items() if p.grad is not None]
    for _ in range(20):
        name = names[int(rng.integers(len(names)))]
        p = net.params[name]
        flat = p.data.reshape(-1)
        idx = int(rng.integers(flat.size))
        orig = flat[idx]
        eps = 1e-6
        flat[idx] = orig + eps
        fp = float(full_loss(None).data)
        flat[idx] = orig - eps
        fm = float(full_loss(None).data)
        flat[idx] = orig
        num = (fp - fm) / (2 * eps)
        ana = float(p.grad.reshape(-1)[idx])
        worst = max(worst, abs(num - ana) / max(1e-8, abs(num), abs(ana)))
    elapsed = time.time() - t0
    ok = worst < 1e-4 and elapsed < 60
    _report(4, "autodiff gradient suite", ok, f"worst_rel={worst:.2e}, {elapsed:.0f}s")


def test_criterion_05_bimodal_toy():
    t0 = time.time()
    arch = ArchConfig(obs_dim=1, n_regions=1, wrench_dim=1, horizon=1, d_model=64,
                      n_layers=3, head="linear", context_radius=0, chunk_scales=(1.0,))
    net = VelocityFieldModel(arch, np.random.default_rng(0))
    cfg = TrainConfig(lr=1e-3, batch_size=256, obs_noise=NoiseConfig())
    opt = Adam(net.params, cfg)
    rng = np.random.default_rng(1)
    for _ in range(800):
        x1 = np.where(rng.random(256) < 0.5, 1.0, -1.0).astype(np.float32)
        cfm_train_step(net, np.zeros((256, 1, 1), np.float32),
                       x1.reshape(256, 1, 1, 1), np.ones((256, 1, 1), np.float32),
                       rng, cfg, opt)
    train_time = time.time() - t0
    preds = sample_batch(net, np.zeros((2000, 1, 1), np.float32), FlowSchedule(10),
                         np.random.default_rng(2))
    vals = np.array([p.wrench_raw[0, 0, 0] for p in preds])
    plus = float(np.mean(vals > 0))
    ok = abs(plus - 0.5) < 0.1 and train_time <= 300
    _report(5, "CFM bimodal toy", ok,
            f"mode mass +1: {plus:.3f}, train {train_time:.0f}s")


def test_criterion_06_desk_end_to_end(accept_cfg, model, cfm_model, heldout_clips):
    net, budget_seconds = cfm_model
    t0 = time.time()
    preds = harness.predict_cfm(net, heldout_clips, seed=SEED + 1,
                                steps=accept_cfg.eval.flow_steps)
    rep = experiments.evaluate_predictions(preds, heldout_clips, model,
                                           pipeline.tolerances(accept_cfg))
    eval_seconds = time.time() - t0
    total = budget_seconds + eval_seconds
    # persist the single-contact report for criterion 7's false-alarm ratio
    with open(os.path.join(CACHE, "single_contact_metrics.json"), "w") as f:
        json.dump({"false_alarm_pct": rep.false_alarm_pct,
                   "detection_rate_pct": rep.detection_rate_pct}, f)
    ok = (rep.detection_rate_pct >= 80.0 and rep.false_alarm_pct <= 10.0
          and rep.tolerant_link_pct >= 70.0 and rep.tolerant_time_pct >= 90.0
          and total <= 7200)
    _report(6, "desk end-to-end (standing, good tier)", ok,
            f"det={rep.detection_rate_pct:.1f}% fa={rep.false_alarm_pct:.1f}% "
            f"link±1={rep.tolerant_link_pct:.1f}% time±0.1s={rep.tolerant_time_pct:.1f}% "
            f"n={rep.n_pos}+{rep.n_neg}, {total / 60:.0f} min total")


def test_criterion_07_zero_shot_multi_contact(accept_cfg, model, cfm_model, mlp_model,
                                              train_dataset):
    net, _ = cfm_model
    header, _, _ = train_dataset
    t0 = time.time()
    rows = experiments.multi_contact_eval(
        model, pipeline.gains_for(model), accept_cfg.tier, net, mlp_model, header,
        k_values=(2,), n_clips_per_k=250, seed=SEED + 5,
        episode_s=accept_cfg.gen.episode_s, steps=accept_cfg.eval.flow_steps,
        tol=pipeline.tolerances(accept_cfg))
    by_est = {r["estimator"]: r for r in rows}
    cfm_det = by_est["cfm"]["detection_rate_pct"]
    mlp_det = by_est["mlp"]["detection_rate_pct"]
    cfm_fa = by_est["cfm"]["false_alarm_pct"]
    single = json.load(open(os.path.join(CACHE, "single_contact_metrics.json")))
    fa_bound = max(3.0 * single["false_alarm_pct"], 1e-9)
    elapsed = time.time() - t0
    ok = (cfm_det > mlp_det and cfm_det - mlp_det >= 20.0
          and cfm_fa <= fa_bound and elapsed <= 1800)
    _report(7, "zero-shot multi-contact ordering", ok,
            f"top-1 det cfm={cfm_det:.1f}% vs mlp={mlp_det:.1f}%, "
            f"cfm_fa={cfm_fa:.1f}% (bound {fa_bound:.1f}%), {elapsed / 60:.0f} min")


def test_criterion_08_noise_sweep_ordering(accept_cfg, model, cfm_model):
    net, _ = cfm_model
    t0 = time.time()
    clips = pipeline.eval_clips(accept_cfg, model, SEED + 177,
                                n_clips=accept_cfg.noise.n_clips)
    estimators = {
        "cfm": {"cfm_model": net, "steps": accept_cfg.eval.flow_steps},
        "gmo": {"gmo_cfg": {"gain": accept_cfg.gmo.gain, "sigma_r": accept_cfg.gmo.sigma_r}},
        "cpf": {"cpf_cfg": {"n_particles": accept_cfg.cpf.particles,
                            "sigma_lik": accept_cfg.cpf.sigma_lik}},
    }
    rows = experiments.noise_sweep(estimators, (0.0, 0.01, 0.02, 0.05), clips, model,
                                   pipeline.gains_for(model), accept_cfg.tier,
                                   SEED + 9, pipeline.tolerances(accept_cfg))
    deg = {}
    for est in estimators:
        series = sorted((r for r in rows if r["estimator"] == est),
                        key=lambda r: r["sigma"])
        deg[est] = series[0]["target_link_pct"] - series[-1]["target_link_pct"]
    with open(os.path.join(CACHE, "noise_sweep_rows.json"), "w") as f:
        json.dump(rows, f)
    elapsed = time.time() - t0
    ok = abs(deg["cfm"]) < abs(deg["gmo"]) and abs(deg["cfm"]) < abs(deg["cpf"]) \
        and elapsed <= 1200
    _report(8, "noise-sweep ordering", ok,
            f"degradation cfm={deg['cfm']:.1f} gmo={deg['gmo']:.1f} "
            f"cpf={deg['cpf']:.1f} pts, {elapsed / 60:.0f} min")


def test_criterion_09_controller_robustness(accept_cfg, model):
    rb = accept_cfg.robustness
    gains = pipeline.gains_for(model)

    def build():
        stress = dg.ContactSamplerConfig(
            force_min_n=rb.stress_force_min_n, force_max_n=rb.stress_force_max_n,
            duration_min_s=rb.stress_duration_min_s,
            duration_max_s=rb.stress_duration_max_s)
        rng = np.random.default_rng([SEED, 5])
        events = [[dg.sample_contact(rng, stress, model, rb.episode_s)]
                  for _ in range(rb.n_metric_episodes)]
        seeds = np.arange(rb.n_metric_episodes) + SEED
        test_clips = pipeline.eval_clips(accept_cfg, model, SEED + 277,
                                         n_clips=rb.test_clips, tier="good")

        def trainer(tier_label):
            tier_seed = SEED + 31 * (1 + list(rb.tiers).index(tier_label))
            _, records = pipeline.generate_dataset(
                accept_cfg, model, tier_seed,
                n_episodes=rb.train_episodes_per_tier, tier=tier_label)
            net, _ = pipeline.train_cfm(accept_cfg, model, records, SEED,
                                        epochs=rb.train_epochs)

            def predict(clips):
                return harness.predict_cfm(net, clips, seed=SEED,
                                           steps=accept_cfg.eval.flow_steps)
            return predict, {}

        rows = experiments.robustness_ablation(
            model, gains, rb.tiers, events, rb.episode_s, seeds, trainer,
            test_clips, SEED, pipeline.tolerances(accept_cfg), rb.eps,
            rb.recovery_window)
        return {"rows": rows}

    payload, cached = _cache_json("robustness_rows.json", build)
    rows = payload["rows"]
    by_tier = {r["tier"]: r for r in rows}
    sr = [by_tier[t]["sr_pct"] for t in ("good", "fair", "poor")]
    fa_good = by_tier["good"]["false_alarm_pct"]
    fa_poor = by_tier["poor"]["false_alarm_pct"]
    elapsed = payload["_build_seconds"]
    ok = sr[0] >= sr[1] >= sr[2] and fa_good <= fa_poor and elapsed <= 3 * 3600
    _report(9, "controller-robustness ordering", ok,
            f"SR good/fair/poor = {sr[0]:.1f}/{sr[1]:.1f}/{sr[2]:.1f}%, "
            f"FA good-trained {fa_good:.1f}% vs poor-trained {fa_poor:.1f}%, "
            f"{elapsed / 60:.0f} min{' (cached)' if cached else ''}")


def test_criterion_10_determinism_and_formats(tmp_path, model):
    t0 = time.time()
    cfg_small = acceptance_config(SEED)
    cfg_small = dataclasses.replace(
        cfg_small, gen=dataclasses.replace(cfg_small.gen, n_episodes=6, episode_s=4.0,
                                           batch_size=3, stride=25, ratio_pos=1,
                                           ratio_neg=1))
    # byte-identical datasets
    paths = []
    for name in ("a.wsds", "b.wsds"):
        header, records = pipeline.generate_dataset(cfg_small, model, 99)
        p = tmp_path / name
        dg.write_dataset(p, header, records)
        paths.append(p.read_bytes())
    data_ok = paths[0] == paths[1]
    # byte-identical checkpoints under a fixed training seed
    header, records = pipeline.generate_dataset(cfg_small, model, 99)
    blobs = []
    for name in ("m1.wsmf", "m2.wsmf"):
        cfg_train = dataclasses.replace(
            cfg_small, train=dataclasses.replace(cfg_small.train, epochs=1,
                                                 d_model=32, n_layers=2, head="linear"))
        net, _ = pipeline.train_cfm(cfg_train, model, records, 7)
        p = tmp_path / name
        save_checkpoint(net, p)
        blobs.append(p.read_bytes())
    ckpt_ok = blobs[0] == blobs[1]
    # round trips
    h2, r2 = dg.read_dataset(tmp_path / "a.wsds")
    rt_ok = all(np.array_equal(a.obs, b.obs) and np.array_equal(a.wrench, b.wrench)
                and np.array_equal(a.mask, b.mask) for a, b in zip(records, r2))
    net2 = load_checkpoint(tmp_path / "m1.wsmf")
    rt_ok &= all(np.array_equal(net2.params[k].data, net.params[k].data)
                 for k in net.params)
    # corrupted files rejected with named errors
    bad = tmp_path / "bad.wsds"
    bad.write_bytes(b"XXXX" + b"\x00" * 32)
    try:
        dg.read_dataset(bad)
        err_ok = False
    except dg.DatasetFormatError as e:
        err_ok = "bad magic" in str(e)
    blob = (tmp_path / "m1.wsmf").read_bytes()
    (tmp_path / "short.wsmf").write_bytes(blob[:-64])
    try:
        load_checkpoint(tmp_path / "short.wsmf")
        err_ok = False
    except Exception as e:
        err_ok &= "parameter block" in str(e)
    # byte-identical reports
    from wrenchflow.evalcli.reporting import write_csv
    clips = pipeline.eval_clips(cfg_small, model, 55, n_clips=10)
    reports = []
    for name in ("r1.csv", "r2.csv"):
        preds = harness.predict_gmo(model, clips)
        rep = experiments.evaluate_predictions(preds, clips, model)
        p = tmp_path / name
        write_csv(p, [dict(rep.as_rows())])
        reports.append(p.read_bytes())
    rep_ok = reports[0] == reports[1]
    elapsed = time.time() - t0
    ok = data_ok and ckpt_ok and rt_ok and err_ok and rep_ok and elapsed < 180
    _report(10, "determinism and formats", ok,
            f"dataset={data_ok} ckpt={ckpt_ok} roundtrip={rt_ok} "
            f"errors={err_ok} reports={rep_ok}, {elapsed:.0f}s")


def test_criterion_11_inference_budget(accept_cfg, model, cfm_model, heldout_clips):
    net, _ = cfm_model
    schedule = FlowSchedule(10)
    window = heldout_clips[0].obs
    rng = np.random.default_rng(0)
    sample(net, window, schedule, rng)  # warm-up
    times = []
    for _ in range(20):
        t0 = time.perf_counter()
        sample(net, window, schedule, rng)
        times.append((time.perf_counter() - t0) * 1e3)
    median = float(np.median(times))
    ok = median <= 50.0
    _report(11, "inference budget (K=10, one window)", ok,
            f"median {median:.1f} ms over 20 runs")
