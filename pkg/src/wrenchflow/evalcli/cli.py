"""Command-line front end.

Subcommands: rollout, gen-data, train, infer, eval, baseline, sweep-noise,
multi-contact, ablate-robustness, ablate-crosstask. Every run writes its
resolved config snapshot, seed, and git-describe string next to the outputs;
metric tables are emitted as CSV plus markdown, with matplotlib figures
rendered alongside (disable with --no-plots). Exit code 0 on success,
nonzero with a one-line machine-parsable error otherwise.

Predictions and ground truth share the dataset container: `infer` writes a
.wsds whose mask carries probabilities and whose wrench field is gated, so
`eval --pred p.wsds --gt g.wsds` aligns records by index. The analytical
baselines need privileged simulator state, so `baseline` regenerates its
evaluation clips from the config instead of reading a dataset file.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .. import control as ctl
from .. import datagen as dg
from ..cfm import FlowSchedule, load_checkpoint, sample_batch, save_checkpoint
from ..cfm.checkpoint import read_param_file, write_param_file
from ..estimators import PredictionRecord
from ..estimators.mlp import MLPConfig, MLPEstimator
from ..autodiff import Tensor
from . import experiments, figures, harness, pipeline
from .config import ConfigError, ExperimentConfig, load_config, resolve_model
from .metrics import score
from .reporting import (report_header_lines, write_csv, write_markdown_table,
                        write_run_meta, write_timings)


class CLIError(ValueError):
    pass


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _need_file(path, what):
    if not path:
        raise CLIError(f"missing required {what}")
    if not os.path.exists(path):
        raise CLIError(f"{what} not found: {path}")
    return path


def _load_cfg(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "delta", None) is not None:
        overrides["eval.delta"] = args.delta
    if getattr(args, "steps", None) is not None:
        overrides["eval.flow_steps"] = args.steps
    if getattr(args, "tier", None) is not None:
        overrides["tier"] = args.tier
    if args.config:
        _need_file(args.config, "config file")
    return load_config(args.config, overrides)


def _save_mlp(model: MLPEstimator, path) -> None:
    write_param_file(path, "mlp", model.meta(), model.params)


def _load_mlp(path) -> MLPEstimator:
    kind, meta, params = read_param_file(path)
    if kind != "mlp":
        raise CLIError(f"checkpoint kind {kind!r} is not an MLP")
    cfg = MLPConfig(hidden=tuple(meta["hidden"]), chunk_scales=tuple(meta["chunk_scales"]))
    model = MLPEstimator(meta["obs_dim"], meta["horizon"], meta["n_regions"],
                         meta["wrench_dim"], cfg)
    for name, value in params.items():
        model.params[name] = Tensor.param(value.astype(np.float32))
    return model


# ---------------------------------------------------------------------------
# subcommands

def cmd_rollout(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    gains = pipeline.gains_for(model)
    out = _out_dir(args)
    rng = np.random.default_rng([cfg.seed, 0, 1])
    events = [dg.sample_contact(rng, cfg.sampler, model, cfg.gen.episode_s)]
    rollout = ctl.run_episode(model, gains, ctl.TIERS[cfg.tier], events,
                              cfg.gen.episode_s, cfg.seed)
    rows = []
    for k in range(len(rollout)):
        row = {"t_s": rollout.t[k], "base_x_m": rollout.base_pos[k, 0],
               "base_z_m": rollout.base_pos[k, 1], "pitch_rad": rollout.base_pitch[k],
               "posture_err_rad": rollout.posture_err[k],
               "violation_nm": rollout.violation[k]}
        for j in range(model.n):
            row[f"q{j}_rad"] = rollout.q_joint[k, j]
            row[f"tau{j}_nm"] = rollout.tau[k, j]
        rows.append(row)
    write_csv(os.path.join(out, "rollout.csv"), rows)
    ev_rows = [{"region": e.region_index, "fx_n": e.force_world[0], "fz_n": e.force_world[1],
                "start_s": e.start_s, "duration_s": e.duration_s} for e in rollout.events]
    write_csv(os.path.join(out, "events.csv"), ev_rows)
    write_markdown_table(os.path.join(out, "report.md"), ev_rows,
                         title=f"rollout (fall={rollout.fall}, frames={len(rollout)})")
    write_run_meta(out, "rollout", cfg.seed, cfg.to_dict())
    print(f"rollout: {len(rollout)} frames, fall={rollout.fall} -> {out}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    header, records = pipeline.generate_dataset(
        cfg, model, cfg.seed,
        progress=lambda done, total, nclips:
            print(f"episodes {done}/{total}, clips {nclips}", flush=True))
    path = os.path.join(out, args.name)
    dg.write_dataset(path, header, records)
    write_run_meta(out, "gen-data", cfg.seed, cfg.to_dict())
    print(f"dataset: {header.count} records ({header.positive_count} positive) -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    _need_file(args.dataset, "dataset")
    header, records = dg.read_dataset(args.dataset)
    log_rows = []

    def log_fn(msg):
        print(msg, flush=True)

    if args.estimator == "cfm":
        net, history = pipeline.train_cfm(cfg, model, records, cfg.seed,
                                          log_every=args.log_every, log_fn=log_fn)
        path = os.path.join(out, "model.wsmf")
        save_checkpoint(net, path)
        log_rows = [{"step": i, "total": h.total, "mask": h.mask, "wrench": h.wrench,
                     "consistency": h.consistency, "sparsity": h.sparsity}
                    for i, h in enumerate(history)]
    elif args.estimator == "mlp":
        net, history = pipeline.train_mlp(cfg, records, cfg.seed,
                                          log_every=args.log_every, log_fn=log_fn)
        path = os.path.join(out, "model.wsmf")
        _save_mlp(net, path)
        log_rows = [{"step": i, "total": h} for i, h in enumerate(history)]
    else:
        raise CLIError(f"train supports estimators cfm|mlp, got {args.estimator!r}")
    write_csv(os.path.join(out, "train_log.csv"), log_rows)
    write_run_meta(out, "train", cfg.seed, cfg.to_dict())
    print(f"trained {args.estimator} on {header.count} records -> {path}")
    return 0


def cmd_infer(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    _need_file(args.ckpt, "checkpoint")
    _need_file(args.dataset, "dataset")
    header, records = dg.read_dataset(args.dataset)
    kind, _, _ = read_param_file(args.ckpt)
    preds: list[PredictionRecord] = []
    if kind == "cfm":
        net = load_checkpoint(args.ckpt)
        schedule = FlowSchedule(cfg.eval.flow_steps)
        rng = np.random.default_rng(cfg.seed)
        import time as _time
        for lo in range(0, len(records), 64):
            chunk = records[lo:lo + 64]
            windows = np.stack([r.obs for r in chunk])
            t0 = _time.perf_counter()
            batch = sample_batch(net, windows, schedule, rng, cfg.eval.delta)
            ms = (_time.perf_counter() - t0) * 1e3 / len(chunk)
            for p in batch:
                preds.append(PredictionRecord(p.mask, p.wrench_gated, "cfm", ms))
    elif kind == "mlp":
        net = _load_mlp(args.ckpt)
        fake_clips = [harness.EvalClip(r.obs, r.wrench, r.mask, np.zeros((header.h_win, 3)),
                                       np.zeros((header.h_win, (header.obs_dim - 3) // 3)),
                                       np.zeros((header.h_win, 3 + (header.obs_dim - 3) // 3)),
                                       np.zeros((header.h_win, (header.obs_dim - 3) // 3)),
                                       np.zeros((header.h_win, 3 + (header.obs_dim - 3) // 3)))
                      for r in records]
        preds = harness.predict_mlp(net, fake_clips, delta=cfg.eval.delta)
    else:
        raise CLIError(f"cannot infer with checkpoint kind {kind!r}")
    out_records = [dg.DatasetRecord(r.obs, p.wrench.astype(np.float32),
                                    p.mask.astype(np.float32))
                   for r, p in zip(records, preds)]
    pred_header = dg.DatasetHeader(
        h_win=header.h_win, n_regions=header.n_regions, wrench_dim=header.wrench_dim,
        obs_dim=header.obs_dim, count=len(out_records),
        positive_count=sum(bool(np.any(p.mask > cfg.eval.delta)) for p in preds),
        sampler_config_hash=header.sampler_config_hash, model_hash=header.model_hash,
        seed=cfg.seed, source="prediction")
    path = os.path.join(out, args.name)
    dg.write_dataset(path, pred_header, out_records)
    write_timings(out, [{"estimator": kind, "mean_ms_per_window":
                         float(np.mean([p.inference_ms for p in preds]))}])
    write_run_meta(out, "infer", cfg.seed, cfg.to_dict())
    print(f"predictions: {len(out_records)} windows -> {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    _need_file(args.pred, "prediction file")
    _need_file(args.gt, "ground-truth file")
    pred_header, pred_records = dg.read_dataset(args.pred)
    gt_header, gt_records = dg.read_dataset(args.gt)
    if pred_header.count != gt_header.count:
        raise CLIError(f"prediction/ground-truth record counts differ: "
                       f"{pred_header.count} vs {gt_header.count}")
    preds = [PredictionRecord(np.clip(r.mask, 0.0, 1.0), r.wrench, "file") for r in pred_records]
    tol = pipeline.tolerances(cfg)
    rep = score(preds, [r.wrench for r in gt_records], model.region_hop_distance(), tol)
    rows = [dict(rep.as_rows())]
    write_csv(os.path.join(out, "metrics.csv"), rows)
    write_markdown_table(os.path.join(out, "report.md"), rows,
                         title="contact estimation metrics",
                         header_notes=report_header_lines(tol))
    write_timings(out, [{"runtime_ms_mean": rep.runtime_ms_mean}])
    if not args.no_plots:
        figures.render_metric_bars(rep, out)
    write_run_meta(out, "eval", cfg.seed, cfg.to_dict())
    print(f"eval: detection={rep.detection_rate_pct:.1f}% fa={rep.false_alarm_pct:.1f}% -> {out}")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    clips = pipeline.eval_clips(cfg, model, cfg.seed + 77)
    if args.estimator == "gmo":
        preds = harness.predict_gmo(model, clips, gain=cfg.gmo.gain, sigma_r=cfg.gmo.sigma_r)
    elif args.estimator == "cpf":
        preds = harness.predict_cpf(model, clips, seed=cfg.seed,
                                    n_particles=cfg.cpf.particles,
                                    n_contacts=cfg.cpf.n_contacts,
                                    sigma_lik=cfg.cpf.sigma_lik, gain=cfg.gmo.gain)
    else:
        raise CLIError(f"baseline supports gmo|cpf, got {args.estimator!r}")
    tol = pipeline.tolerances(cfg)
    rep = experiments.evaluate_predictions(preds, clips, model, tol)
    rows = [dict(rep.as_rows())]
    write_csv(os.path.join(out, "metrics.csv"), rows)
    write_markdown_table(os.path.join(out, "report.md"), rows,
                         title=f"{args.estimator} baseline",
                         header_notes=report_header_lines(tol))
    write_timings(out, [{"estimator": args.estimator, "runtime_ms_mean": rep.runtime_ms_mean}])
    if not args.no_plots:
        figures.render_metric_bars(rep, out, title=f"{args.estimator} baseline")
    write_run_meta(out, "baseline", cfg.seed, cfg.to_dict())
    print(f"{args.estimator}: detection={rep.detection_rate_pct:.1f}% "
          f"fa={rep.false_alarm_pct:.1f}% -> {out}")
    return 0


def cmd_sweep_noise(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    gains = pipeline.gains_for(model)
    clips = pipeline.eval_clips(cfg, model, cfg.seed + 77, n_clips=cfg.noise.n_clips)
    estimators: dict = {}
    if args.ckpt:
        estimators["cfm"] = {"cfm_model": load_checkpoint(_need_file(args.ckpt, "checkpoint")),
                             "steps": cfg.eval.flow_steps}
    estimators["gmo"] = {"gmo_cfg": {"gain": cfg.gmo.gain, "sigma_r": cfg.gmo.sigma_r}}
    estimators["cpf"] = {"cpf_cfg": {"n_particles": cfg.cpf.particles,
                                     "sigma_lik": cfg.cpf.sigma_lik,
                                     "n_contacts": cfg.cpf.n_contacts}}
    rows = experiments.noise_sweep(estimators, cfg.noise.grid, clips, model, gains,
                                   cfg.tier, cfg.seed, pipeline.tolerances(cfg))
    write_csv(os.path.join(out, "noise_sweep.csv"), rows)
    write_markdown_table(os.path.join(out, "report.md"), rows, title="noise sweep",
                         header_notes=report_header_lines(pipeline.tolerances(cfg)))
    if not args.no_plots:
        figures.render_noise_sweep(rows, out)
    write_run_meta(out, "sweep-noise", cfg.seed, cfg.to_dict())
    print(f"noise sweep: {len(rows)} rows -> {out}")
    return 0


def cmd_multi_contact(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    gains = pipeline.gains_for(model)
    net = load_checkpoint(_need_file(args.ckpt, "checkpoint"))
    mlp = _load_mlp(_need_file(args.mlp_ckpt, "mlp checkpoint")) if args.mlp_ckpt else None
    header = None
    if args.train_dataset:
        header, _ = dg.read_dataset(_need_file(args.train_dataset, "training dataset"))
    else:
        header = dg.DatasetHeader(0, 0, 0, 0, 0, 0, "", "", 0, multi_contact=False)
    rows = experiments.multi_contact_eval(
        model, gains, cfg.tier, net, mlp, header,
        cfg.multi_contact.k_values, cfg.multi_contact.n_clips_per_k, cfg.seed,
        episode_s=cfg.gen.episode_s, sampler=cfg.sampler, steps=cfg.eval.flow_steps,
        tol=pipeline.tolerances(cfg))
    timing_cols = [{"k": r["k"], "estimator": r["estimator"], "time_ms": r.pop("time_ms")}
                   for r in rows]
    write_csv(os.path.join(out, "multi_contact.csv"), rows)
    write_markdown_table(os.path.join(out, "report.md"), rows,
                         title="zero-shot multi-contact",
                         header_notes=report_header_lines(pipeline.tolerances(cfg)))
    write_timings(out, timing_cols)
    if not args.no_plots:
        figures.render_multi_contact(rows, out)
    write_run_meta(out, "multi-contact", cfg.seed, cfg.to_dict())
    print(f"multi-contact: {len(rows)} rows -> {out}")
    return 0


def cmd_ablate_robustness(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    gains = pipeline.gains_for(model)
    rb = cfg.robustness
    stress = dg.ContactSamplerConfig(
        force_min_n=rb.stress_force_min_n, force_max_n=rb.stress_force_max_n,
        duration_min_s=rb.stress_duration_min_s, duration_max_s=rb.stress_duration_max_s)
    rng = np.random.default_rng([cfg.seed, 5])
    events = [[dg.sample_contact(rng, stress, model, rb.episode_s)]
              for _ in range(rb.n_metric_episodes)]
    seeds = np.arange(rb.n_metric_episodes) + cfg.seed
    test_clips = pipeline.eval_clips(cfg, model, cfg.seed + 177, n_clips=rb.test_clips,
                                     tier="good")

    def trainer(tier_label):
        header, records = pipeline.generate_dataset(
            cfg, model, cfg.seed + 31 * (1 + list(rb.tiers).index(tier_label)),
            n_episodes=rb.train_episodes_per_tier, tier=tier_label)
        net, _ = pipeline.train_cfm(cfg, model, records, cfg.seed, epochs=rb.train_epochs)

        def predict(clips):
            return harness.predict_cfm(net, clips, seed=cfg.seed, steps=cfg.eval.flow_steps)
        return predict, {"train_records": header.count}

    rows = experiments.robustness_ablation(
        model, gains, rb.tiers, events, rb.episode_s, seeds, trainer, test_clips,
        cfg.seed, pipeline.tolerances(cfg), rb.eps, rb.recovery_window)
    write_csv(os.path.join(out, "robustness.csv"), rows)
    write_markdown_table(
        os.path.join(out, "report.md"), rows, title="controller robustness ablation",
        header_notes=report_header_lines(pipeline.tolerances(cfg))
        + ["common test set: good-tier clips; robustness metrics from stress-level pushes."])
    if not args.no_plots:
        figures.render_tier_bars(rows, out)
    write_run_meta(out, "ablate-robustness", cfg.seed, cfg.to_dict())
    print(f"robustness ablation: {len(rows)} rows -> {out}")
    return 0


def cmd_ablate_crosstask(args) -> int:
    cfg = _load_cfg(args)
    model = resolve_model(cfg)
    out = _out_dir(args)
    ct = cfg.crosstask
    conditions = {}
    for i, off in enumerate(ct.posture_offsets):
        target = model.q_default_rad.copy()
        target[:2] += off  # command varies the shoulder targets
        conditions[f"cond{i}"] = target

    def gen_condition(cond_name, n_episodes, seed):
        return pipeline.generate_dataset(cfg, model, seed,
                                         n_episodes=n_episodes,
                                         q_target=conditions[cond_name])[1]

    def extend(records, cond_name):
        cmd = (conditions[cond_name] - model.q_default_rad).astype(np.float32)
        out_records = []
        for r in records:
            ext = np.concatenate([r.obs, np.tile(cmd, (r.obs.shape[0], 1))], axis=1)
            out_records.append(dg.DatasetRecord(ext, r.wrench, r.mask))
        return out_records

    pooled = {c: gen_condition(c, ct.train_episodes_per_condition, cfg.seed + 11 + i)
              for i, c in enumerate(conditions)}

    def trainer_with_cmd():
        records = [r for c in conditions for r in extend(pooled[c], c)]
        arch = pipeline.arch_for(cfg, model, extra_obs_dim=model.n)
        from ..cfm import VelocityFieldModel, fit
        net = VelocityFieldModel(arch, np.random.default_rng(cfg.seed))
        fit(net, records, pipeline.train_config(cfg, cfg.seed, ct.train_epochs))

        def predict(clips, cond_name):
            ext = [harness.EvalClip(
                np.concatenate([c.obs, np.tile((conditions[cond_name] - model.q_default_rad)
                                               .astype(np.float32), (c.obs.shape[0], 1))], axis=1),
                c.wrench, c.mask, c.q_base, c.q_joint, c.v, c.tau, c.grf_gen) for c in clips]
            return harness.predict_cfm(net, ext, seed=cfg.seed, steps=cfg.eval.flow_steps)
        return predict

    def trainer_unified():
        records = [r for c in conditions for r in pooled[c]]
        net, _ = pipeline.train_cfm(cfg, model, records, cfg.seed, epochs=ct.train_epochs)

        def predict(clips, cond_name):
            return harness.predict_cfm(net, clips, seed=cfg.seed, steps=cfg.eval.flow_steps)
        return predict

    def trainer_single():
        first = next(iter(conditions))
        net, _ = pipeline.train_cfm(cfg, model, pooled[first], cfg.seed, epochs=ct.train_epochs)

        def predict(clips, cond_name):
            return harness.predict_cfm(net, clips, seed=cfg.seed, steps=cfg.eval.flow_steps)
        return predict

    def make_test_clips(cond_name, cond_target):
        return pipeline.eval_clips(cfg, model, cfg.seed + 997, n_clips=ct.test_clips_per_condition,
                                   q_target=cond_target)

    rows = experiments.cross_task_ablation(model, pipeline.gains_for(model), conditions,
                                           trainer_with_cmd, trainer_unified, trainer_single,
                                           make_test_clips, pipeline.tolerances(cfg))
    write_csv(os.path.join(out, "crosstask.csv"), rows)
    write_markdown_table(os.path.join(out, "report.md"), rows,
                         title="cross-task observation ablation",
                         header_notes=report_header_lines(pipeline.tolerances(cfg)))
    write_run_meta(out, "ablate-crosstask", cfg.seed, cfg.to_dict())
    print(f"cross-task ablation: {len(rows)} rows -> {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wrenchflow",
        description="whole-body external wrench estimation: simulate, train, evaluate")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", default=None, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=out_default)
        p.add_argument("--no-plots", action="store_true")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--tier", default=None, choices=list(ctl.TIERS))

    p = sub.add_parser("rollout", help="run one episode and dump its log")
    common(p, "runs/rollout")
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("gen-data", help="generate a training dataset (.wsds)")
    common(p, "runs/dataset")
    p.add_argument("--name", default="dataset.wsds")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train an estimator on a dataset")
    common(p, "runs/train")
    p.add_argument("--dataset", required=True)
    p.add_argument("--estimator", default="cfm", choices=["cfm", "mlp"])
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="run a checkpoint over a dataset")
    common(p, "runs/infer")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--name", default="predictions.wsds")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    common(p, "runs/eval")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("baseline", help="run an analytical baseline")
    common(p, "runs/baseline")
    p.add_argument("--estimator", required=True, choices=["gmo", "cpf"])
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("sweep-noise", help="noise sensitivity comparison")
    common(p, "runs/noise")
    p.add_argument("--ckpt", default=None, help="flow-matching checkpoint")
    p.set_defaults(fn=cmd_sweep_noise)

    p = sub.add_parser("multi-contact", help="zero-shot multi-contact scaling")
    common(p, "runs/multi")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mlp-ckpt", default=None)
    p.add_argument("--train-dataset", default=None,
                   help="training dataset; asserts single-contact provenance")
    p.set_defaults(fn=cmd_multi_contact)

    p = sub.add_parser("ablate-robustness", help="controller robustness ablation")
    common(p, "runs/robustness")
    p.set_defaults(fn=cmd_ablate_robustness)

    p = sub.add_parser("ablate-crosstask", help="cross-task observation ablation")
    common(p, "runs/crosstask")
    p.set_defaults(fn=cmd_ablate_crosstask)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CLIError, ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # keep the one-line machine-parsable contract
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
