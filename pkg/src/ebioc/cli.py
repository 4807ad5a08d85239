"""Command-line pipelines: data generation, control inference, training,
sampling, evaluation, corner cases, and hyperparameter sweeps.

All file outputs are machine readable (JSON / JSON Lines / CSV); human
progress goes to stderr. One --seed drives every random choice through
named substreams, so reruns with the same seed and config are
byte-identical regardless of worker count.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as D
from . import learning as L
from . import metrics as M
from . import multiagent as MA
from . import problem as P
from .config import (ExperimentConfig, load_config, load_checkpoint,
                     save_checkpoint, write_sidecar_meta)
from .generator import NOISE_DIM, PolicyGenerator, generate, train_cooperative
from .rng import substream
from .sampler import SamplerConfig, solve
from .types import load_dataset, save_dataset


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dump_json(path, payload) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(train={"seed": args.seed})
    seed = args.seed if args.seed is not None else cfg.train.seed
    spec = cfg.data
    theta = args.theta_star
    if theta not in D.THETA_PRESETS:
        with open(theta) as f:
            theta = np.array(json.load(f), dtype=np.float64)
    if args.multiagent:
        scenes = D.gen_joint_scenes(spec, args.n, seed, theta_star=theta,
                                    expert_cfg=cfg.expert, interacting=not args.non_interacting)
        MA.save_scenes(args.out, scenes)
        _log(f"wrote {len(scenes)} joint scenes ({spec.n_agents} agents) to {args.out}")
    else:
        scenarios = D.gen_scenarios(spec, args.n, seed)
        demos = D.gen_expert_demos(scenarios, theta, seed, spec=spec, expert_cfg=cfg.expert)
        save_dataset(args.out, demos)
        _log(f"wrote {len(demos)} demonstrations to {args.out}")
    write_sidecar_meta(args.out, cfg, {"seed": seed, "theta_star": args.theta_star})
    return 0


def cmd_infer_controls(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.data
    tracks = []
    envs = []
    with open(args.tracks) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            tracks.append(np.array(rec["positions"], dtype=np.float64))
            env_d = rec.get("env")
            if env_d is None:
                from .types import Environment

                envs.append(Environment(lane_center=np.zeros(4), speed_limit=15.0,
                                        goal=np.zeros(2), dt=spec.dt))
            else:
                from .types import Environment, OtherVehicleTrack

                envs.append(Environment(
                    lane_center=np.array(env_d.get("lane", [0, 0, 0, 0]), dtype=np.float64),
                    speed_limit=float(env_d.get("speed_limit", 15.0)),
                    goal=np.array(env_d.get("goal", [0, 0]), dtype=np.float64),
                    dt=float(env_d.get("dt", spec.dt)),
                    obstacles=tuple(OtherVehicleTrack(np.array(t, dtype=np.float64))
                                    for t in env_d.get("obstacles", [])),
                ))
    demos, rejects = D.ingest_tracks(tracks, envs, spec=spec)
    save_dataset(args.out, demos)
    write_sidecar_meta(args.out, cfg, {"rejected": rejects})
    _log(f"ingested {len(demos)} tracks, rejected {len(rejects)}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.coop == "on":
        overrides["init"] = "generator"
    cfg = cfg.with_overrides(train=overrides, sampler={"kind": args.solver})
    if args.cost == "cnn" and args.solver == "ilqr":
        _log("error: ilqr synthesis requires a per-frame (Markovian) cost; cnn is not")
        return 2
    tcfg = cfg.train
    model_kwargs = dict(cfg.cost)
    if args.cost == "linear":
        model_kwargs = {}
    elif args.cost == "cnn":
        model_kwargs = {"horizon": cfg.data.horizon}

    eval_fn = None
    if args.eval_data:
        eval_demos = load_dataset(args.eval_data)
        eval_cfg = cfg.sampler

        def eval_fn(model, epoch):
            return M.sample_and_evaluate(
                model, eval_demos, eval_cfg, cfg.eval["samples"], tcfg.seed,
                horizons_s=tuple(cfg.eval["horizons"]), variant=cfg.dynamics,
                bounds=cfg.bounds)

    generator = None
    if args.multiagent == "on":
        scenes = MA.load_scenes(args.data)
        if args.coop == "on":
            _log("error: cooperative training is single-agent")
            return 2
        model, trace = MA.train_multiagent(scenes, args.cost, tcfg, variant=cfg.dynamics,
                                           bounds=cfg.bounds, eval_fn=eval_fn,
                                           model_kwargs=model_kwargs)
    else:
        demos = load_dataset(args.data)
        if args.coop == "on":
            model, generator, trace = train_cooperative(
                demos, args.cost, tcfg, variant=cfg.dynamics, bounds=cfg.bounds,
                eval_fn=eval_fn, model_kwargs=model_kwargs)
        else:
            model, trace = L.train_ebm(demos, args.cost, tcfg, variant=cfg.dynamics,
                                       bounds=cfg.bounds, eval_fn=eval_fn,
                                       model_kwargs=model_kwargs)

    save_checkpoint(args.out, model, generator=generator, config=cfg)
    if args.log:
        with open(args.log, "w") as f:
            for row in trace.log_rows():
                f.write(json.dumps(row, sort_keys=True) + "\n")
        write_sidecar_meta(args.log, cfg)
    _log(f"trained {args.cost} cost ({args.solver}); final moment gap "
         f"{float(np.max(trace.moment_gap[-1])):.4f}; checkpoint at {args.out}")
    return 0


def cmd_sample(args) -> int:
    model, generator, payload = load_checkpoint(args.ckpt)
    cfg = ExperimentConfig(payload.get("config", {}))
    if args.seed is not None:
        cfg = cfg.with_overrides(train={"seed": args.seed})
    seed = cfg.train.seed
    demos = load_dataset(args.data)
    use_gen = args.init == "generator"
    if use_gen and generator is None:
        _log("error: checkpoint has no generator to initialize from")
        return 2
    records = []
    for i, demo in enumerate(demos):
        prob = P.from_demonstration(demo, goal_mode=args.goal_mode, variant=cfg.dynamics,
                                    bounds=cfg.bounds)
        init = None
        if use_gen:
            xi = substream(seed, "sample-xi", i).standard_normal((prob.horizon, NOISE_DIM))
            init, _ = generate(generator, prob, xi)
        samples = []
        for j in range(args.samples):
            rng = substream(seed, "sample-chain", i, j)
            res = solve(model, init, prob, cfg.sampler, rng)
            samples.append({
                "states": [[float(v) for v in row] for row in res.trajectory.states],
                "controls": [[float(v) for v in row] for row in res.controls.values],
            })
        records.append({"index": i, "samples": samples})
    with open(args.out, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    write_sidecar_meta(args.out, cfg, {"seed": seed, "samples": args.samples})
    _log(f"sampled {args.samples} trajectories for {len(demos)} demos")
    return 0


def cmd_eval(args) -> int:
    gts = load_dataset(args.gt)
    sample_sets = []
    with open(args.pred) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            sample_sets.append([np.array(s["states"], dtype=np.float64)
                                for s in rec["samples"]])
    if len(sample_sets) != len(gts):
        _log(f"error: {len(sample_sets)} prediction rows vs {len(gts)} ground truths")
        return 2
    horizons_s = [float(h) for h in args.horizons.split(",")]
    dt = gts[0].environment.dt
    T = gts[0].expert.horizon
    idx = M.horizon_indices(horizons_s, dt, T)
    gt_states = [d.expert.states for d in gts]
    rmse = M.avg_min_rmse(sample_sets, gt_states, idx)
    report = {
        "horizons_s": horizons_s,
        "avg_rmse": {f"{s}s": rmse["avg"][t] for s, t in zip(horizons_s, idx)},
        "min_rmse": {f"{s}s": rmse["min"][t] for s, t in zip(horizons_s, idx)},
        "missing_rate": M.missing_rate(sample_sets, gt_states),
        "n_demos": len(gts),
        "n_samples": len(sample_sets[0]),
        "pred": args.pred,
        "gt": args.gt,
    }
    _dump_json(args.report, report)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write("horizon_s,avg_rmse,min_rmse,missing_rate\n")
            for s in horizons_s:
                f.write(f"{s},{report['avg_rmse'][f'{s}s']!r},"
                        f"{report['min_rmse'][f'{s}s']!r},{report['missing_rate']!r}\n")
    _log(f"avg RMSE {report['avg_rmse']}")
    return 0


def cmd_corner(args) -> int:
    model, _, payload = load_checkpoint(args.ckpt)
    cfg = ExperimentConfig(payload.get("config", {}))
    seed = args.seed if args.seed is not None else cfg.train.seed
    report = M.corner_suite(model, sampler_cfg=cfg.sampler, seed=seed, spec=cfg.data)
    if args.traces:
        M.write_corner_traces_csv(report, args.traces)
        write_sidecar_meta(args.traces, cfg)
    for entry in report["scenes"].values():
        entry.pop("control_trace", None)
    report["config"] = cfg.echo()
    report["config_hash"] = cfg.hash()
    M.write_report_json(report, args.report)
    passed = sum(1 for e in report["scenes"].values() if e.get("passed"))
    _log(f"corner suite: {passed}/{len(report['scenes'])} scenes passed")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(train={"seed": args.seed})
    demos = load_dataset(args.data)
    eval_demos = load_dataset(args.eval_data) if args.eval_data else demos
    values = [float(v) for v in args.values.split(",")]
    rows = []
    for v in values:
        if args.sweep == "steps":
            run_cfg = cfg.with_overrides(sampler={"steps": int(v)})
        else:
            run_cfg = cfg.with_overrides(sampler={"step_size": v})
        model, trace = L.train_ebm(demos, args.cost, run_cfg.train,
                                   variant=run_cfg.dynamics, bounds=run_cfg.bounds)
        metrics = M.sample_and_evaluate(model, eval_demos, run_cfg.sampler,
                                        run_cfg.eval["samples"], run_cfg.train.seed,
                                        horizons_s=tuple(run_cfg.eval["horizons"]),
                                        variant=run_cfg.dynamics, bounds=run_cfg.bounds)
        rows.append((v, metrics))
        _log(f"{args.sweep}={v}: avg RMSE {metrics['avg_rmse_overall']:.3f}")
    with open(args.out, "w") as f:
        f.write("value,avg_rmse,min_rmse,missing_rate\n")
        for v, m in rows:
            f.write(f"{v},{m['avg_rmse_overall']!r},{m['min_rmse_overall']!r},"
                    f"{m['missing_rate']!r}\n")
    write_sidecar_meta(args.out, cfg, {"sweep": args.sweep, "values": values})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebioc",
                                description="Energy-based inverse optimal control pipelines")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic expert demonstrations")
    g.add_argument("--spec", dest="config", default=None, help="config file (data section)")
    g.add_argument("--theta-star", default="lane_keeper",
                   help="ground-truth preset name or JSON weight file")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--multiagent", action="store_true")
    g.add_argument("--non-interacting", action="store_true")
    g.set_defaults(fn=cmd_gen_data)

    g = sub.add_parser("infer-controls", help="build demonstrations from position tracks")
    g.add_argument("--tracks", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--config", default=None)
    g.set_defaults(fn=cmd_infer_controls)

    g = sub.add_parser("train", help="train a cost model")
    g.add_argument("--data", required=True)
    g.add_argument("--cost", choices=["linear", "mlp", "cnn"], default="linear")
    g.add_argument("--solver", choices=["langevin", "gd", "ilqr"], default="langevin")
    g.add_argument("--coop", choices=["on", "off"], default="off")
    g.add_argument("--multiagent", choices=["on", "off"], default="off")
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--log", default=None)
    g.add_argument("--eval-data", default=None)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_train)

    g = sub.add_parser("sample", help="sample trajectories from a checkpoint")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--samples", type=int, default=10)
    g.add_argument("--out", required=True)
    g.add_argument("--init", choices=["zeros", "generator"], default="zeros")
    g.add_argument("--goal-mode", choices=[P.GOAL_FROM_EXPERT, P.GOAL_FROM_ENV],
                   default=P.GOAL_FROM_ENV)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_sample)

    g = sub.add_parser("eval", help="score predictions against ground truth")
    g.add_argument("--pred", required=True)
    g.add_argument("--gt", required=True)
    g.add_argument("--horizons", default="1,2,3,4")
    g.add_argument("--report", required=True)
    g.add_argument("--csv", default=None)
    g.set_defaults(fn=cmd_eval)

    g = sub.add_parser("corner", help="run the scripted corner-case suite")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--report", required=True)
    g.add_argument("--traces", default=None, help="control-trace CSV")
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_corner)

    g = sub.add_parser("ablate", help="sweep chain steps / step size")
    g.add_argument("--sweep", choices=["steps", "stepsize"], required=True)
    g.add_argument("--values", required=True, help="comma-separated values")
    g.add_argument("--data", required=True)
    g.add_argument("--eval-data", default=None)
    g.add_argument("--cost", choices=["linear", "mlp", "cnn"], default="linear")
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
