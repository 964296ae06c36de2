"""Command-line front door: gen / train / eval / spectrum / project / cube /
gradcheck / compare, wired into reproducible runs.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure. Every
command writes a run_manifest.json listing its outputs with content hashes;
re-running with the same flags reproduces the hashed tensors bit-exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .analysis import (
    collect_and_project,
    compare_realizations,
    export_connectivity,
    memory_states,
    spectrum,
    state_label_int,
    write_connectivity_csv,
    write_projection_csv,
    write_spectrum_csv,
)
from .linalg import SeededRng
from .model import ModelConfig, init_params, load_checkpoint, save_checkpoint
from .svgplot import write_projection_svg, write_spectrum_svg
from .task import TaskConfig, generate_dataset, generate_probe, load_dataset, save_dataset
from .tensorio import ensure_dir, sha256_file
from .training import DivergenceError, TrainConfig, evaluate, run_gradcheck, train

USAGE_ERROR = 2
NUMERICAL_ERROR = 3


def _default_seed() -> int:
    return int(os.environ.get("FFRNN_SEED", "0"))


def _write_run_manifest(out_dir, command, configs, seeds, outputs, wall_time):
    manifest = {
        "command": command,
        "version": __version__,
        "configs": configs,
        "seeds": seeds,
        "wall_time_s": wall_time,
        "outputs": [
            {"path": os.path.basename(p), "sha256": sha256_file(p)}
            for p in outputs if os.path.isfile(p)
        ],
    }
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_config_file(path) -> dict:
    if path.endswith(".toml"):
        import tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _probe_for(manifest, probe_dir=None):
    if probe_dir:
        ds = load_dataset(probe_dir)
        return ds.trial(0)
    task = manifest.get("task")
    cfg = TaskConfig(**task) if task else TaskConfig()
    return generate_probe(cfg)


def cmd_gen(args) -> int:
    start = time.perf_counter()
    config = TaskConfig(
        n_bits=args.bits, t_steps=args.steps, pulse_width=args.pulse_width,
        pulse_amp=args.pulse_amp, min_gap=args.min_gap, max_gap=args.max_gap,
        noise_std=args.noise, delay_steps=args.delay, seed=args.seed,
    )
    dataset = generate_dataset(config, args.samples)
    paths = save_dataset(dataset, args.out)
    _write_run_manifest(args.out, "gen", {"task": dataclasses.asdict(config)},
                        {"seed": args.seed}, paths, time.perf_counter() - start)
    print(f"wrote {args.samples} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    start = time.perf_counter()
    dataset = load_dataset(args.data)
    model_cfg = ModelConfig(n_units=args.units, n_in=dataset.config.n_bits,
                            n_out=dataset.config.n_bits, tau=args.tau,
                            dt=args.dt, use_bias=args.bias)
    clip = args.clip if args.clip else None
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                            learning_rate=args.lr, grad_clip_norm=clip,
                            seed=args.seed)
    params = init_params(model_cfg, SeededRng(args.seed))

    ensure_dir(args.out)
    history_path = os.path.join(args.out, "history.csv")
    with open(history_path, "w") as fh:
        fh.write("epoch,loss\n")

    def epoch_hook(epoch, epoch_params, epoch_loss):
        with open(history_path, "a") as fh:
            fh.write(f"{epoch},{epoch_loss!r}\n")
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            save_checkpoint(os.path.join(args.out, f"epoch_{epoch:04d}"),
                            epoch_params, model_cfg)

    metadata = {
        "seed": args.seed,
        "task": dataclasses.asdict(dataset.config),
        "training": dataclasses.asdict(train_cfg),
        "data_dir": os.path.abspath(args.data),
        "samples": dataset.samples,
    }
    try:
        params, report = train(params, model_cfg, dataset, train_cfg,
                               eval_fraction=args.eval_fraction,
                               epoch_hook=epoch_hook)
    except DivergenceError as exc:
        if exc.params is not None:
            metadata["diverged_at_epoch"] = exc.epoch
            save_checkpoint(args.out, exc.params, model_cfg, metadata)
        print(f"training diverged: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR

    metadata["loss_history"] = report.loss_per_epoch
    metadata["wall_time_s"] = report.wall_time
    metadata["final_eval"] = dataclasses.asdict(report.final_eval)
    save_checkpoint(args.out, params, model_cfg, metadata)

    outputs = [os.path.join(args.out, name) for name in
               ("w_in.rnt", "w_rec.rnt", "w_out.rnt", "history.csv")]
    _write_run_manifest(
        args.out, "train",
        {"model": dataclasses.asdict(model_cfg),
         "training": dataclasses.asdict(train_cfg)},
        {"seed": args.seed}, outputs, time.perf_counter() - start)
    final = report.final_eval
    print(f"final loss {report.loss_per_epoch[-1]:.6g}" if report.loss_per_epoch
          else "no epochs run")
    print(f"held-out mse {final.mse:.6g} accuracy {final.state_accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    params, model_cfg, manifest = load_checkpoint(args.checkpoint)
    if args.data:
        data = load_dataset(args.data)
        task_cfg = data.config
    else:
        data = _probe_for(manifest, args.probe)
        task_cfg = data.config
    metrics = evaluate(params, model_cfg, data, transition_pad=args.pad,
                       task_config=task_cfg)
    payload = dataclasses.asdict(metrics)
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_spectrum(args) -> int:
    start = time.perf_counter()
    params, _, _ = load_checkpoint(args.checkpoint)
    spec = spectrum(params.w_rec, eps_circle=args.eps)
    ensure_dir(args.out)
    csv_path = os.path.join(args.out, "spectrum.csv")
    write_spectrum_csv(csv_path, spec)
    outputs = [csv_path]
    conn_path = os.path.join(args.out, "connectivity.csv")
    write_connectivity_csv(conn_path, export_connectivity(params.w_rec))
    outputs.append(conn_path)
    if args.svg:
        svg_path = os.path.join(args.out, "spectrum.svg")
        write_spectrum_svg(svg_path, spec.eigenvalues, spec.eps_circle)
        outputs.append(svg_path)
    _write_run_manifest(args.out, "spectrum", {"eps_circle": args.eps}, {},
                        outputs, time.perf_counter() - start)
    print(json.dumps({
        "n_outside": spec.n_outside,
        "radius_min": spec.radius_min,
        "radius_max": spec.radius_max,
        "radius_mean": spec.radius_mean,
    }, indent=2, sort_keys=True))
    return 0


def cmd_project(args) -> int:
    start = time.perf_counter()
    params, model_cfg, manifest = load_checkpoint(args.checkpoint)
    probe = _probe_for(manifest, args.probe)
    projection = collect_and_project(params, model_cfg, probe)
    ensure_dir(args.out)
    csv_path = os.path.join(args.out, "projection.csv")
    write_projection_csv(csv_path, projection, probe)
    outputs = [csv_path]
    if args.svg:
        labels = [state_label_int(probe.targets[projection.start_step + i])
                  for i in range(len(projection.points))]
        for axes, name in (((0, 1), "projection_pc1_pc2.svg"),
                           ((0, 2), "projection_pc1_pc3.svg")):
            svg_path = os.path.join(args.out, name)
            write_projection_svg(svg_path, projection.points, labels, axes)
            outputs.append(svg_path)
    _write_run_manifest(args.out, "project", {}, {}, outputs,
                        time.perf_counter() - start)
    print(json.dumps({
        "points": len(projection.points),
        "start_step": projection.start_step,
        "explained_variance_ratio":
            [float(r) for r in projection.explained_variance_ratio],
    }, indent=2, sort_keys=True))
    return 0


def _cube_report_for(checkpoint_dir, probe_dir, margin):
    params, model_cfg, manifest = load_checkpoint(checkpoint_dir)
    probe = _probe_for(manifest, probe_dir)
    projection = collect_and_project(params, model_cfg, probe)
    return memory_states(projection, probe, hold_margin=margin)


def cmd_cube(args) -> int:
    start = time.perf_counter()
    report = _cube_report_for(args.checkpoint, args.probe, args.margin)
    ensure_dir(args.out)
    path = os.path.join(args.out, "cube_report.json")
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_manifest(args.out, "cube", {"hold_margin": args.margin}, {},
                        [path], time.perf_counter() - start)
    print(json.dumps({
        "complete": report.complete,
        "separation_ratio": report.separation_ratio,
        "missing_states": len(report.missing_states),
    }, indent=2, sort_keys=True))
    return 0


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def cmd_compare(args) -> int:
    start = time.perf_counter()
    reports = [_cube_report_for(c, args.probe, args.margin)
               for c in args.checkpoints]
    summary = compare_realizations(reports)
    ensure_dir(args.out)
    path = os.path.join(args.out, "compare_report.json")
    payload = _json_safe(
        {"per_report": summary.per_report, "pairwise": summary.pairwise})
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_manifest(args.out, "compare", {"hold_margin": args.margin}, {},
                        [path], time.perf_counter() - start)
    print(json.dumps(payload["pairwise"], indent=2, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    if args.units > 16 or args.steps > 16:
        print("gradcheck is limited to --units <= 16 and --steps <= 16",
              file=sys.stderr)
        return USAGE_ERROR
    report = run_gradcheck(n_units=args.units, t_steps=args.steps,
                           trials=args.trials, batch=args.batch,
                           seed=args.seed)
    for i, err in enumerate(report.trial_errors):
        print(f"trial {i:2d}: max relative error {err:.3e}")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict}: max {report.max_rel_err:.3e} "
          f"(tolerance {report.tolerance:.0e})")
    return 0 if report.passed else NUMERICAL_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ffrnn",
        description="Train and analyze flip-flop memory recurrent networks.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", default=None,
                        help="JSON or TOML file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    p = sub.add_parser("gen", help="generate a flip-flop dataset")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--bits", type=int, default=3)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--delay", type=int, default=20)
    p.add_argument("--pulse-width", type=int, default=10)
    p.add_argument("--pulse-amp", type=float, default=1.0)
    p.add_argument("--min-gap", type=int, default=30)
    p.add_argument("--max-gap", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a network on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--units", type=int, default=400)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--bias", action="store_true")
    p.add_argument("--clip", type=float, default=0.5,
                   help="global gradient-norm clip; 0 disables")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--eval-fraction", type=float, default=0.05)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--probe", default=None)
    p.add_argument("--pad", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="eigenspectrum of the recurrent matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("project", help="project probe activity onto top-3 axes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--probe", default=None)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("cube", help="memory-state cube geometry report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--probe", default=None)
    p.add_argument("--margin", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cube)

    p = sub.add_parser("compare", help="compare cube reports across checkpoints")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--probe", default=None)
    p.add_argument("--margin", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--units", type=int, default=8)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        try:
            defaults = _load_config_file(cfg_path)
        except (OSError, ValueError) as exc:
            print(f"cannot read config file: {exc}", file=sys.stderr)
            return USAGE_ERROR
        for p in [parser] + list(parser._subparsers._group_actions[0].choices.values()):
            known = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (np.linalg.LinAlgError, DivergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
