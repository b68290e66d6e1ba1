"""Command-line entry point: ``qpsim {train,eval,sim,bench,diag,config}``.

Exit codes: 0 on success, 1 when the input is invalid (bad scene file,
bad hyperparameters, an env that cannot be differentiated in strict mode),
2 on a runtime failure (numerical blowup, diverged training, I/O error or
an interrupted run).  Command-line usage errors also exit with 2.

Outputs go to ``--output-dir``, which defaults to ``$QPSIM_OUTPUT_DIR`` or
``./qpsim_runs``.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

OUTPUT_ENV = "QPSIM_OUTPUT_DIR"
DEFAULT_OUTPUT = "qpsim_runs"


class ValidationFailure(Exception):
    """Invalid user input that is reported with exit code 1."""


# flag construction ---------------------------------------------------------

def _config_classes():
    from qpsim.agents.presets import CONFIGS

    return CONFIGS


def _is_bool(f) -> bool:
    return f.type == "bool"


def _is_tuple(f) -> bool:
    return f.type == "tuple"


def _parse_tuple(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scalar_type(f):
    return {"int": int, "float": float, "str": str}.get(f.type, float)


def _hyperparameter_flags():
    """``{field name: {algo: default}}`` and one field object per name."""
    owners, fields = {}, {}
    for algo, cls in _config_classes().items():
        for f in dataclasses.fields(cls):
            if f.name in ("workers", "env"):
                continue
            owners.setdefault(f.name, {})[algo] = f.default
            fields.setdefault(f.name, f)
    return owners, fields


def _fmt_default(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if v is None:
        return "derived"
    return repr(v) if isinstance(v, str) else str(v)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--algo", required=True, choices=sorted(_config_classes()), help="training algorithm")
    p.add_argument("--env", default=None,
                   help="environment name (default: ant; pointmass for apg)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (default: 1)")
    p.add_argument("--output-dir", default=None, help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    p.add_argument("--config", default=None, help="scene file replacing the env's shipped scene (default: none)")
    p.add_argument("--episode_length", type=int, default=None,
                   help="episode length in env steps (default: the env's own, 1000 for locomotion)")
    p.add_argument("--quiet", action="store_true", help="suppress the per-evaluation progress line")
    owners, fields = _hyperparameter_flags()
    group = p.add_argument_group("hyperparameters",
                                 "Defaults are per algorithm; PointMass and the Halfcheetah SAC run use "
                                 "env presets unless a flag overrides them.")
    for name in sorted(owners):
        f = fields[name]
        algos = owners[name]
        help_text = "default " + ", ".join(f"{a}: {_fmt_default(v)}" for a, v in sorted(algos.items()))
        flags = [f"--{name}"] + ([f"--{name.replace('_', '-')}"] if "_" in name else [])
        if _is_bool(f):
            group.add_argument(*flags, dest=name, action=argparse.BooleanOptionalAction, default=None,
                               help=help_text)
        elif _is_tuple(f):
            group.add_argument(*flags, dest=name, type=_parse_tuple, default=None, metavar="N,N", help=help_text)
        else:
            kind = float if name == "target_entropy" else _scalar_type(f)
            group.add_argument(*flags, dest=name, type=kind, default=None, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpsim", description="Batched rigid-body physics and RL training.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a policy; writes a log CSV and a checkpoint")
    _add_train_flags(train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint with its deterministic policy")
    ev.add_argument("--checkpoint", required=True, help="checkpoint file written by train")
    ev.add_argument("--episodes", type=int, default=128, help="episodes (default: 128)")
    ev.add_argument("--seed", type=int, default=0, help="reset seed (default: 0)")
    ev.add_argument("--env", default=None, help="environment (default: the one stored in the checkpoint)")

    sim = sub.add_parser("sim", help="dump a trajectory as one JSON object per line")
    sim.add_argument("--env", default="ant", help="environment (default: ant)")
    sim.add_argument("--config", default=None, help="scene file replacing the env's shipped scene (default: none)")
    sim.add_argument("--steps", type=int, default=100, help="env steps (default: 100)")
    sim.add_argument("--scenes", type=int, default=1, help="scenes in the batch (default: 1)")
    sim.add_argument("--seed", type=int, default=0, help="seed for reset noise and actions (default: 0)")
    sim.add_argument("--actions", choices=("random", "zero"), default="random",
                     help="uniform random or zero actions (default: random)")
    sim.add_argument("--output", default=None, help="trajectory file (default: standard output)")

    bench = sub.add_parser("bench", help="random-action stepping throughput")
    bench.add_argument("--env", default="ant", help="environment (default: ant)")
    bench.add_argument("--batch-sizes", type=_parse_tuple, default=(1, 64, 1024), metavar="N,N",
                       help="strictly increasing batch sizes (default: 1,64,1024)")
    bench.add_argument("--workers", type=int, default=1, help="worker threads (default: 1)")
    bench.add_argument("--num-shards", type=int, default=None, help="scene shards (default: the worker count)")
    bench.add_argument("--duration", type=float, default=2.0, help="seconds per batch size (default: 2)")
    bench.add_argument("--seed", type=int, default=0, help="seed (default: 0)")
    bench.add_argument("--output-dir", default=None, help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    diag = sub.add_parser("diag", help="momentum and energy drift over a dt ladder")
    diag.add_argument("--config", default=None, help="scene file (default: the shipped ant scene)")
    diag.add_argument("--dt", type=lambda s: tuple(float(x) for x in s.split(",")), default=None, metavar="DT,DT",
                      help="dt ladder (default: 0.02,0.01,0.005,0.0025)")
    diag.add_argument("--seeds", type=int, default=128, help="seeds (default: 128)")
    diag.add_argument("--duration", type=float, default=1.0, help="simulated seconds (default: 1)")
    diag.add_argument("--torque", type=float, default=0.5, help="actuator torque bound in N m (default: 0.5)")
    diag.add_argument("--kick", type=float, default=1.0, help="initial kick speed in m/s (default: 1)")
    diag.add_argument("--precision", choices=("float64", "float32"), default="float64",
                      help="floating point type (default: float64)")
    diag.add_argument("--output-dir", default=None, help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")

    cfg = sub.add_parser("config", help="scene file tools")
    cfg_sub = cfg.add_subparsers(dest="config_command", required=True)
    val = cfg_sub.add_parser("validate", help="parse and check a scene file")
    val.add_argument("file", help="scene file; bare names also resolve against the shipped scenes")
    return parser


# commands ---------------------------------------------------------------------

def _output_dir(arg) -> str:
    path = arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    os.makedirs(path, exist_ok=True)
    return path


def _resolve_scene(path: str) -> str:
    from qpsim.config import SCENE_DIR

    if os.path.exists(path):
        return path
    for candidate in (os.path.join(SCENE_DIR, path), os.path.join(SCENE_DIR, path + ".bxc")):
        if os.path.exists(candidate):
            return candidate
    raise ValidationFailure(f"{path}: no such scene file")


def _make_env(name: str, config_path=None, **kw):
    from qpsim.config import load_config
    from qpsim.envs import make

    if config_path is not None:
        kw["config"] = load_config(_resolve_scene(config_path))
    try:
        return make(name, **kw)
    except KeyError as e:
        raise ValidationFailure(e.args[0]) from None


def cmd_train(args) -> int:
    from qpsim.agents import ALGORITHMS
    from qpsim.agents.presets import make_config
    from qpsim.config import ConfigError

    cls, train = ALGORITHMS[args.algo]
    names = {f.name for f in dataclasses.fields(cls)}
    owners, _ = _hyperparameter_flags()
    given = {n: getattr(args, n) for n in owners if getattr(args, n) is not None}
    foreign = sorted(n for n in given if n not in names)
    if foreign:
        raise ValidationFailure(f"flags not used by {args.algo}: " + ", ".join("--" + n for n in foreign))
    env_name = args.env or ("pointmass" if args.algo == "apg" else "ant")
    if "env" in names:
        given["env"] = env_name
    if "workers" in names:
        given["workers"] = args.workers
    try:
        cfg = make_config(args.algo, env_name, **given).validate()
    except ConfigError as e:
        raise ValidationFailure(str(e)) from None
    env = _make_env(env_name, args.config, episode_length=args.episode_length)
    out = _output_dir(args.output_dir)
    stem = os.path.join(out, f"{args.algo}_{env_name}_seed{args.seed}")
    policy, log = train(env, cfg, args.seed, verbose=not args.quiet)
    log.write_csv(stem + ".csv")
    policy.save(stem + ".ckpt", {"seed": args.seed, "config": _jsonable(dataclasses.asdict(cfg))})
    print(f"wrote {stem}.csv and {stem}.ckpt")
    phases = log.events.get("phase_seconds")
    if phases:
        print(f"time stepping the env {phases['env']:.1f} s, learning {phases['learn']:.1f} s")
    if log.events.get("interrupted"):
        print("training interrupted; log and checkpoint hold the state at the interrupt", file=sys.stderr)
        return 2
    return 0


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def cmd_eval(args) -> int:
    from qpsim.agents import Policy, evaluate

    try:
        policy = Policy.load(args.checkpoint)
    except (ValueError, KeyError) as e:
        raise ValidationFailure(f"{args.checkpoint}: {e}") from None
    if args.episodes < 1:
        raise ValidationFailure("--episodes must be at least 1")
    env = _make_env(args.env or policy.env)
    if env.act_dim != policy.act_dim:
        raise ValidationFailure(f"checkpoint acts in {policy.act_dim} dims but {env.name} needs {env.act_dim}")
    r = evaluate(env, policy.act, args.episodes, args.seed)
    print(f"episodes {args.episodes}  mean {r.mean():.6g}  min {r.min():.6g}  max {r.max():.6g}")
    return 0


def cmd_sim(args) -> int:
    from qpsim.agents.common import stream
    from qpsim.physics import write_trajectory

    if args.steps < 0 or args.scenes < 1:
        raise ValidationFailure("--steps must be non-negative and --scenes at least 1")
    env = _make_env(args.env, args.config, episode_length=max(args.steps, 1))
    state = env.reset(args.seed, args.scenes)
    rng = stream(args.seed, 30)

    def frames():
        nonlocal state
        yield 0, state.qp
        for t in range(1, args.steps + 1):
            shape = (args.scenes, env.act_dim)
            a = rng.uniform(-1.0, 1.0, size=shape) if args.actions == "random" else np.zeros(shape)
            state = env.step(state, a)
            yield t, state.qp

    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            n = write_trajectory(fh, frames())
        print(f"wrote {n} records to {args.output}", file=sys.stderr)
    else:
        write_trajectory(sys.stdout, frames())
    return 0


def cmd_bench(args) -> int:
    from qpsim.diagnostics import THROUGHPUT_HEADER, run_throughput, write_csv

    if args.workers < 1 or args.duration <= 0:
        raise ValidationFailure("--workers must be at least 1 and --duration positive")
    try:
        report = run_throughput(args.env, args.batch_sizes, args.workers, args.duration,
                                num_shards=args.num_shards, seed=args.seed)
    except ValueError as e:
        raise ValidationFailure(str(e)) from None
    except KeyError as e:
        raise ValidationFailure(e.args[0]) from None
    path = os.path.join(_output_dir(args.output_dir), f"bench_{args.env}_w{args.workers}.csv")
    write_csv(path, THROUGHPUT_HEADER, report.rows())
    for row in report.rows():
        print("  ".join(f"{k} {v}" for k, v in zip(THROUGHPUT_HEADER, row)))
    print(f"wrote {path}")
    return 0


def cmd_diag(args) -> int:
    from qpsim.config import load_config, scene_path
    from qpsim.diagnostics import CONSERVATION_HEADER, DEFAULT_LADDER, run_conservation, write_csv

    if args.seeds < 1 or args.duration <= 0:
        raise ValidationFailure("--seeds must be at least 1 and --duration positive")
    cfg = load_config(_resolve_scene(args.config) if args.config else scene_path("ant"))
    report = run_conservation(cfg, args.dt or DEFAULT_LADDER, args.seeds, args.duration, args.torque, args.kick,
                              dtype=np.dtype(args.precision))
    path = os.path.join(_output_dir(args.output_dir), "conservation.csv")
    write_csv(path, CONSERVATION_HEADER, report.rows())
    for row in report.rows():
        print("  ".join(f"{k} {v:.6g}" if isinstance(v, float) else f"{k} {v}"
                        for k, v in zip(CONSERVATION_HEADER, row)))
    print(f"wrote {path}")
    return 0


def cmd_config(args) -> int:
    from qpsim.config import load_config, traversal

    path = _resolve_scene(args.file)
    cfg = load_config(path)
    traversal(cfg)
    print(f"{path}: ok ({len(cfg.bodies)} bodies, {len(cfg.joints)} joints, {cfg.act_dim} action dims)")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sim": cmd_sim, "bench": cmd_bench, "diag": cmd_diag,
            "config": cmd_config}


def main(argv=None) -> int:
    from qpsim.config import ConfigError
    from qpsim.envs import NonDifferentiableEnv

    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationFailure, ConfigError, NonDifferentiableEnv) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures: blowups, divergence, I/O
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
