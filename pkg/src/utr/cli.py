"""Command-line entry point: ``utr {gen-data,train,eval,analyze}``.

Every command takes ``--config FILE`` (plain ``key = value`` lines) and
``--out DIR``; explicit flags override the file. Exit codes: 0 success,
1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path


from . import analysis, data, evaluation, plotting, rademacher, training
from .config import merge, parse_bool, read_config, write_resolved
from .envs import ENV_KINDS, make_env
from .errors import ConfigError, UsageError, UTRError
from .models import KINDS, PolicyModel

log = logging.getLogger("utr")
REQUIRED = object()


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(Fraction(v.strip())) for v in str(text).split(",") if v.strip()]


def _kinds(text) -> list[str]:
    kinds = [k.strip().lower() for k in str(text).split(",") if k.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise ValueError(f"model kinds must come from {','.join(KINDS)}, got {text!r}")
    return kinds


def _opt_int(raw):
    return None if raw in (None, "", "none", "None") else int(raw)


def _opt_str(raw):
    return None if raw in (None, "", "none", "None") else str(raw)


# name -> (converter, default, help); REQUIRED marks options with no default
ENV_OPTS = {
    "env": (str, "chain", "environment kind: " + ", ".join(ENV_KINDS)),
    "n_states": (int, 8, "ChainMDP cells"),
    "horizon": (_opt_int, None, "episode horizon (env default when omitted)"),
    "d_s": (int, 3, "LinearControl state dim"),
    "d_a": (int, 2, "LinearControl action dim"),
    "env_seed": (int, 0, "LinearControl dynamics seed"),
}
OPTIONS = {
    "gen-data": {
        **ENV_OPTS,
        "n": (int, 500, "number of episodes"),
        "mix": (str, "expert:0.5,random:0.5", "behavior mix, tier:weight pairs"),
        "seed": (int, 0, "generation seed"),
        "out": (str, REQUIRED, "dataset directory to write"),
    },
    "train": {
        "model": (str, REQUIRED, "model kind: dt, udt or udc"),
        "data": (str, REQUIRED, "dataset directory"),
        "out": (str, REQUIRED, "output directory"),
        "steps": (int, 2000, "total optimizer steps"),
        "batch": (int, 64, "batch size"),
        "lr": (float, 1e-4, "peak learning rate"),
        "warmup": (int, 100, "linear warmup steps"),
        "clip": (float, 0.25, "global grad-norm clip"),
        "context": (_opt_int, None, "context length L (default min(16, T_max))"),
        "seed": (int, 0, "init and sampling seed"),
        "eval_interval": (int, 0, "checkpoint every N steps (0: only at the end)"),
        "embed_dim": (int, 64, "token width D"),
        "depth": (int, 3, "number of mixer blocks"),
        "n_heads": (int, 4, "attention heads"),
        "kernel": (int, 4, "conv kernel size K"),
        "expansion": (int, 0, "conv width D_e (0: 2D)"),
        "d_r": (int, 32, "return-embedding width"),
        "record_time": (parse_bool, True, "log per-step wall time (off: bit-identical metrics)"),
        "resume": (_opt_str, None, "checkpoint to continue from"),
    },
    "eval": {
        **ENV_OPTS,
        "ckpt": (_opt_str, None, "model checkpoint"),
        "policy": (str, "model", "model, expert or random"),
        "data": (_opt_str, None, "dataset directory whose manifest defines the env"),
        "multipliers": (_floats, [0.5, 0.75, 1.0, 1.25, 1.5, 2.0], "target RTG multiples of the expert return"),
        "n_eval": (int, 10, "episodes per target"),
        "seed": (int, 0, "rollout seed"),
        "out": (str, REQUIRED, "output directory"),
    },
    "analyze": {
        "compare": (_opt_str, None, "comma-separated model kinds for the complexity table"),
        "L": (int, 16, "context length"),
        "D": (int, 64, "embed width"),
        "depth": (int, 3, "mixer blocks"),
        "n_heads": (int, 4, "attention heads"),
        "batch": (int, 64, "batch size for FLOPs and timing"),
        "bench_steps": (int, 500, "timed training steps per run (0 skips timing)"),
        "repeats": (int, 3, "timed runs per kind; the median is reported"),
        "rademacher": (parse_bool, False, "run the trace-bound experiment"),
        "rho": (_floats, [0.0, 0.3, 0.6], "cross-block correlations"),
        "s": (_floats, [1.0 / 3.0], "squared weight norms in [1/3, 1]; fractions allowed"),
        "n": (int, 100_000, "samples per block"),
        "d": (int, 4, "block dimension"),
        "m": (int, 200, "Monte-Carlo sign draws"),
        "seed": (int, 0, "sampling seed"),
        "out": (str, REQUIRED, "output directory"),
    },
}
BOOL_FLAGS = {"record_time": ("--no-time", False), "rademacher": ("--rademacher", True)}


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> Parser:
    p = Parser(prog="utr", description="Unified-token offline RL toolkit.")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p.commands = {}
    for cmd, opts in OPTIONS.items():
        sp = p.commands[cmd] = sub.add_parser(cmd, help=(COMMANDS[cmd].__doc__ or "").strip().splitlines()[0])
        sp.add_argument("--config", help="key = value file; flags override it")
        for name, (conv, default, help_) in opts.items():
            if name in BOOL_FLAGS:
                flag, const = BOOL_FLAGS[name]
                sp.add_argument(flag, dest=name, action="store_const", const=const,
                                default=argparse.SUPPRESS, help=help_)
                continue
            kw = {}
            if name == "model" and cmd == "train":
                kw["choices"] = KINDS
            elif name == "policy":
                kw["choices"] = ("model", "expert", "random")
            elif name == "env":
                kw["choices"] = tuple(ENV_KINDS)
            shown = "required" if default is REQUIRED else default
            sp.add_argument("--" + name.replace("_", "-"), dest=name, type=conv, default=argparse.SUPPRESS,
                            help=f"{help_} [{shown}]", **kw)
    return p


def resolve(args: argparse.Namespace, parser: Parser) -> dict:
    parser = parser.commands[args.command]
    opts = OPTIONS[args.command]
    explicit = {k: v for k, v in vars(args).items() if k in opts}
    from_file = read_config(args.config) if getattr(args, "config", None) else {}
    defaults = {k: (None if d is REQUIRED else d) for k, (_, d, _) in opts.items()}
    values = merge(explicit, from_file, defaults, {k: c for k, (c, _, _) in opts.items()})
    missing = [k for k, (_, d, _) in opts.items() if d is REQUIRED and values.get(k) is None]
    if missing:
        parser.error("missing required " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if args.command == "train" and values["model"] not in KINDS:
        parser.error(f"--model must be one of {', '.join(KINDS)}")
    return values


def _env_from(v: dict):
    params = {"n_states": v["n_states"]} if v["env"] == "chain" else \
        {"d_s": v["d_s"], "d_a": v["d_a"], "seed": v["env_seed"]}
    if v["horizon"] is not None:
        params["horizon"] = v["horizon"]
    return make_env(v["env"], **params)


# -- commands -----------------------------------------------------------------------
def cmd_gen_data(v: dict) -> int:
    """Generate an offline dataset from a behavior-policy mix."""
    env = _env_from(v)
    ds = data.generate_dataset(env, data.parse_mix(v["mix"]), v["n"], v["seed"])
    out = data.save_dataset(ds, v["out"])
    write_resolved(out, "gen-data", v)
    m = ds.manifest
    print(f"wrote {m['n_episodes']} episodes to {out} (T_max={m['T_max']})")
    for tier, ret in m["tier_mean_return"].items():
        n = m["tier_episodes"][tier]
        print(f"  {tier:>7}: {n:5d} episodes, mean return {ret if ret is None else format(ret, '.4f')}")
    print(f"  oracle expert return {m['expert_return']:.4f}, random return {m['random_return']:.4f}")
    return 0


def cmd_train(v: dict) -> int:
    """Train a policy and write its checkpoint, metrics CSV and loss plot."""
    ds = data.load_dataset(v["data"])
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    L = v["context"] if v["context"] is not None else min(16, ds.T_max)
    cfg = training.TrainConfig(batch_size=v["batch"], steps=v["steps"], lr=v["lr"],
                               warmup_steps=v["warmup"], grad_clip=v["clip"], context_len=L,
                               seed=v["seed"], eval_interval=v["eval_interval"],
                               record_time=v["record_time"])
    if v["resume"]:
        model = None  # restored from the checkpoint
    else:
        mc = training.model_config_for(ds, v["model"], L, embed_dim=v["embed_dim"], depth=v["depth"],
                                       n_heads=v["n_heads"], kernel_size=v["kernel"],
                                       expansion=v["expansion"], d_R=v["d_r"])
        model = PolicyModel.init(mc, v["seed"])
    write_resolved(out, "train", {**v, "context": L})
    result = training.train(model, ds, cfg, out, resume=v["resume"])
    if result.metrics:
        plotting.plot_loss_curve(result.metrics, out / "loss.png",
                                 title=f"{result.model.config.kind.upper()} training loss")
        last = result.metrics[-1]
        print(f"{result.model.config.kind}: step {last['step']} loss {last['loss']:.5f}")
    print(f"checkpoint {result.checkpoint}")
    return 0


def cmd_eval(v: dict) -> int:
    """Roll out a policy under several target returns and report normalized scores."""
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    env = data.load_dataset(v["data"]).make_env() if v["data"] else _env_from(v)
    if v["policy"] == "model":
        if not v["ckpt"]:
            raise ConfigError("--ckpt is required when --policy model")
        policy = PolicyModel.load(v["ckpt"])[0]
    elif v["policy"] == "expert":
        policy = evaluation.ExpertPolicy(env)
    else:
        policy = evaluation.RandomPolicy(env)
    write_resolved(out, "eval", v)
    report = evaluation.evaluate(policy, env, v["multipliers"], v["n_eval"], v["seed"])
    report.write_csv(out / "eval.csv")
    plotting.plot_eval(report, out / "eval.png")
    for m, r, s in report.rows():
        print(f"  {m!s:>6}: mean return {r:10.4f}  score {s:8.2f}")
    print(f"best normalized score {report.best_score:.2f} ({report.wall_s:.1f}s)")
    return 0


def cmd_analyze(v: dict) -> int:
    """Complexity table (time, FLOPs, params) and/or trace-bound experiment."""
    if not v["compare"] and not v["rademacher"]:
        raise _Usage("analyze needs --compare KINDS and/or --rademacher")
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out, "analyze", v)
    if v["compare"]:
        try:
            kinds = _kinds(v["compare"])
        except ValueError as exc:
            raise _Usage(str(exc)) from None
        configs = analysis.default_configs(v["L"], v["D"], v["depth"], kinds, n_heads=v["n_heads"])
        rep = analysis.complexity_report(configs, v["batch"], v["bench_steps"], v["repeats"], v["seed"])
        rep.write_csv(out / "complexity.csv")
        plotting.plot_complexity(rep, out / "complexity.png")
        for row in rep.table():
            print("  " + "  ".join(str(c) for c in row))
    if v["rademacher"]:
        rhos, ss = v["rho"], v["s"]
        if len(ss) == 1:
            ss = ss * len(rhos)
        if len(rhos) == 1:
            rhos = rhos * len(ss)
        if len(rhos) != len(ss):
            raise _Usage(f"--rho has {len(rhos)} values but --s has {len(ss)}")
        rows = [rademacher.rademacher_row(r, s, v["n"], v["d"], m=v["m"], seed=v["seed"] + i)
                for i, (r, s) in enumerate(zip(rhos, ss))]
        rademacher.write_rademacher_csv(out / "rademacher.csv", rows)
        plotting.plot_rademacher(rows, out / "rademacher.png")
        for r in rows:
            print(f"  rho={r['rho']:.3f} s={r['s']:.4f} ratio_bound={r['ratio_bound']:.6f} "
                  f"emp {r['emp_merged']:.3e} vs {r['emp_sep']:.3e}")
    return 0


class _Usage(Exception):
    pass


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        values = resolve(args, parser)
        return COMMANDS[args.command](values)
    except _Usage as exc:
        parser.commands[args.command].print_usage(sys.stderr)
        print(f"utr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, UsageError) as exc:
        print(f"utr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (UTRError, OSError, FloatingPointError, ValueError) as exc:
        print(f"utr {args.command}: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
