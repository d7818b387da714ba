"""Command-line entry point: ``pfm-lab <subcommand> ...``.

Every subcommand also accepts ``--config FILE`` holding ``key=value`` lines
(keys are option names, dashes or underscores); explicit flags win.
Exit codes: 0 success, 1 failed check or run, 2 usage error.
"""

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import autograd as ag
from . import dashes
from .analysis import run_checks
from .filters import bank_from_spec, format_bank
from .layers import PFM, Conv2d
from .models import MODEL_NAMES, build_counting_graph, make_model, parameter_table
from .training import TrainConfig, TrainingDiverged, kaiming_init, save_checkpoint, train


def _bank_arg(text):
    try:
        bank_from_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _shape_arg(text):
    try:
        shape = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}") from None
    if len(shape) != 4 or min(shape) < 1:
        raise argparse.ArgumentTypeError("shape must be N,C,H,W with positive entries")
    return shape


def _bool_arg(text):
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="pfm-lab", description="Pre-defined Filter Module experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dashes", help="generate the oriented-dashes dataset")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--count", type=int, default=1024)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a toy or mini model")
    p.add_argument("--model", choices=MODEL_NAMES, default="toy-pfm")
    p.add_argument("--bank", type=_bank_arg, default="edge_line9",
                   help="edge_line9 | edge_line18 | translating | random:<seed>[:<n>] | subset:<name>")
    p.add_argument("--no-relu", action="store_true", default=False)
    p.add_argument("--trainable-filters", action="store_true", default=False)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--data", help="ODCD training file; generated from --data-seed if omitted")
    p.add_argument("--data-seed", type=int, default=7)
    p.add_argument("--data-count", type=int, default=1024)
    p.add_argument("--test-data")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--lr-step", type=int, default=30)
    p.add_argument("--lr-gamma", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("count-params", help="per-layer trainable parameter table")
    p.add_argument("--arch", choices=("resnet18", "pfnet18"), default="pfnet18")
    p.add_argument("--bank-size", type=int, choices=(0, 2, 4, 8, 9, 13, 18), default=9)
    p.add_argument("--classes", type=int, default=200)
    p.add_argument("--no-relu", action="store_true", default=False)
    p.add_argument("--trainable-filters", action="store_true", default=False)

    sub.add_parser("check", help="run the property suite")

    p = sub.add_parser("bench", help="time PFM vs. plain convolution on CPU")
    p.add_argument("--shape", type=_shape_arg, default=(8, 16, 32, 32))
    p.add_argument("--bank", type=_bank_arg, default="edge_line9")
    p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("export-filters", help="write a filter bank as text")
    p.add_argument("--bank", type=_bank_arg, default="edge_line18")
    p.add_argument("--out", help="file to write (default: stdout)")

    for sp in sub.choices.values():
        sp.add_argument("--config", help="key=value file; flags override it")
    parser.subcommands = sub.choices
    return parser


def read_config(path):
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def write_config(args, path):
    skip = {"command", "config"}
    lines = [f"# pfm-lab {args.command}"]
    lines += [f"{k}={v}" for k, v in sorted(vars(args).items()) if k not in skip and v is not None]
    Path(path).write_text("\n".join(lines) + "\n")


def _apply_config(sub, path):
    try:
        values = read_config(path)
    except (OSError, ValueError) as exc:
        sub.error(str(exc))
    actions = {a.dest: a for a in sub._actions}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            sub.error(f"unknown config key {key!r}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                values[key] = _bool_arg(value)
            elif action.type is not None:
                value = action.type(value)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            sub.error(f"config key {key}: {exc}")
        if action.choices is not None and value not in action.choices:
            sub.error(f"config key {key}: {value!r} not in {list(action.choices)}")
        action.required = False
    sub.set_defaults(**values)


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in parser.subcommands), None)
    if known.config and command is not None:
        _apply_config(parser.subcommands[command], known.config)
    return parser.parse_args(argv)


def cmd_gen_dashes(args):
    ds = dashes.generate(args.seed, args.count)
    dashes.save(ds, args.out)
    print(f"wrote {len(ds)} images to {args.out} (oracle accuracy {dashes.oracle_accuracy(ds):.4f})")
    return 0


def cmd_train(args):
    out = Path(args.out)
    try:
        cfg = TrainConfig(lr0=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
                          epochs=args.epochs, lr_step=args.lr_step, lr_gamma=args.lr_gamma,
                          batch_size=args.batch_size, seed=args.seed)
        data = dashes.load(args.data) if args.data else dashes.generate(args.data_seed, args.data_count)
        test = dashes.load(args.test_data) if args.test_data else None
        bank = bank_from_spec(args.bank)
        model = make_model(args.model, bank, 2, args.width, not args.no_relu, args.trainable_filters)
    except (OSError, ValueError) as exc:
        print(f"pfm-lab train: error: {exc}", file=sys.stderr)
        return 2
    kaiming_init(model, args.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_config(args, out / "config.txt")
    metrics = out / "metrics.tsv"
    metrics.unlink(missing_ok=True)
    print("\t".join(("epoch", "train_loss", "train_acc", "test_acc", "wall_ms")))
    try:
        records = train(model, data, cfg, test=test, metrics_path=metrics)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    save_checkpoint(model, out / "checkpoint.bin")
    last = records[-1]
    print(f"final train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f}")
    return 0


def cmd_count_params(args):
    model = build_counting_graph(args.arch, 0 if args.arch == "resnet18" else args.bank_size,
                                 args.classes, use_relu=not args.no_relu,
                                 filters_trainable=args.trainable_filters)
    print("layer\tshape\tcount")
    total = 0
    for name, shape, count in parameter_table(model):
        print(f"{name}\t{'x'.join(str(s) for s in shape)}\t{count}")
        total += count
    print(f"total\t\t{total}")
    return 0


def cmd_check(args):
    results = run_checks()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best * 1000.0


def cmd_bench(args):
    n, c, h, w = args.shape
    bank = bank_from_spec(args.bank)
    x = np.random.default_rng(0).standard_normal(args.shape)
    layers = {"pfm": PFM(c, c, bank), "conv3x3": Conv2d(c, c, 3)}
    print("layer\tforward_ms\tforward_backward_ms")
    for name, layer in layers.items():
        fwd = _time(lambda: layer(ag.Tensor(x)), args.repeats)

        def step():
            layer.zero_grad()
            layer(ag.Tensor(x)).sum().backward()

        both = _time(step, args.repeats)
        print(f"{name}\t{fwd:.2f}\t{both:.2f}")
    return 0


def cmd_export_filters(args):
    text = format_bank(bank_from_spec(args.bank))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "gen-dashes": cmd_gen_dashes,
    "train": cmd_train,
    "count-params": cmd_count_params,
    "check": cmd_check,
    "bench": cmd_bench,
    "export-filters": cmd_export_filters,
}


def main(argv=None):
    args = parse_args(sys.argv[1:] if argv is None else argv)
    threads = int(os.environ.get("PFM_LAB_THREADS", "1"))
    with threadpool_limits(limits=max(threads, 1)):
        return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
