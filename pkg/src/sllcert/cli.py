"""``sllcert`` command line: train, certify, curve, activity, regularity, attack, bound, inspect.

Every command writes CSV (to ``--out`` or stdout). Exit status is 0 on
success, 1 for usage errors and 2 for unreadable data or models.
"""

import argparse
import configparser
import csv
import io
import math
import os
import sys

import numpy as np

from . import attack as attack_mod
from .cert_input import certify_many, security_curve
from .data import DataFormatError, load_csv, load_idx, synth_data
from .linalg import row_group_norm, spectral_norm
from .network import ParseError, SchemaError, load_network, save_network
from .param_sll import (
    auto_epsilon,
    constraints_from_network,
    generalization_bound,
    optimal_robust_sparsity,
    robust_sparse_regularity,
)
from .parallel import parallel_map, thread_count
from .train import TrainConfig, activity_report, sgd_train


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def parse_grid(text):
    """``a:b:step`` into the inclusive grid ``a, a+step, ..., <= b``."""
    try:
        a, b, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"grid {text!r} must look like start:stop:step") from None
    if not step > 0 or b < a or a < 0:
        raise UsageError(f"grid {text!r} needs 0 <= start <= stop and step > 0")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(n)]


def parse_floats(text):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_arch(text):
    try:
        arch = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise UsageError(f"--arch expects comma-separated widths, got {text!r}") from None
    if not arch or min(arch) < 1:
        raise UsageError("--arch widths must be positive")
    return arch


def _check_in(path, flag):
    if path is not None and not os.path.isfile(path):
        raise InputError(f"{flag}: no such file {path!r}")


def _check_out(path):
    if path in (None, "-"):
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise UsageError(f"--out: directory {parent!r} does not exist")


def _load_data(args, n_classes=None):
    if args.data.lower().endswith(".csv"):
        if getattr(args, "labels", None):
            raise UsageError("--labels only applies to IDX data")
        return load_csv(args.data, limit=args.limit, n_classes=n_classes)
    if not getattr(args, "labels", None):
        raise UsageError("IDX data needs --labels (or pass a .csv file)")
    return load_idx(args.data, args.labels, limit=args.limit, n_classes=n_classes or 10)


def _data_args(p, labels=True):
    p.add_argument("--data", required=True, help="CSV (label first) or IDX images file")
    if labels:
        p.add_argument("--labels", help="IDX labels file when --data is IDX")
    p.add_argument("--limit", type=int, help="use only the first N samples")


def _model_args(p):
    p.add_argument("--model", required=True, help="network JSON written by 'train'")


def _out_arg(p):
    p.add_argument("--out", help="output CSV path (default: stdout)")


def _validate(args):
    for flag in ("model", "data", "labels", "config"):
        _check_in(getattr(args, flag, None), f"--{flag}")
    _check_out(getattr(args, "out", None))


def _epsilon(text, n_ref, depth):
    if text == "auto":
        return auto_epsilon(n_ref, depth)
    try:
        eps = float(text)
    except ValueError:
        raise UsageError(f"--epsilon must be 'auto' or a number, got {text!r}") from None
    if not eps > 0:
        raise UsageError("--epsilon must be > 0")
    return eps


def _threads():
    try:
        return thread_count()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _matching(net, data):
    if data.inputs.shape[1] != net.dims[0]:
        raise InputError(f"data has {data.inputs.shape[1]} features, model expects {net.dims[0]}")
    if len(data) == 0:
        raise InputError("dataset is empty")


TRAIN_KEYS = {"arch": parse_arch, "eta": float, "steps": int, "batch": int, "lr": float, "seed": int, "bias": None}


def _train_config(args):
    values = {}
    if args.config:
        cp = configparser.ConfigParser()
        try:
            cp.read(args.config, encoding="utf-8")
        except configparser.Error as exc:
            raise InputError(f"{args.config}: {exc}") from exc
        if not cp.has_section("train"):
            raise InputError(f"{args.config}: needs a [train] section")
        for key, raw in cp.items("train"):
            if key not in TRAIN_KEYS:
                raise InputError(f"{args.config}: unknown key {key!r}")
            try:
                values[key] = cp.getboolean("train", key) if key == "bias" else TRAIN_KEYS[key](raw)
            except ValueError as exc:
                raise InputError(f"{args.config}: bad value for {key}: {raw!r}") from exc
    for key in TRAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(args):
    if (args.data is None) == (args.synth is None):
        raise UsageError("train needs exactly one of --data or --synth")
    cfg = _train_config(args)
    if args.synth:
        data = synth_data(args.synth, args.n, args.classes, seed=cfg.seed)
    else:
        data = _load_data(args)
    net = sgd_train(data, cfg)
    save_network(net, args.out)
    return 0


def cmd_certify(args):
    net = load_network(args.model)
    data = _load_data(args)
    _matching(net, data)
    certs = certify_many(net, data.inputs, args.tol, _threads())
    rows = [
        (i, c.margin, c.r_global, c.r_sparse, ";".join(str(v) for v in c.s_hat))
        for i, c in enumerate(certs)
    ]
    _write_csv(args.out, ["x_id", "margin", "r_global", "r_sparse", "s_hat"], rows)
    return 0


def cmd_curve(args):
    net = load_network(args.model)
    data = _load_data(args, n_classes=net.n_classes)
    _matching(net, data)
    grid = parse_grid(args.grid)
    rows = security_curve(net, data, grid, args.tol, threads=_threads())
    _write_csv(args.out, ["nu", "certified_acc_sparse", "certified_acc_global", "clean_acc"], rows)
    return 0


def cmd_activity(args):
    net = load_network(args.model)
    data = _load_data(args)
    _matching(net, data)
    nus = parse_floats(args.nu)
    rep = activity_report(net, data, nus, n_dirs=args.dirs, seed=args.seed)
    rows = []
    for k, h in enumerate(rep.histograms, start=1):
        rows += [("active_count", k, n, int(c)) for n, c in enumerate(h)]
    for k, med in enumerate(rep.median_active_fraction(), start=1):
        rows.append(("median_active_fraction", k, "", med))
    for a, nu in enumerate(rep.nu):
        for k in range(rep.flips.shape[1]):
            rows.append(("mean_flips", k + 1, nu, float(rep.flips[a, k])))
    _write_csv(args.out, ["metric", "layer", "param", "value"], rows)
    return 0


def cmd_regularity(args):
    net = load_network(args.model)
    if net.has_bias:
        raise InputError("regularity needs a zero-bias model (train with --no-bias)")
    data = _load_data(args)
    _matching(net, data)
    eps = _epsilon(args.epsilon, len(data), net.depth)
    C = constraints_from_network(net)
    sweep = parse_grid(args.nu_sweep)
    res = parallel_map(lambda nu: robust_sparse_regularity(net, data, eps, nu, C), sweep, _threads())
    header = ["nu", "L_rob", "L_global", "ratio"] + [f"s_star_{k}" for k in range(1, net.depth + 1)]
    rows = [(r.nu, r.L_rob, r.L_global, r.ratio, *r.s_star[1:]) for r in res]
    _write_csv(args.out, header, rows)
    return 0


def cmd_attack(args):
    net = load_network(args.model)
    data = _load_data(args)
    _matching(net, data)
    cfg = attack_mod.AttackConfig(steps=args.steps, restarts=args.restarts, seed=args.seed)
    threads = _threads()
    certs = certify_many(net, data.inputs, args.tol, threads)
    radv = parallel_map(lambda x: attack_mod.min_adv_radius(net, x, args.adv_tol, cfg), list(data.inputs), threads)
    rows = [(i, c.margin, c.r_global, c.r_sparse, r) for i, (c, r) in enumerate(zip(certs, radv))]
    _write_csv(args.out, ["x_id", "margin", "r_global", "r_sparse", "r_adv"], rows)
    return 0


def cmd_bound(args):
    net = load_network(args.model)
    if net.has_bias:
        raise InputError("bound needs a zero-bias model (train with --no-bias)")
    data = _load_data(args)
    _matching(net, data)
    m = args.m if args.m is not None else len(data)
    eps = _epsilon(args.epsilon, len(data), net.depth)
    s = optimal_robust_sparsity(net, data, eps, args.nu, constraints_from_network(net))
    try:
        rep = generalization_bound(net, args.gamma, args.nu, args.alpha, m, s)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write_csv(
        args.out,
        ["term1", "term2", "total", "ln_cover", "bucket_log_term", "s_star"],
        [(rep.term1, rep.term2, rep.total, rep.ln_cover, rep.bucket_log_term, ";".join(map(str, s)))],
    )
    return 0


def cmd_inspect(args):
    net = load_network(args.model)
    rows = []
    for k, layer in enumerate(net.layers, start=1):
        W = layer.W
        rows.append((k, W.shape[0], W.shape[1], spectral_norm(W), row_group_norm(W), float(np.linalg.norm(layer.b))))
    A = net.classifier
    rows.append(("classifier", A.shape[0], A.shape[1], spectral_norm(A), row_group_norm(A.T), 0.0))
    _write_csv(args.out, ["layer", "rows", "cols", "spectral_norm", "group_norm", "bias_norm"], rows)
    return 0


def build_parser():
    p = _Parser(prog="sllcert", description="Sparse local Lipschitz certificates for ReLU networks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train an MLP with orthogonal frame regularization")
    t.add_argument("--data")
    t.add_argument("--labels")
    t.add_argument("--limit", type=int)
    t.add_argument("--synth", choices=["blobs", "spiral"])
    t.add_argument("--n", type=int, default=500, help="synthetic sample count")
    t.add_argument("--classes", type=int, default=2, help="synthetic class count")
    t.add_argument("--config", help="INI file with a [train] section")
    t.add_argument("--arch", type=parse_arch)
    t.add_argument("--eta", type=float)
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-bias", dest="bias", action="store_false", default=None)
    t.add_argument("--out", required=True, help="where to write the model JSON")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("certify", help="per-input sparse and global certified radii")
    _model_args(c)
    _data_args(c)
    c.add_argument("--tol", type=float, default=1e-6)
    _out_arg(c)
    c.set_defaults(func=cmd_certify)

    cv = sub.add_parser("curve", help="certified accuracy against perturbation energy")
    _model_args(cv)
    _data_args(cv)
    cv.add_argument("--grid", required=True, help="start:stop:step")
    cv.add_argument("--tol", type=float, default=1e-6)
    _out_arg(cv)
    cv.set_defaults(func=cmd_curve)

    a = sub.add_parser("activity", help="active-neuron histogram and flip counts")
    _model_args(a)
    _data_args(a)
    a.add_argument("--nu", default="0.05,0.1,0.2", help="comma-separated noise norms")
    a.add_argument("--dirs", type=int, default=20)
    a.add_argument("--seed", type=int, default=0)
    _out_arg(a)
    a.set_defaults(func=cmd_activity)

    r = sub.add_parser("regularity", help="robust sparse regularity over a nu sweep")
    _model_args(r)
    _data_args(r)
    r.add_argument("--nu-sweep", required=True, help="start:stop:step")
    r.add_argument("--epsilon", default="auto")
    _out_arg(r)
    r.set_defaults(func=cmd_regularity)

    at = sub.add_parser("attack", help="PGD minimal adversarial radius next to the certificates")
    _model_args(at)
    _data_args(at)
    at.add_argument("--tol", type=float, default=1e-6, help="certificate tolerance")
    at.add_argument("--adv-tol", type=float, default=1e-3, help="bisection tolerance for r_adv")
    at.add_argument("--steps", type=int, default=50)
    at.add_argument("--restarts", type=int, default=10)
    at.add_argument("--seed", type=int, default=0)
    _out_arg(at)
    at.set_defaults(func=cmd_attack)

    b = sub.add_parser("bound", help="margin generalization bound terms")
    _model_args(b)
    _data_args(b)
    b.add_argument("--gamma", type=float, required=True)
    b.add_argument("--nu", type=float, default=0.0)
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--m", type=int, help="sample count (default: dataset size)")
    b.add_argument("--epsilon", default="auto")
    _out_arg(b)
    b.set_defaults(func=cmd_bound)

    i = sub.add_parser("inspect", help="layer shapes and norms")
    _model_args(i)
    _out_arg(i)
    i.set_defaults(func=cmd_inspect)
    return p


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
        for flag in ("tol", "adv_tol"):
            if getattr(args, flag, 1.0) is not None and not getattr(args, flag, 1.0) > 0:
                raise UsageError(f"--{flag.replace('_', '-')} must be > 0")
        _validate(args)
        _threads()
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, SchemaError, DataFormatError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
