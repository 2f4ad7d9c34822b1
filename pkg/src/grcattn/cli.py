"""Command-line entry point ``grc-attn``.

Exit codes: 0 success, 1 verification failure or training divergence,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import config as cfgmod
from . import metrics as mt
from . import model as mdl
from . import training as tr
from . import verify as vf
from .numerics import ContractError

log = logging.getLogger("grcattn")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def parse_nus(text):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise UsageError("--nu needs at least one threshold")
    try:
        nus = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad threshold list {text!r}") from None
    for nu in nus:
        if not 0.0 <= nu <= 1.0:
            raise UsageError(f"threshold {nu} outside [0, 1]")
    return nus


def _load_config(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    d = cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "nu", None) is not None:
        d["nus"] = parse_nus(args.nu)
    if getattr(args, "out", None) is not None:
        d["out"] = args.out
    return cfgmod.from_dict(d)


def _out_dir(cfg, command):
    out = Path(cfg.out if cfg.out is not None else Path("runs") / command)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out, cfg):
    (out / "config.json").write_text(cfg.to_json())


def _fmt(x):
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------- train


def cmd_train(args):
    cfg = _load_config(args)
    out = _out_dir(cfg, "train")
    _write_config(out, cfg)
    train = mt.make_dataset(cfg.task, "train", cfg.seed)
    dev = mt.make_dataset(cfg.task, "dev", cfg.seed)
    params = mdl.init_params(cfg.model, cfg.attention, cfg.seed)
    trainer = tr.Trainer(params, cfg.optim.train_config(), seed=cfg.seed)
    rows = []
    per_epoch = -(-len(train) // cfg.optim.batch_size)
    every = cfg.optim.eval_every or per_epoch

    def on_step(it, loss):
        dev_ce = tr.mean_ce(params, dev) if dev and it % every == 0 else None
        rows.append((it, trainer.epoch, loss, dev_ce))
        if dev_ce is not None:
            log.info("iter %d epoch %d train %.4f dev %.4f", it, trainer.epoch, loss, dev_ce)

    status = EXIT_OK
    try:
        for _ in range(cfg.optim.epochs):
            trainer.train_epoch(train, on_step)
    except tr.TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        status = EXIT_FAIL
    lines = ["iteration,epoch,train_ce,dev_ce"]
    lines += [f"{it},{ep},{_fmt(a)},{_fmt(b)}" for it, ep, a, b in rows]
    (out / "loss.csv").write_text("\n".join(lines) + "\n")
    if status == EXIT_OK:
        ckpt.save(out / "checkpoint.json", params, {"seed": cfg.seed, "iterations": trainer.iteration})
        print(f"wrote {out / 'checkpoint.json'}")
    return status


# ---------------------------------------------------------------- verify


def cmd_verify(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    report = vf.run(args.seed if args.seed is not None else 0, args.trials, args.inject_fault)
    text = report.text()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.txt").write_text(text)
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------- sweep / decode


def _load_checkpoint(args, cfg):
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    params = ckpt.load(args.checkpoint)
    if params.dims.vocab != cfg.task.vocab or params.dims.feat != cfg.task.feature_dim:
        raise cfgmod.ConfigError("checkpoint dimensions do not match the task in the config")
    return params


def _dataset(cfg, split):
    return mt.make_dataset(cfg.task, split, cfg.seed)


def cmd_sweep(args):
    cfg = _load_config(args)
    params = _load_checkpoint(args, cfg)
    if params.kind.name != "decgrc":
        raise cfgmod.ConfigError(f"sweep needs a DecGRC checkpoint, got {params.kind}")
    if not cfg.nus:
        raise UsageError("empty threshold list")
    out = _out_dir(cfg, "sweep")
    _write_config(out, cfg)
    data = _dataset(cfg, args.split)
    rows, details = mt.sweep_threshold(params, data, cfg.nus, max_len=cfg.decode.max_len)
    (out / "sweep.csv").write_text(mt.sweep_csv(rows))
    (out / "sweep_utterances.jsonl").write_text(mt.sweep_jsonl(details))
    sys.stdout.write(mt.sweep_csv(rows))
    return EXIT_OK


def cmd_decode(args):
    cfg = _load_config(args)
    params = _load_checkpoint(args, cfg)
    nu = None
    if args.nu is not None:
        nus = parse_nus(args.nu)
        if len(nus) != 1:
            raise UsageError("decode takes a single --nu value")
        nu = nus[0]
    out = _out_dir(cfg, "decode")
    _write_config(out, cfg)
    data = _dataset(cfg, args.split)
    lines, pairs = [], []
    for i, (x, y) in enumerate(data):
        h = mdl.encode(x, params.arrays, params.dims)
        hyp = mdl.decode(h, params, beam=cfg.decode.beam, nu=nu, max_len=cfg.decode.max_len)
        ref = [t for t in y if t != mdl.EOS]
        pairs.append((ref, hyp.words()))
        lines.append(json.dumps({"utt": i, "ref": ref, "hyp": hyp.words(), "score": hyp.score,
                                 "truncated": hyp.truncated}, sort_keys=True))
    (out / "hypotheses.jsonl").write_text("\n".join(lines) + "\n")
    summary = f"wer={mt.corpus_wer(pairs)!r} utterances={len(data)}\n"
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    return EXIT_OK


# ---------------------------------------------------------------- dump-attention


def write_matrix_csv(path, M):
    lines = [",".join(repr(float(v)) for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def write_pgm(path, M, lo=0.0, hi=1.0):
    """8-bit binary greymap, rows are decoder steps; header ``P5 {T} {U} 255``."""
    M = np.asarray(M, dtype=np.float64)
    U, T = M.shape
    scaled = np.clip((M - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    Path(path).write_bytes(f"P5 {T} {U} 255\n".encode("ascii") + pixels.tobytes())


def cmd_dump_attention(args):
    cfg = _load_config(args)
    params = _load_checkpoint(args, cfg)
    data = _dataset(cfg, args.split)
    if not 0 <= args.utt < len(data):
        raise UsageError(f"no utterance {args.utt} in the {args.split} split ({len(data)} utterances)")
    out = _out_dir(cfg, "dump")
    _write_config(out, cfg)
    x, y = data[args.utt]
    infos = mdl.teacher_forced_trace(params, x, y, mode="infer")
    A = np.stack([i.weights for i in infos])
    write_matrix_csv(out / "attention.csv", A)
    write_pgm(out / "attention.pgm", A)
    written = ["attention.csv", "attention.pgm"]
    if infos[0].gates is not None:
        Z = np.stack([i.gates for i in infos])
        write_matrix_csv(out / "gates.csv", Z)
        write_pgm(out / "gates.pgm", Z)
        written += ["gates.csv", "gates.pgm"]
    print(f"wrote {', '.join(written)} to {out} ({A.shape[0]} x {A.shape[1]})")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="grc-attn", description="GRC / DecGRC attention toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, checkpoint=False, nu=False):
        sp.add_argument("--config", help="RunConfig JSON")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        if checkpoint:
            sp.add_argument("--checkpoint", help="checkpoint written by train")
            sp.add_argument("--split", default="test", choices=["train", "dev", "test"])
        if nu:
            sp.add_argument("--nu", help="comma-separated thresholds")

    sp = sub.add_parser("train", help="train a model and write a checkpoint and loss curve")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("verify", help="run the randomized invariant suite")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--out")
    sp.add_argument("--inject-fault", choices=vf.FAULTS, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="latency / error tradeoff over thresholds")
    common(sp, checkpoint=True, nu=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("dump-attention", help="write attention and gate matrices")
    common(sp, checkpoint=True)
    sp.add_argument("--utt", type=int, default=0, help="utterance id within the split")
    sp.set_defaults(func=cmd_dump_attention)

    sp = sub.add_parser("decode", help="decode a split and report token error rate")
    common(sp, checkpoint=True, nu=True)
    sp.set_defaults(func=cmd_decode)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (cfgmod.ConfigError, ckpt.CheckpointError, ContractError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
