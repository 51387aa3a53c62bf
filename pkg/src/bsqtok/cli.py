"""``bsqtok`` command-line interface.

Every verb prints ``key=value`` lines on stdout and exits nonzero on error.
Commands that draw random numbers require ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import entropy as ent
from .autoencoder import DATASET_KINDS, PATCH, QUANTIZERS, TrainConfig, make_synthetic_dataset, train
from .bounds import bound_loose, bound_tight, mc_quant_error
from .codec import compress, decompress, detokenize, stats, tokenize_images
from .errors import BsqError
from .formats import (
    CompressedFile,
    TokenFile,
    atomic_write,
    load_checkpoint,
    patches_to_image,
    read_pnm,
    save_checkpoint,
    write_pgm,
)
from .models import MODEL_NAMES
from .quantizer import project_to_sphere

__all__ = ["main", "build_parser"]


def _kv(out, **items):
    for key, value in items.items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}", file=out)


def cmd_tokenize(args, out):
    model = load_checkpoint(args.checkpoint)
    if args.synthetic:
        if args.seed is None:
            raise SystemExit("tokenize: --seed is required with --synthetic")
        patches = make_synthetic_dataset(args.synthetic, args.n, args.seed)
        # one frame, one row of n patches
        frames = [patches_to_image(patches, 1, args.n, PATCH)]
    else:
        frames = [read_pnm(path) for path in args.input]
    tokens = tokenize_images(model, frames)
    tokens.save(args.output)
    _kv(out, L=tokens.L, T=tokens.T, H=tokens.H, W=tokens.W, p=tokens.p, N=tokens.N,
        distinct_codes=len(np.unique(tokens.codes)))


def cmd_detokenize(args, out):
    model = load_checkpoint(args.checkpoint)
    tokens = TokenFile.load(args.tokens)
    frames = detokenize(model, tokens)
    target = Path(args.output)
    written = []
    for t, frame in enumerate(frames):
        path = target if len(frames) == 1 else target.with_name(f"{target.stem}_{t:04d}{target.suffix}")
        write_pgm(path, frame)
        written.append(str(path))
    _kv(out, frames=len(frames), written=",".join(written))


def cmd_compress(args, out):
    tokens = TokenFile.load(args.tokens)
    comp = compress(tokens, MODEL_NAMES[args.model], args.order)
    comp.save(args.output)
    print(stats(tokens, comp).to_kv(), file=out)


def cmd_decompress(args, out):
    tokens = decompress(CompressedFile.load(args.compressed))
    tokens.save(args.output)
    _kv(out, L=tokens.L, T=tokens.T, H=tokens.H, W=tokens.W, p=tokens.p, N=tokens.N)


def cmd_stats(args, out):
    tokens = TokenFile.load(args.tokens)
    comp = CompressedFile.load(args.compressed) if args.compressed else None
    report = stats(tokens, comp)
    print(report.to_table() if args.table else report.to_kv(), file=out)


def cmd_verify(args, out):
    original = TokenFile.load(args.tokens)
    restored = decompress(CompressedFile.load(args.compressed))
    same = restored.to_bytes() == original.to_bytes()
    _kv(out, identical=int(same), N=original.N)
    return 0 if same else 1


def cmd_train(args, out):
    config = TrainConfig(
        quantizer=args.quantizer, L=args.L, d=args.d, hidden=args.hidden, K=args.K, tau=args.tau,
        gamma=args.gamma, weight_entropy=args.weight_entropy, weight_commit=args.weight_commit,
        learning_rate=args.learning_rate, batch_size=args.batch_size, steps=args.steps, seed=args.seed,
    )
    data = make_synthetic_dataset(args.dataset, args.n, args.seed)
    model, report = train(config, data)
    if args.checkpoint:
        save_checkpoint(model, args.checkpoint)
    if args.report:
        atomic_write(args.report, (json.dumps(asdict(report), indent=2, sort_keys=True) + "\n").encode())
    _kv(out, initial_mse=report.initial_mse, final_mse=report.final_mse, code_usage=report.code_usage)


def cmd_bounds(args, out):
    _kv(out, L=args.L, loose=bound_loose(args.L))
    if args.L >= 2:
        _kv(out, tight=bound_tight(args.L))
    if args.mc_samples:
        if args.seed is None:
            raise SystemExit("bounds: --seed is required with --mc-samples")
        mc = mc_quant_error(args.L, args.mc_samples, args.seed)
        _kv(out, mc_mean=mc.mean, mc_stderr=mc.stderr, mc_samples=mc.n_samples)


def cmd_entropy_audit(args, out):
    rng = np.random.default_rng(args.seed)
    u = project_to_sphere(rng.standard_normal((args.batch, args.L)))
    probs = ent.soft_assign(u, args.tau)
    mixture = ent.mixture_code_dist(u, args.tau)
    _kv(
        out,
        L=args.L,
        tau=args.tau,
        batch=args.batch,
        mean_sample_entropy=float(ent.per_sample_entropy(probs).mean()),
        dataset_entropy_approx=float(ent.dataset_entropy_approx(probs)),
        dataset_entropy_exact=float(ent.distribution_entropy(mixture)),
        gap=float(ent.approximation_gap(u, args.tau)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsqtok", description="Binary spherical quantization toolkit.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("tokenize", help="encode images (or synthetic patches) into a token file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", nargs="+", help="PGM/PPM frames of equal size")
    src.add_argument("--synthetic", choices=DATASET_KINDS, help="generate patches instead of reading images")
    p.add_argument("--n", type=int, default=64, help="synthetic patch count (default 64)")
    p.add_argument("--seed", type=int, help="synthetic data seed (required with --synthetic)")
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.bsqm)")
    p.add_argument("--output", "-o", required=True, help="token file to write (.bsqt)")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="reconstruct frames from a token file")
    p.add_argument("tokens")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", "-o", required=True, help="PGM path; multi-frame files get _NNNN suffixes")
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("compress", help="arithmetic-code a token file")
    p.add_argument("tokens")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--model", choices=sorted(MODEL_NAMES), default="context", help="default: context")
    p.add_argument("--order", type=int, default=1, help="context order (default 1)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="restore a token file")
    p.add_argument("compressed")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("stats", help="raw and coded size, bpp and savings")
    p.add_argument("tokens")
    p.add_argument("compressed", nargs="?")
    p.add_argument("--table", action="store_true", help="print a human-readable table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify", help="check that a compressed file restores the token file exactly")
    p.add_argument("tokens")
    p.add_argument("compressed")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="train the toy autoencoder on synthetic patches")
    defaults = TrainConfig()
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--quantizer", choices=QUANTIZERS, default=defaults.quantizer)
    p.add_argument("--dataset", choices=DATASET_KINDS, default="low-rank")
    p.add_argument("--n", type=int, default=4096, help="training patches (default 4096)")
    for name in ("L", "d", "hidden", "K", "batch_size", "steps"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int, default=getattr(defaults, name))
    for name in ("tau", "gamma", "weight_entropy", "weight_commit", "learning_rate"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=getattr(defaults, name))
    p.add_argument("--checkpoint", help="write the trained model here")
    p.add_argument("--report", help="write the JSON training report here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bounds", help="quantization error bounds and optional Monte Carlo estimate")
    p.add_argument("--L", type=int, default=18)
    p.add_argument("--mc-samples", type=int, default=0)
    p.add_argument("--seed", type=int, help="required with --mc-samples")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("entropy-audit", help="factorized vs exact dataset entropy on a random batch")
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_entropy_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        status = args.func(args, sys.stdout)
    except (BsqError, OSError) as exc:
        print(f"bsqtok {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
