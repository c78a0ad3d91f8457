"""``olaq`` command line: quantize, decompose, gemm-verify, analyze, train, compare."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import serialize
from .bfp import QuantizedBlock, quantize_block
from .errors import ConfigError, DataError, FormatError, InvalidInput, MaskMismatch, OlaqError, ShapeError
from .harness.config import load_config
from .harness.train import compare_modes, format_table, train
from .igemm import igemm
from .infostats import analyze
from .oracles import bigint_matmul, first_mismatch
from .outlier import decompose_approach1, decompose_approach2

log = logging.getLogger("olaq")

VALIDATION_ERRORS = (ConfigError, ShapeError, InvalidInput, MaskMismatch, FormatError, DataError)


def parse_seeds(text: str) -> list[int]:
    """``"1,2,3"`` or ``"1..5"`` (inclusive) or a mix such as ``"1..3,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..")
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"bad seed list {text!r}") from None
    return seeds


def cmd_quantize(args) -> int:
    x = serialize.load_float(args.input)
    qb = quantize_block(x, args.bits)
    serialize.save_tensor(args.out, qb)
    print(f"quantized {x.shape} to {qb.bit_width} bits, scale_exp={qb.scale_exp}")
    return 0


def cmd_decompose(args) -> int:
    x = serialize.load_float(args.input)
    if args.approach == 1:
        d = decompose_approach1(x, args.gamma)
    else:
        d = decompose_approach2(x, args.gamma)
    serialize.save_decomposition(args.out, d)
    print(f"approach {args.approach}: {d.mask.count} outlier {d.mask.mode}(s), fraction {d.mask.fraction:.6f}")
    return 0


def _as_block(t) -> QuantizedBlock:
    return t if isinstance(t, QuantizedBlock) else quantize_block(t, 8)


def cmd_gemm_verify(args) -> int:
    a = _as_block(serialize.load_tensor(args.a))
    b = _as_block(serialize.load_tensor(args.b))
    acc = igemm(a, b, workers=args.workers)
    idx = first_mismatch(acc.values, bigint_matmul(a.q, b.q))
    if idx is None:
        print(f"match: {acc.shape[0]}x{a.shape[1]}x{acc.shape[1]}, scale_exp={acc.scale_exp}")
        return 0
    print(f"mismatch at index {list(idx)}")
    return 1


def cmd_analyze(args) -> int:
    x = serialize.load_float(args.input)
    report = analyze(x, gamma=args.gamma, bins=args.bins, bits=args.bits)
    sys.stdout.write(report.to_text())
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report.as_dict(), f, indent=2)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg.metrics_path = args.out
    m = train(cfg)
    print(f"mode={m.mode} seed={m.seed} final_accuracy={m.final_accuracy:.4f} "
          f"gemms={m.gemm_counts} wall={m.wall_clock:.2f}s")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    seeds = parse_seeds(args.seeds)
    modes = args.modes.split(",") if args.modes else None
    rows = compare_modes(cfg, seeds, modes) if modes else compare_modes(cfg, seeds)
    table = format_table(rows)
    sys.stdout.write(table)
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"seeds": seeds, "rows": [r.__dict__ for r in rows]}, f, indent=2)
    if args.table:
        with open(args.table, "w") as f:
            f.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="olaq", description="Outlier-aware integer training toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="quantize a float tensor file to a block")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--bits", type=int, default=8)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    d = sub.add_parser("decompose", help="outlier decomposition of a tensor file")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--gamma", type=float, default=5.0)
    d.add_argument("--approach", type=int, choices=(1, 2), default=2)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decompose)

    g = sub.add_parser("gemm-verify", help="check igemm against a big-integer oracle")
    g.add_argument("--a", required=True)
    g.add_argument("--b", required=True)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gemm_verify)

    a = sub.add_parser("analyze", help="informativeness report for a tensor file")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--gamma", type=float, default=5.0)
    a.add_argument("--bins", type=int, default=64)
    a.add_argument("--bits", type=int, default=8)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("train", help="single training run")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="metrics JSON path (overrides metrics_path)")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="all modes across several seeds")
    c.add_argument("--config", required=True)
    c.add_argument("--seeds", required=True, help='e.g. "1..5" or "1,2,3"')
    c.add_argument("--modes", help="comma-separated subset of modes")
    c.add_argument("--out", help="structured JSON summary")
    c.add_argument("--table", help="write the delimited table here too")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"olaq: error: {exc}", file=sys.stderr)
        return 2
    except (OlaqError, OSError, ValueError) as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"olaq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
