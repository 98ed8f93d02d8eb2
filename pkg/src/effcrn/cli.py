"""Command-line entry point: ``effcrn {analyze,describe,enhance,train,synth,selftest}``.

Exit codes: 0 success, 1 a check or run failed, 2 usage error.
``EFFCRN_NUM_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from .enhance import StreamingEnhancer
from .exceptions import (BuildError, ConfigError, DataError, EffCRNError, LoadError,
                         TrainingError, UsageError)
from .topology import (ABLATION_PAIRS, TABLE_VARIANTS, build_model, canonical_name,
                       complexity_row, load_checkpoint, save_checkpoint, spec_document,
                       variant_spec)
from .topology.checkpoint import read_header
from .training.data import datasets_from_manifest
from .training.metrics import delta_snr
from .training.trainer import TrainConfig, train
from .wavio import read_wav, write_wav

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "EFFCRN_NUM_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(rows: list[dict], columns: list[tuple[str, str, str]], fmt: str) -> None:
    """Print rows as an aligned table or one JSON object per line."""
    if fmt == "json-lines":
        for row in rows:
            print(json.dumps(row))
        return
    cells = [[h for _, h, _ in columns]]
    for row in rows:
        cells.append([("-" if row.get(k) is None else format(row[k], f))
                      for k, _, f in columns])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    for r in cells:
        print("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))))


# -- analyze ---------------------------------------------------------------

def cmd_analyze(args) -> int:
    names = args.variants or ([args.variant] if args.variant else list(TABLE_VARIANTS))
    rows = [complexity_row(v) for v in names]
    table = [r.to_dict() for r in rows]
    _emit(table, [("variant", "variant", "s"), ("depth", "depth", "d"),
                  ("params", "params", ",d"), ("published_params", "published", ",d"),
                  ("params_deviation", "dev", "+.1%"), ("flops_per_frame", "FLOPs/frame", ",d"),
                  ("published_flops_per_frame", "published", ",d"),
                  ("flops_deviation", "dev", "+.1%")], args.format)
    by = {r.variant: r for r in rows}
    deltas = []
    for a, b in ABLATION_PAIRS:
        if a in by and b in by:
            ra, rb = by[a], by[b]
            deltas.append({
                "from": a, "to": b, "delta_params": rb.params - ra.params,
                "published_delta_params": (rb.published_params - ra.published_params
                                           if ra.published_params and rb.published_params else None),
                "delta_flops": rb.flops - ra.flops,
                "published_delta_flops": (rb.published_flops - ra.published_flops
                                          if ra.published_flops and rb.published_flops else None),
            })
    if deltas:
        if args.format == "table":
            print()
        _emit(deltas, [("from", "from", "s"), ("to", "to", "s"),
                       ("delta_params", "d params", "+,d"),
                       ("published_delta_params", "published", "+,d"),
                       ("delta_flops", "d FLOPs", "+,d"),
                       ("published_delta_flops", "published", "+,d")], args.format)
    return EXIT_OK


# -- describe --------------------------------------------------------------

def cmd_describe(args) -> int:
    if args.model:
        spec_doc = spec_document(load_checkpoint(args.model).spec)
    else:
        spec_doc = spec_document(variant_spec(args.variant or "EffCRN23"))
    text = json.dumps(spec_doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# -- enhance ---------------------------------------------------------------

def cmd_enhance(args) -> int:
    if not args.input or not args.out:
        raise UsageError("enhance needs --in and --out")
    model = (load_checkpoint(args.model) if args.model
             else build_model(args.variant or "EffCRN23", seed=args.seed))
    y, rate = read_wav(args.input)
    streamer = StreamingEnhancer(model)
    enhanced = streamer.run(y)
    clipped = write_wav(args.out, enhanced, rate, fmt=args.wav_format)
    stats = {"input": str(args.input), "output": str(args.out), "samples": int(y.size),
             **streamer.timing(), "clipped_samples": clipped}
    if args.clean:
        s, _ = read_wav(args.clean)
        if s.size != y.size:
            raise DataError("--clean must have the same length as --in")
        gain = delta_snr(s, y, enhanced)
        stats.update(delta_snr_db=gain.delta, snr_clamped=gain.clamped)
    if args.format == "json-lines":
        print(json.dumps(stats))
    else:
        for k, v in stats.items():
            print(f"{k:>16}: {v:.3f}" if isinstance(v, float) else f"{k:>16}: {v}")
    return EXIT_OK


# -- train -----------------------------------------------------------------

def cmd_train(args) -> int:
    if not args.manifest or not args.out:
        raise UsageError("train needs --manifest and --out")
    variant = canonical_name(args.variant or "EffCRN23")
    model = build_model(variant, seed=args.seed)
    if args.resume:
        header, _ = read_header(args.resume)
        if header["spec_hash"] != model.spec.hash():
            raise UsageError(f"--resume checkpoint has spec hash {header['spec_hash']}, "
                             f"{variant} has {model.spec.hash()}")
        model = load_checkpoint(args.resume, expect_spec_hash=model.spec.hash())
    cfg = TrainConfig(seq_len=args.seq_len, batch_size=args.batch_size, lr=args.lr,
                      max_epochs=args.epochs, max_steps=args.steps, seed=args.seed)
    data = datasets_from_manifest(args.manifest, cfg.seq_len, args.seed, args.workers)
    if "train" not in data:
        raise DataError(f"{args.manifest}: no 'train' entries")
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.jsonl")

    def report(rec):
        print(f"epoch {rec['epoch']:3d}  steps {rec['steps']:5d}  lr {rec['lr']:.2e}  "
              f"train {rec['train_loss']:.5f}  val {rec['val_loss']:.5f}  "
              f"dSNR {rec['val_delta_snr_db']:+.2f} dB", file=sys.stderr)

    result = train(model, data["train"], data.get("val"), cfg, log_path=log_path, on_epoch=report)
    model.load_state_dict(result.best_state)
    save_checkpoint(model, out, extra={"best_epoch": result.best_epoch,
                                       "best_val_loss": result.best_val_loss,
                                       "steps": result.steps, "stop_reason": result.stop_reason,
                                       "train_config": cfg.to_dict()})
    print(json.dumps({"checkpoint": str(out), "log": str(log_path), "steps": result.steps,
                      "best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss,
                      "stop_reason": result.stop_reason}))
    return EXIT_OK


# -- synth / selftest ------------------------------------------------------

def cmd_synth(args) -> int:
    from .training.synth import write_corpus

    if not args.out:
        raise UsageError("synth needs --out (a directory)")
    manifest = write_corpus(args.out, args.n_train, args.n_val, args.seconds, args.seed)
    print(manifest)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_checks

    def show(r):
        if args.format == "json-lines":
            print(json.dumps({"check": r.name, "passed": r.passed, "detail": r.detail}))
        else:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<36} {r.detail}")

    results = run_checks(show, full_models=not args.quick)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--variant", help="e.g. FCRN15, EffCRN23, EffCRN23lite, FCRN15+F+D+P")
    common.add_argument("--model", type=Path, help="checkpoint file")
    common.add_argument("--in", dest="input", type=Path, help="input WAV")
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--manifest", type=Path)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("table", "json-lines"), default="table")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="effcrn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="parameter and FLOP report")
    p.add_argument("variants", nargs="*")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("describe", parents=[common], help="print the JSON spec document")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("enhance", parents=[common], help="stream a WAV through a model")
    p.add_argument("--clean", type=Path, help="clean reference for a delta-SNR report")
    p.add_argument("--wav-format", choices=("pcm16", "float"), default="pcm16")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("train", parents=[common], help="train from a manifest")
    p.add_argument("--resume", type=Path)
    p.add_argument("--log", type=Path)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--seq-len", type=int, default=TrainConfig.seq_len)
    p.add_argument("--epochs", type=int, default=TrainConfig.max_epochs)
    p.add_argument("--steps", type=int, default=None, help="cap on optimizer steps")
    p.add_argument("--workers", type=int, default=1, help="threads for loading and mixing")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus and manifest")
    p.add_argument("--n-train", type=int, default=10)
    p.add_argument("--n-val", type=int, default=2)
    p.add_argument("--seconds", type=float, default=1.65)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("selftest", parents=[common], help="run built-in consistency checks")
    p.add_argument("--quick", action="store_true", help="skip whole-model gradient checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (UsageError, ConfigError, BuildError) as exc:
        print(f"effcrn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LoadError, TrainingError, EffCRNError) as exc:
        print(f"effcrn: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
