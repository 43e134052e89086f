"""Command line: ``viewdesc <command> [--config PATH] [--out DIR] [--seed N] [--set key=value ...]``.

Commands: gen-data, train, embed, eval, baseline, report. Outputs go under
``--out``, else ``$VIEWDESC_OUT``, else ``./viewdesc-out``. On failure one
line ``error: <kind>: <message>`` is printed to stderr and the exit status
is nonzero (2 for usage and config problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import load_settings
from .scene.dataset import read_manifest

ENV_OUT = "VIEWDESC_OUT"
COMMANDS = ("gen-data", "train", "embed", "eval", "baseline", "report")
NEEDS_SEED = ("gen-data", "train")


class UsageError(Exception):
    pass


def build_parser():
    p = argparse.ArgumentParser(prog="viewdesc", description="View descriptor learning pipeline")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value config file (default: bundled desk config)")
    p.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./viewdesc-out)")
    p.add_argument("--seed", type=int, help="master seed (required for gen-data and train)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config setting; repeatable")
    p.add_argument("--manifest", help="dataset manifest (default: OUT/data/manifest.tsv)")
    p.add_argument("--metrics", help="metrics directory for report (default: OUT/metrics)")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    return p


def _fail(kind, message, status):
    print(f"error: {kind}: {message}", file=sys.stderr)
    return status


def _manifest(args, out):
    path = Path(args.manifest) if args.manifest else pipeline.default_manifest(out)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    return path, read_manifest(path)


def _seed(args, manifest=None):
    if args.seed is not None:
        return args.seed
    if manifest is not None:
        return manifest.seed
    return None


def run(argv=None):
    """Execute one command; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage text
        if exc.code not in (0, None):
            print("error: usage: invalid arguments", file=sys.stderr)
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = Path(args.out or os.environ.get(ENV_OUT) or "viewdesc-out")
    try:
        if args.command in NEEDS_SEED and args.seed is None:
            raise UsageError(f"--seed is required for {args.command}")
        settings = load_settings(args.config, args.overrides)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("usage", str(exc), 2)
    except FileNotFoundError as exc:
        parser.print_usage(sys.stderr)
        return _fail("config", str(exc), 2)
    except (ValueError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        return _fail("config", str(exc), 2)

    try:
        outputs, inputs, seed = _dispatch(args, settings, out)
        pipeline.write_provenance(out, args.command, settings, seed, inputs, outputs)
    except FileNotFoundError as exc:
        return _fail("missing-file", str(exc), 1)
    except (ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except Exception as exc:  # noqa: BLE001 - the CLI reports every failure as one line
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


def _dispatch(args, settings, out):
    paths = pipeline.layout(out)
    cmd = args.command
    if cmd == "gen-data":
        manifest_path = pipeline.gen_data(settings, out, args.seed)
        print(f"dataset written: {manifest_path}")
        return [manifest_path, manifest_path.parent / "dataset.json"], [], args.seed

    if cmd == "report":
        metrics_dir = Path(args.metrics) if args.metrics else paths["metrics"]
        text, _ = pipeline.report(metrics_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.txt"
        report_path.write_text(text)
        print(text, end="")
        return [report_path], [metrics_dir / "index.tsv"], args.seed

    manifest_path, manifest = _manifest(args, out)
    seed = _seed(args, manifest)
    outputs = []
    for modality in settings.eval.modalities:
        if cmd == "train":
            def on_epoch(rec, net, modality=modality):
                logging.getLogger("viewdesc").info(
                    "%s epoch %d %s lr=%.4g triplet=%.4f pair=%.4f reg=%.3g", modality, rec.epoch, rec.phase,
                    rec.lr, rec.triplet, rec.pair, rec.reg)
            _, history, ck, sha = pipeline.train_modality(settings, manifest, modality, seed, paths["model"],
                                                          on_epoch)
            outputs += [ck, paths["model"] / f"train_{modality}.tsv"]
            print(f"{modality}: trained {len(history)} epochs, checkpoint {ck} sha256={sha[:12]}")
        elif cmd == "embed":
            db_path = pipeline.embed_ours(manifest, modality, paths["model"], paths["db"])
            outputs.append(db_path)
            print(f"{modality}: template database {db_path}")
        elif cmd == "eval":
            files, result = pipeline.eval_ours(settings, manifest, modality, paths["model"], paths["db"],
                                               paths["metrics"])
            outputs += files
            _print_accuracy(modality, "ours", result)
        elif cmd == "baseline":
            files, result = pipeline.eval_hog(settings, manifest, modality, paths["db"], paths["metrics"])
            outputs += files
            _print_accuracy(modality, "hog", result)
    return outputs, [manifest_path], seed


def _print_accuracy(modality, method, result):
    for t, k, a in result["accuracy"]:
        print(f"{modality}\t{method}\tk={k}\t<{t:g}deg\t{a:.4f}")


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
