"""End-to-end steps shared by the command line and the acceptance tests.

Output directory layout::

    data/                         dataset (manifest.tsv, dataset.json, samples/)
    model/checkpoint_<mod>.pdsc   trained network per modality
    model/train_<mod>.tsv         per-epoch loss log
    db/<mod>_<method>_<digest>.tsv             template descriptor database
    metrics/accuracy_<mod>_<method>_<digest>.tsv   threshold, k, accuracy
    metrics/perclass_<mod>_<method>_<digest>.tsv   class, held_out, threshold, k, accuracy
    metrics/ratios_<mod>_<method>_<digest>.tsv     class separation ratios (unclipped)
    metrics/ratiohist_<mod>_<method>_<digest>.tsv  ratio histogram clipped at 4
    metrics/hist_<mod>_<method>_c<class>_<digest>.tsv  angle/distance histograms
    metrics/index.tsv             which file is current for each (modality, method, kind)
    provenance/<command>.json

``<digest>`` is the first 12 hex digits of the checkpoint hash for learned
descriptors and of the dataset digest plus HOG settings for the baseline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, checkpoint
from .config import MODALITIES
from .hog import HogConfig, stacked_hog_batch
from .retrieval import (DESCENDING_DOT, DescriptorDB, accuracy_from_errors, angle_distance_histogram,
                        best_angle_errors, class_separation_ratios, embed_all, ratio_histogram,
                        read_accuracy, score_matrix, write_accuracy, write_histogram, write_ratios)
from .scene.dataset import TEMPLATE, TEST, TRAINING, build_dataset, load_arrays, read_manifest
from .trainer import train, write_log

log = logging.getLogger(__name__)

OURS, HOG = "ours", "hog"
REPORT_MODALITIES = ("depth", "shaded", "both")
REPORT_KS = (1, 22)
REPORT_THRESHOLDS = (5.0, 20.0, 40.0, 180.0)


def layout(out):
    out = Path(out)
    return {"data": out / "data", "model": out / "model", "db": out / "db",
            "metrics": out / "metrics", "provenance": out / "provenance"}


def default_manifest(out):
    return layout(out)["data"] / "manifest.tsv"


def gen_data(settings, out, seed):
    return build_dataset(settings.dataset, layout(out)["data"], seed)


def split_arrays(manifest, modality, classes=None):
    """{kind: (X, y, poses)} for the channels of ``modality``."""
    channels = MODALITIES[modality]
    out = {}
    for kind in (TRAINING, TEMPLATE, TEST):
        X, y, poses, _ = load_arrays(manifest, manifest.select([kind], classes), channels)
        out[kind] = (X, y, poses)
    return out


def training_classes(manifest, held_out):
    classes = sorted({r.class_id for r in manifest.records})
    return [c for c in classes if c != held_out]


def train_modality(settings, manifest, modality, seed, model_dir, on_epoch=None):
    """Train one network; returns (network, history, checkpoint path, checkpoint sha256)."""
    classes = training_classes(manifest, settings.eval.held_out)
    if not classes:
        raise ValueError("no class left to train on")
    data = split_arrays(manifest, modality, classes)
    Xt, yt, pt = data[TRAINING]
    Xm, ym, pm = data[TEMPLATE]
    spec = settings.network.spec(len(MODALITIES[modality]), manifest.config.resolution)
    schedule = replace(settings.schedule, seed=int(seed))
    network, history = train(Xt, yt, pt, Xm, ym, pm, manifest.symmetries, spec, settings.loss, schedule,
                             on_epoch=on_epoch)
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    path = model_dir / f"checkpoint_{modality}.pdsc"
    sha = checkpoint.save(network, path)
    write_log(model_dir / f"train_{modality}.tsv", history)
    return network, history, path, sha


def hog_digest(manifest, cfg=HogConfig()):
    blob = f"{manifest.digest}|{manifest.seed}|{cfg}".encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def template_db(manifest, modality, method, network=None, network_digest=""):
    """Descriptor database over every template in the manifest."""
    X, y, poses, _ = load_arrays(manifest, manifest.select([TEMPLATE]), MODALITIES[modality])
    if method == OURS:
        return embed_all(network, X, y, poses, network_digest, manifest.symmetries)
    desc = stacked_hog_batch(X).astype(np.float32)
    return DescriptorDB(desc, y, poses, network_digest, DESCENDING_DOT, manifest.symmetries)


def query_descriptors(manifest, modality, method, network=None):
    X, y, poses, _ = load_arrays(manifest, manifest.select([TEST]), MODALITIES[modality])
    if method == OURS:
        desc = embed_all(network, X, y, poses).descriptors
    else:
        desc = stacked_hog_batch(X).astype(np.float32)
    return desc, y, poses


def evaluate(db, queries, classes, poses, ks, thresholds, held_out=-1, angle_bins=18, dist_bins=20):
    """Accuracy rows, per-class rows, ratios and per-class histograms."""
    acc, perclass = [], []
    errors_by_k = {}
    for k in ks:
        errors = best_angle_errors(db, queries, classes, poses, min(k, len(db)))
        errors_by_k[k] = errors
        for t, a in zip(thresholds, accuracy_from_errors(errors, thresholds)):
            acc.append((t, k, a))
        for c in sorted(set(int(v) for v in classes)):
            sel = classes == c
            for t, a in zip(thresholds, accuracy_from_errors(errors[sel], thresholds)):
                perclass.append((c, int(c == held_out), t, k, a))
    ratios = class_separation_ratios(db, queries, classes) if len(np.unique(db.classes)) > 1 else np.zeros(0)
    hists = {}
    scores = score_matrix(db, queries)
    dmax = float(scores.max()) if scores.size else 1.0
    for c in sorted(set(int(v) for v in classes)):
        hists[c] = angle_distance_histogram(db, queries, classes, poses, c, np.linspace(0, 180, angle_bins + 1),
                                            np.linspace(0, max(dmax, 1e-12), dist_bins + 1))
    return {"accuracy": acc, "perclass": perclass, "ratios": ratios, "hists": hists, "errors": errors_by_k}


def write_perclass(path, rows):
    lines = ["class\theld_out\tthreshold\tk\taccuracy"]
    lines += [f"{c}\t{h}\t{float(t):g}\t{k}\t{a:.6f}" for c, h, t, k, a in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_perclass(path):
    rows = []
    for line in Path(path).read_text().splitlines()[1:]:
        if line.strip():
            c, h, t, k, a = line.split("\t")
            rows.append((int(c), int(h), float(t), int(k), float(a)))
    return rows


def _update_index(metrics_dir, entries):
    path = Path(metrics_dir) / "index.tsv"
    current = {}
    if path.is_file():
        for line in path.read_text().splitlines()[1:]:
            if line.strip():
                mod, method, kind, name = line.split("\t")
                current[(mod, method, kind)] = name
    current.update(entries)
    lines = ["modality\tmethod\tkind\tfile"] + ["\t".join(key + (current[key],)) for key in sorted(current)]
    path.write_text("\n".join(lines) + "\n")


def read_index(metrics_dir):
    path = Path(metrics_dir) / "index.tsv"
    out = {}
    if path.is_file():
        for line in path.read_text().splitlines()[1:]:
            if line.strip():
                mod, method, kind, name = line.split("\t")
                out[(mod, method, kind)] = name
    return out


def write_metrics(metrics_dir, modality, method, digest, result, ratio_bins=40):
    """Write every metric file for one (modality, method) and register it in the index."""
    metrics_dir = Path(metrics_dir)
    metrics_dir.mkdir(parents=True, exist_ok=True)
    tag = f"{modality}_{method}_{digest}"
    files = {"accuracy": f"accuracy_{tag}.tsv", "perclass": f"perclass_{tag}.tsv",
             "ratios": f"ratios_{tag}.tsv", "ratiohist": f"ratiohist_{tag}.tsv"}
    write_accuracy(metrics_dir / files["accuracy"], result["accuracy"])
    write_perclass(metrics_dir / files["perclass"], result["perclass"])
    write_ratios(metrics_dir / files["ratios"], result["ratios"])
    counts, edges = ratio_histogram(result["ratios"], ratio_bins)
    write_histogram(metrics_dir / files["ratiohist"], counts[None, :], [0.0, 1.0], edges, "row", "ratio")
    written = [metrics_dir / name for name in files.values()]
    for c, (counts, a_edges, d_edges) in result["hists"].items():
        written.append(metrics_dir / f"hist_{modality}_{method}_c{c}_{digest}.tsv")
        write_histogram(written[-1], counts, a_edges, d_edges)
    _update_index(metrics_dir, {(modality, method, kind): name for kind, name in files.items()})
    return written


def eval_ours(settings, manifest, modality, model_dir, db_dir, metrics_dir):
    ck_path = Path(model_dir) / f"checkpoint_{modality}.pdsc"
    if not ck_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ck_path}")
    network = checkpoint.load(ck_path)
    sha = hashlib.sha256(ck_path.read_bytes()).hexdigest()
    digest = sha[:12]
    db = template_db(manifest, modality, OURS, network, sha)
    Path(db_dir).mkdir(parents=True, exist_ok=True)
    db.save(Path(db_dir) / f"{modality}_{OURS}_{digest}.tsv")
    q, y, poses = query_descriptors(manifest, modality, OURS, network)
    result = evaluate(db, q, y, poses, settings.eval.ks, settings.eval.thresholds, settings.eval.held_out,
                      settings.eval.angle_bins, settings.eval.dist_bins)
    return write_metrics(metrics_dir, modality, OURS, digest, result, settings.eval.ratio_bins), result


def embed_ours(manifest, modality, model_dir, db_dir):
    ck_path = Path(model_dir) / f"checkpoint_{modality}.pdsc"
    if not ck_path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ck_path}")
    sha = hashlib.sha256(ck_path.read_bytes()).hexdigest()
    db = template_db(manifest, modality, OURS, checkpoint.load(ck_path), sha)
    Path(db_dir).mkdir(parents=True, exist_ok=True)
    path = Path(db_dir) / f"{modality}_{OURS}_{sha[:12]}.tsv"
    db.save(path)
    return path


def eval_hog(settings, manifest, modality, db_dir, metrics_dir):
    digest = hog_digest(manifest)
    db = template_db(manifest, modality, HOG, network_digest=f"hog-{digest}")
    Path(db_dir).mkdir(parents=True, exist_ok=True)
    db.save(Path(db_dir) / f"{modality}_{HOG}_{digest}.tsv")
    q, y, poses = query_descriptors(manifest, modality, HOG)
    result = evaluate(db, q, y, poses, settings.eval.ks, settings.eval.thresholds, settings.eval.held_out,
                      settings.eval.angle_bins, settings.eval.dist_bins)
    return write_metrics(metrics_dir, modality, HOG, digest, result, settings.eval.ratio_bins), result


def _lookup(rows, k, t):
    for rt, rk, a in rows:
        if rk == k and abs(rt - t) < 1e-9:
            return a
    return None


def report(metrics_dir):
    """Summary tables (one per modality) and the list of absent metric files."""
    metrics_dir = Path(metrics_dir)
    index = read_index(metrics_dir)
    lines, absent = [], []
    tables = {}
    for mod in REPORT_MODALITIES:
        table = {}
        for method, label in ((OURS, "ours"), (HOG, "HOG")):
            name = index.get((mod, method, "accuracy"))
            rows = None
            if name and (metrics_dir / name).is_file():
                rows = read_accuracy(metrics_dir / name)
            else:
                absent.append(f"{mod}/{method}: {name or 'accuracy file'} absent")
            for k in REPORT_KS:
                table[f"{label} k={k}"] = [None if rows is None else _lookup(rows, k, t) for t in REPORT_THRESHOLDS]
        tables[mod] = table
        lines.append(f"modality: {mod}")
        lines.append("method      " + "".join(f"{t:>9g}deg" for t in REPORT_THRESHOLDS))
        for row, vals in table.items():
            cells = "".join(f"{'absent':>12}" if v is None else f"{100 * v:>11.1f}%" for v in vals)
            lines.append(f"{row:<12}{cells}")
        ours1, hog1 = table["ours k=1"][-1], table["HOG k=1"][-1]
        if ours1 is not None and hog1 is not None:
            verdict = "ours ahead" if ours1 > hog1 else ("tie" if ours1 == hog1 else "HOG ahead")
            lines.append(f"k=1 recognition: ours {100 * ours1:.1f}% vs HOG {100 * hog1:.1f}% ({verdict})")
        lines.append("")
    held = []
    for mod in REPORT_MODALITIES:
        name = index.get((mod, OURS, "perclass"))
        if name and (metrics_dir / name).is_file():
            rows = read_perclass(metrics_dir / name)
            for c, h, t, k, a in rows:
                if h and k == 1 and abs(t - 180.0) < 1e-9:
                    held.append(f"{mod}: held-out class {c} k=1 recognition {100 * a:.1f}%")
    if held:
        lines += ["held-out objects:"] + held + [""]
    if absent:
        lines += ["absent metric files:"] + [f"  {a}" for a in absent]
    return "\n".join(lines).rstrip() + "\n", tables


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions():
    import sklearn
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scikit-learn": sklearn.__version__, "viewdesc": __version__}


def write_provenance(out, command, settings, seed, inputs=(), outputs=()):
    """Record what a command read and wrote; paths are stored relative to ``out``."""
    out = Path(out)
    prov_dir = layout(out)["provenance"]
    prov_dir.mkdir(parents=True, exist_ok=True)

    def rel(p):
        p = Path(p)
        try:
            return str(p.resolve().relative_to(out.resolve()))
        except ValueError:
            return str(p)

    record = {
        "command": command,
        "config_digest": settings.digest(),
        "seed": None if seed is None else int(seed),
        "versions": versions(),
        "inputs": {rel(p): file_sha256(p) for p in inputs if Path(p).is_file()},
        "outputs": {rel(p): file_sha256(p) for p in outputs if Path(p).is_file()},
        "settings": dict((k, v if not isinstance(v, tuple) else list(v)) for k, v in settings.items()),
    }
    path = prov_dir / f"{command}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def leave_one_out(settings, manifest_path, held_out, seed, out, modality="depth", on_epoch=None):
    """Train without ``held_out`` and evaluate every class; returns the evaluation result.

    The held-out class's templates stay in the database and its test views
    are queried like any other.
    """
    manifest = read_manifest(manifest_path)
    if len({r.class_id for r in manifest.records}) < 2:
        raise ValueError("leave-one-out needs at least two classes")
    s = replace(settings, eval=replace(settings.eval, held_out=int(held_out)))
    paths = layout(out)
    network, history, ck, sha = train_modality(s, manifest, modality, seed, paths["model"], on_epoch)
    files, result = eval_ours(s, manifest, modality, paths["model"], paths["db"], paths["metrics"])
    result["history"] = history
    result["checkpoint"] = ck
    return result
