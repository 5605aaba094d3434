"""Command line entry point: ``dynprune <subcommand> ...``.

Exit status: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, keep_from_discard, parse_config
from .curriculum import ProbeSet, run_ssl_ord
from .embeddings import EmbeddingMatrix, EmbFormatError, atomic_write, load_embeddings, save_embeddings
from .evaluation import CLASSIFICATION, REGRESSION, balance_metrics, probe
from .pruner import MODES, PruneConfig, prune
from .selection import Selection, SelectionFormatError
from .synthgen import generate
from .toyssl import CollapsedEmbeddingError, EncoderParams, ToyTrainer, embed

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def provenance_lines(config_hash: str, seed: int) -> list[str]:
    return [f"config_hash={config_hash}", f"seed={seed}", f"version={__version__}"]


def write_meta(path: Path, config_hash: str, seed: int, extra=()) -> None:
    """Provenance sidecar for binary artifacts, which have no header room."""
    lines = [f"# {line}" for line in provenance_lines(config_hash, seed)]
    lines += [f"# {line}" for line in extra]
    atomic_write(Path(str(path) + ".meta"), "\n".join(lines) + "\n")


def _tag_selection(sel: Selection, config_hash: str) -> Selection:
    sel.extra.update({"config_hash": config_hash, "version": __version__})
    return sel


def _add_keep_discard(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--keep", type=float, help="retained fraction in (0, 1]")
    g.add_argument("--discard", type=float, help="discarded fraction in [0, 1)")


def _resolve_keep(args):
    if args.discard is not None:
        return keep_from_discard(args.discard)
    return args.keep


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynprune", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a heavy-tailed synthetic dataset (EMB1)")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    t = sub.add_parser("train", help="run warm-up + scheduled pruning training")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--eta", type=float)
    t.add_argument("--threads", type=int)
    _add_keep_discard(t)

    r = sub.add_parser("prune", help="prune an embedding file to a balanced selection")
    r.add_argument("--features", required=True, help="EMB1 file of embeddings")
    r.add_argument("--config", help="config file supplying [prune] settings")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--eta", type=float)
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--epoch", type=int, default=0)
    _add_keep_discard(r)

    q = sub.add_parser("probe", help="k-NN probe of (optionally encoded) labelled embeddings")
    q.add_argument("--train", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--encoder", help="EMB1 encoder weights to apply first")
    q.add_argument("--k", type=int, default=20)
    q.add_argument("--task", choices=(CLASSIFICATION, REGRESSION), default=CLASSIFICATION)
    q.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    q.add_argument("--out", help="output directory for probe.csv")

    st = sub.add_parser("stats", help="balance and redundancy of a dataset or selection")
    st.add_argument("--data", required=True)
    st.add_argument("--selection")
    st.add_argument("--eps", type=float, default=0.0)
    st.add_argument("--out", help="output directory for stats.csv")

    sub.add_parser("version", help="print the version")
    return p


def _load_config(args, extra_overrides=None) -> RunConfig:
    overrides = dict(extra_overrides or {})
    if getattr(args, "seed", None) is not None:
        overrides[("run", "seed")] = args.seed
    if getattr(args, "out", None) is not None:
        overrides[("run", "out")] = args.out
    if getattr(args, "threads", None) is not None:
        overrides[("run", "threads")] = args.threads
    text = Path(args.config).read_text(encoding="utf-8")
    return parse_config(text, overrides)


def _datasets(cfg: RunConfig):
    """Training data and, when available, a labelled probe set."""
    if cfg.data:
        data = load_embeddings(cfg.data)
        synthetic = False
    else:
        data = generate(cfg.synth)
        synthetic = True
    pset = cfg.probe
    if pset.data:
        pdata = load_embeddings(pset.data)
    elif synthetic:
        m = cfg.synth.concepts
        pdata = generate(replace(cfg.synth, n=pset.n), np.full(m, 1.0 / m), stream="probe")
    else:
        return data, None
    if pdata.labels is None:
        raise ValueError("probe data has no labels")
    n_train = int(round(pset.train_fraction * pdata.n))
    probe_set = ProbeSet(
        pdata.take(np.arange(n_train)),
        pdata.take(np.arange(n_train, pdata.n)),
        k=pset.k,
        metric=pset.metric,
    )
    return data, probe_set


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    data, probe_set = _datasets(cfg)
    save_embeddings(data, out / "data.emb")
    write_meta(out / "data.emb", cfg.text_hash, cfg.seed)
    if probe_set is not None:
        both = EmbeddingMatrix(
            np.vstack([probe_set.train.values, probe_set.test.values]),
            np.concatenate([probe_set.train.labels, probe_set.test.labels]),
        )
        save_embeddings(both, out / "probe.emb")
        write_meta(out / "probe.emb", cfg.text_hash, cfg.seed)
    print(f"wrote {data.n} x {data.d} rows to {out / 'data.emb'}")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {}
    keep = _resolve_keep(args)
    if keep is not None:
        overrides[("prune", "rho")] = keep
    if args.eta is not None:
        overrides[("prune", "eta")] = args.eta
    cfg = _load_config(args, overrides)
    out = Path(cfg.out)
    data, probe_set = _datasets(cfg)
    trainer = ToyTrainer(cfg.trainer)

    def save_selection(sel: Selection):
        _tag_selection(sel, cfg.text_hash).save(out / f"selection_e{sel.epoch:04d}.txt")

    history = run_ssl_ord(cfg.curriculum, trainer, data, probe_set, on_selection=save_selection)
    history.write_csv(out / "history.csv", provenance_lines(cfg.text_hash, cfg.seed))
    save_embeddings(EmbeddingMatrix(history.params.W), out / "encoder.emb")
    write_meta(out / "encoder.emb", cfg.text_hash, cfg.seed)
    final = history.records[-1]
    print(
        f"trained {len(history.records)} epochs, {len(history.selections)} prune events; "
        f"final train loss {final.train_loss:.4f}"
        + ("" if final.probe_metric is None else f", k-NN accuracy {final.probe_metric:.4f}")
    )
    return EXIT_OK


def cmd_prune(args) -> int:
    features = load_embeddings(args.features)
    seed = args.seed
    if args.config:
        overrides = {("run", "out"): args.out}
        if seed is not None:
            overrides[("run", "seed")] = seed
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"), overrides)
        pcfg, seed, chash = cfg.prune, cfg.seed, cfg.text_hash
    else:
        if seed is None:
            raise UsageError("prune needs --seed or --config")
        n = features.n
        pcfg = PruneConfig(n_c=min(n, 1000), ks=(min(n, 64), min(n, 10)), seed=seed)
        chash = "none"
    changes = {"seed": seed, "threads": args.threads}
    keep = _resolve_keep(args)
    if keep is not None:
        changes["rho"] = keep
    if args.eta is not None:
        changes["eta"] = args.eta
    if args.mode is not None:
        changes["mode"] = args.mode
    pcfg = replace(pcfg, **changes)
    sel = prune(features, pcfg, epoch=args.epoch)
    path = Path(args.out) / "selection.txt"
    _tag_selection(sel, chash).save(path)
    print(f"kept {len(sel)} of {features.n} rows -> {path}")
    return EXIT_OK


def _apply_encoder(matrix: EmbeddingMatrix, encoder_path):
    if encoder_path is None:
        return matrix
    W = load_embeddings(encoder_path).values
    return embed(EncoderParams(W), matrix)


def cmd_probe(args) -> int:
    train = _apply_encoder(load_embeddings(args.train), args.encoder)
    test = _apply_encoder(load_embeddings(args.test), args.encoder)
    if train.labels is None or test.labels is None:
        raise ValueError("probe inputs must carry labels")
    report = probe(train, train.labels, test, test.labels, args.k, args.task, args.metric)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "k", report.metric_name, "n_train", "n_test"])
    w.writerow([report.task, report.k, repr(report.metric), report.n_train, report.n_test])
    sys.stdout.write(buf.getvalue())
    if args.out:
        atomic_write(Path(args.out) / "probe.csv", buf.getvalue())
    return EXIT_OK


def cmd_stats(args) -> int:
    data = load_embeddings(args.data)
    if data.labels is None:
        raise ValueError("stats needs labelled data")
    idx = np.arange(data.n)
    if args.selection:
        sel = Selection.load(args.selection)
        sel.validate(data.n)
        idx = sel.indices
    rep = balance_metrics(data.labels[idx], data.labels, data.values[idx], args.eps)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size", "entropy", "cv", "redundancy", "counts"])
    counts = ";".join(f"{k}:{v}" for k, v in rep.counts.items())
    w.writerow([idx.size, repr(rep.entropy), repr(rep.cv), repr(rep.redundancy), counts])
    sys.stdout.write(buf.getvalue())
    if args.out:
        atomic_write(Path(args.out) / "stats.csv", buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "prune": cmd_prune,
    "probe": cmd_probe,
    "stats": cmd_stats,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "dynprune: error: missing subcommand")
        if args.command == "version":
            print(__version__)
            return EXIT_OK
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"dynprune: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CollapsedEmbeddingError, FloatingPointError, AssertionError) as exc:
        print(f"dynprune: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EmbFormatError, SelectionFormatError, OSError, ValueError, IndexError) as exc:
        print(f"dynprune: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
