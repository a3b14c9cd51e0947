"""Batch command-line front end.

Subcommands: synth, split, train, eval, curves, ushape, wug, decode.
Options layer as config file < explicit flags; the fully resolved
configuration (seed included) is written as ``config.json`` next to
every artifact, and nothing is written outside the chosen output
directory.  Exit codes: 0 success, 1 internal error, 2 usage or I/O
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset as ds
from . import experiments as xp
from .ed_training import EncoderDecoder
from .errors import MorpholabError
from .phonology import FeatureTable, PhonemeInventory, default_feature_table, default_inventory
from .rm_model import PatternAssociator
from .checkpoint import load_tensors, save_tensors


class UsageError(Exception):
    pass


def _load_phonology(config):
    if config.get("inventory"):
        inv = PhonemeInventory.load(config["inventory"])
    else:
        inv = default_inventory()
    if config.get("features"):
        table = FeatureTable.load(config["features"], inv)
    else:
        table = default_feature_table(inv)
    return inv, table


def _resolve(args, defaults):
    """Layer option sources: defaults, then config file, then flags."""
    config = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        unknown = set(loaded) - set(defaults) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in defaults:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            config[key] = value
    return config


def _outdir(config) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, config, command: str) -> None:
    payload = {"command": command, **config}
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _require(config, *keys):
    for key in keys:
        if config.get(key) in (None, ""):
            raise UsageError(f"missing required option --{key}")


def _load_pairs(path, inventory):
    if not Path(path).exists():
        raise UsageError(f"dataset not found: {path}")
    return ds.load_tsv(path, inventory)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(config) -> int:
    _require(config, "out")
    out = _outdir(config)
    pairs = ds.synth_corpus(
        n_types=int(config["types"]),
        n_irregular=int(config["irregular"]),
        seed=int(config["seed"]),
    )
    ds.save_tsv(out / "dataset.tsv", pairs)
    _write_config(out, config, "synth")
    n_irregular = len({p.lemma.indices for p in pairs if not p.regular})
    print(f"wrote {len(pairs)} pairs ({n_irregular} irregular types) to {out/'dataset.tsv'}")
    return 0


def cmd_split(config) -> int:
    _require(config, "out", "data")
    inv, _ = _load_phonology(config)
    pairs = _load_pairs(config["data"], inv)
    corpus = ds.split(pairs, seed=int(config["seed"]))
    out = _outdir(config)
    for name, side in (("train", corpus.train), ("dev", corpus.dev), ("test", corpus.test)):
        ds.save_tsv(out / f"{name}.tsv", side)
    _write_config(out, config, "split")
    print(
        f"split {len(pairs)} pairs into "
        f"{len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test)} at {out}"
    )
    return 0


def _snapshot_items(pairs, multitask):
    """Training irregular past-tense items tracked across epochs."""
    items = [p for p in pairs if not p.regular and p.tag == "PST"]
    inputs = [
        ds.augment_multitask(p)[0] if multitask else p.lemma.symbols for p in items
    ]
    return items, inputs


def cmd_train(config) -> int:
    _require(config, "out", "train")
    inv, table = _load_phonology(config)
    pairs = _load_pairs(config["train"], inv)
    if not pairs:
        raise UsageError(f"no training pairs in {config['train']}")
    out = _outdir(config)
    seed = int(config["seed"])
    multitask = bool(config["multitask"])
    if not multitask:
        pairs = [p for p in pairs if p.tag == "PST"]
    if config["model"] == "ed":
        X, y, flags = ds.to_examples(pairs, multitask=multitask)
        est = EncoderDecoder(
            inventory=inv,
            emb_dim=int(config["emb"]),
            hidden_dim=int(config["hidden"]),
            num_layers=int(config["layers"]),
            dropout=float(config["dropout"]),
            epochs=int(config["epochs"]),
            batch_size=int(config["batch"]),
            lr=float(config["lr"]),
            beam_width=int(config["beam"]),
            dtype=config["dtype"],
            seed=seed,
            eval_every=int(config["eval-every"]),
            eval_sample=(int(config["eval-sample"]) if config["eval-sample"] else None),
        )
        snap_every = int(config["snapshot-every"])
        snap_pairs, snap_inputs = (
            _snapshot_items(pairs, multitask) if snap_every else ([], [])
        )
        est.fit(
            X,
            y,
            regular=flags,
            snapshot_every=snap_every,
            snapshot_inputs=snap_inputs or None,
        )
        est.save(out / "model.ckpt")
        condition = "multi_task" if multitask else "single_task"
        xp.write_curves_csv(out / "curves.csv", xp.learning_curves({condition: est.history_}))
        if snap_every and est.snapshots_:
            with open(out / "snapshots.tsv", "w", encoding="utf-8") as fh:
                for snap in est.snapshots_:
                    for p, decoded in zip(snap_pairs, snap["outputs"]):
                        fh.write(
                            f"{p.lemma}\t{p.form}\t{snap['epoch']}\t{''.join(decoded)}\n"
                        )
        final = est.history_[-1]
    else:
        stems = [p.lemma for p in pairs]
        forms = [p.form for p in pairs]
        flags = [p.regular for p in pairs]
        est = PatternAssociator(
            inventory=inv,
            feature_table=table,
            lr=float(config["lr"]),
            decay=float(config["decay"]),
            epochs=int(config["epochs"]),
            seed=seed,
        )
        est.fit(stems, forms, regular=flags)
        save_tensors(
            out / "model.ckpt",
            {"W": est.W_, "b": est.b_},
            meta={
                "kind": "rm-model",
                "lr": est.lr,
                "decay": est.decay,
                "irregular": [[str(s), str(f)] for s, f in est.irregular_pairs_],
            },
        )
        with open(out / "curves.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,loss,lr\n")
            for entry in est.history_:
                fh.write(f"{entry['epoch']},{entry['loss']},{entry['lr']}\n")
        final = est.history_[-1]
    _write_config(out, config, "train")
    print(f"trained {config['model']} model; final epoch: {final}")
    return 0


def _load_model(config, inv, table):
    path = config["checkpoint"]
    if not Path(path).exists():
        raise UsageError(f"checkpoint not found: {path}")
    arrays, meta = load_tensors(path)
    if meta.get("kind") == "rm-model":
        est = PatternAssociator(inventory=inv, feature_table=table)
        est.initialize(arrays["W"].shape[0])
        est.W_, est.b_ = arrays["W"], arrays["b"]
        est.irregular_pairs_ = [
            (ds.tokenize(s, inv), ds.tokenize(f, inv)) for s, f in meta["irregular"]
        ]
        return est
    est = EncoderDecoder.load(path)
    est.inventory = inv
    if config.get("beam"):
        est.beam_width = int(config["beam"])
    return est


def cmd_eval(config) -> int:
    _require(config, "out", "checkpoint")
    inv, table = _load_phonology(config)
    model = _load_model(config, inv, table)
    multitask = bool(config["multitask"])
    out = _outdir(config)
    splits = {}
    for name in ("train", "dev", "test"):
        if config.get(name):
            splits[name] = _load_pairs(config[name], inv)
            if not multitask:
                splits[name] = [p for p in splits[name] if p.tag == "PST"]
    if not splits:
        raise UsageError("eval needs at least one of --train/--dev/--test")
    lexicon = (
        xp.compile_irregular_lexicon(splits["train"], table) if "train" in splits else None
    )
    reports = {
        name: xp.accuracy(model, pairs, multitask=multitask, irregular_lexicon=lexicon, table=table)
        for name, pairs in splits.items()
    }
    lines = _format_eval_report(reports)
    report_path = out / "report.txt"
    report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    if config["errors"]:
        with open(out / "errors.tsv", "w", encoding="utf-8") as fh:
            fh.write("split\tstem\tgold\tpredicted\tregular\tlabel\n")
            for name, report in reports.items():
                for e in report.errors:
                    fh.write(
                        f"{name}\t{e.stem}\t{e.gold}\t{e.predicted}\t"
                        f"{'regular' if e.regular else 'irregular'}\t{e.label}\n"
                    )
    _write_config(out, config, "eval")
    return 0


def _format_eval_report(reports) -> list[str]:
    names = list(reports)
    lines = []
    header = f"{'':<12}" + "".join(f"{n:>10}" for n in names)
    lines.append("accuracy (%)")
    lines.append(header)
    for stratum, attr in (
        ("all", "acc_overall"),
        ("regular", "acc_regular"),
        ("irregular", "acc_irregular"),
    ):
        cells = []
        for n in names:
            value = getattr(reports[n], attr)
            cells.append(f"{100 * value:>10.1f}" if value is not None else f"{'n/a':>10}")
        lines.append(f"{stratum:<12}" + "".join(cells))
    lines.append("")
    lines.append("comparison vs stored baseline accuracies (chi-squared, 1 df)")
    ref = xp.REFERENCE_ACCURACY["mgl"]
    for stratum, attr, counts in (
        ("all", "acc_overall", lambda r: r.total),
        ("regular", "acc_regular", lambda r: r.n_regular),
        ("irregular", "acc_irregular", lambda r: r.n_irregular),
    ):
        for n in names:
            report = reports[n]
            value = getattr(report, attr)
            total = counts(report)
            if value is None or total == 0 or n not in ref[stratum]:
                continue
            ours = int(round(value * total))
            theirs = int(round(ref[stratum][n] / 100.0 * total))
            try:
                stat, p = xp.chi_squared_2x2(ours, total, theirs, total)
                lines.append(
                    f"{stratum:<12}{n:<8} chi2={stat:8.3f}  p={p:.4g}"
                )
            except MorpholabError:
                lines.append(f"{stratum:<12}{n:<8} chi2=     n/a  (degenerate table)")
    return lines


def cmd_curves(config) -> int:
    _require(config, "out")
    runs = config["run"] or []
    if not runs:
        raise UsageError("curves needs at least one --run label=path")
    merged = {}
    for spec_item in runs:
        if "=" not in spec_item:
            raise UsageError(f"--run must look like label=path, got {spec_item!r}")
        label, path = spec_item.split("=", 1)
        if not Path(path).exists():
            raise UsageError(f"curves file not found: {path}")
        history = []
        with open(path, encoding="utf-8") as fh:
            import csv as _csv

            for row in _csv.DictReader(fh):
                entry = {"epoch": int(row["epoch"])}
                for key in ("nll", "train_acc", "train_acc_regular", "train_acc_irregular"):
                    if row.get(key):
                        entry[key] = float(row[key])
                history.append(entry)
        merged[label] = history
    out = _outdir(config)
    xp.write_curves_csv(out / "curves.csv", xp.learning_curves(merged))
    threshold = float(config["threshold"])
    lines = []
    for label, history in merged.items():
        epoch = xp.epochs_to_accuracy(history, threshold)
        lines.append(
            f"{label}: reaches {threshold:.0%} train accuracy at epoch "
            f"{epoch if epoch is not None else 'never'}"
        )
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    _write_config(out, config, "curves")
    return 0


def cmd_ushape(config) -> int:
    _require(config, "out", "snapshots")
    path = Path(config["snapshots"])
    if not path.exists():
        raise UsageError(f"snapshot file not found: {path}")
    traces: dict[tuple[str, str], list[tuple[int, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            lemma, gold, epoch, output = line.split("\t")
            traces.setdefault((lemma, gold), []).append((int(epoch), output))
    out = _outdir(config)
    n_flagged = 0
    with open(out / "ushape.tsv", "w", encoding="utf-8") as fh:
        fh.write("lemma\tgold\tchange_points\toscillating\ttrace\n")
        for (lemma, gold), history in sorted(traces.items()):
            history.sort()
            epochs = [e for e, _ in history]
            correct = [o == gold for _, o in history]
            record = xp.detect_micro_ushape(correct, epochs)
            n_flagged += record.oscillating
            shown = ",".join(
                f"{e}:{o}" for (e, o), prev in zip(history, [None] + history[:-1])
                if prev is None or o != prev[1]
            )
            fh.write(
                f"{lemma}\t{gold}\t{len(record.change_points)}\t"
                f"{'yes' if record.oscillating else 'no'}\t{shown}\n"
            )
    print(f"{n_flagged}/{len(traces)} tracked verbs oscillate; table at {out/'ushape.tsv'}")
    _write_config(out, config, "ushape")
    return 0


def cmd_wug(config) -> int:
    _require(config, "out", "checkpoint", "items")
    inv, table = _load_phonology(config)
    model = _load_model(config, inv, table)
    if not Path(config["items"]).exists():
        raise UsageError(f"wug items not found: {config['items']}")
    items = xp.load_wug_tsv(config["items"], inv)
    report = xp.wug_eval(
        model, items, tag=config.get("tag") or None, normalize_pairs=bool(config["normalize"])
    )
    out = _outdir(config)
    with open(out / "wug.tsv", "w", encoding="utf-8") as fh:
        fields = list(report.rows[0].keys())
        fh.write("\t".join(fields) + "\n")
        for row in report.rows:
            fh.write("\t".join(str(row[f]) for f in fields) + "\n")
    ref = xp.WUG_REFERENCE
    lines = [
        f"rho_regular={report.rho_regular}"
        + (" (degenerate)" if report.degenerate_regular else ""),
        f"rho_irregular={report.rho_irregular}"
        + (" (degenerate)" if report.degenerate_irregular else ""),
        f"reference: network {ref['network']['regular']}/{ref['network']['irregular']}, "
        f"mgl {ref['mgl']['regular']}/{ref['mgl']['irregular']}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    _write_config(out, config, "wug")
    return 0


def cmd_decode(config) -> int:
    _require(config, "out", "checkpoint")
    inv, table = _load_phonology(config)
    model = _load_model(config, inv, table)
    inputs: list[tuple[str, tuple[str, ...]]] = []
    tag = config.get("tag") or None
    for raw in config["input"] or []:
        symbols = ds.tokenize(raw, inv).symbols
        if tag:
            symbols = symbols + (ds.tag_token(tag),)
        inputs.append((raw, symbols))
    if config.get("data"):
        for p in _load_pairs(config["data"], inv):
            symbols = (
                ds.augment_multitask(p)[0] if bool(config["multitask"]) else p.lemma.symbols
            )
            inputs.append((str(p.lemma), symbols))
    if not inputs:
        raise UsageError("decode needs --input or --data")
    out = _outdir(config)
    with open(out / "decoded.tsv", "w", encoding="utf-8") as fh:
        fh.write("input\toutput\tlog_prob\ttruncated\n")
        for raw, symbols in inputs:
            if isinstance(model, PatternAssociator):
                result = model.predict([raw])[0]
                fh.write(f"{raw}\t{result}\t\t\n")
            else:
                best = model.decode([symbols])[0]
                fh.write(
                    f"{raw}\t{''.join(best.symbols)}\t{best.log_prob:.6f}\t"
                    f"{'yes' if best.truncated else 'no'}\n"
                )
    print(f"decoded {len(inputs)} inputs to {out/'decoded.tsv'}")
    _write_config(out, config, "decode")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing

_DEFAULTS = {
    "synth": {"seed": 0, "out": None, "types": 4039, "irregular": 168},
    "split": {"seed": 0, "out": None, "data": None, "inventory": None, "features": None},
    "train": {
        "seed": 0,
        "out": None,
        "train": None,
        "model": "ed",
        "multitask": False,
        "inventory": None,
        "features": None,
        "emb": 300,
        "hidden": 100,
        "layers": 2,
        "dropout": 0.3,
        "epochs": 100,
        "batch": 20,
        "lr": 1.0,
        "decay": 0.0,
        "beam": 12,
        "dtype": "float64",
        "eval-every": 1,
        "eval-sample": 0,
        "snapshot-every": 0,
    },
    "eval": {
        "seed": 0,
        "out": None,
        "checkpoint": None,
        "train": None,
        "dev": None,
        "test": None,
        "multitask": False,
        "errors": False,
        "beam": 0,
        "inventory": None,
        "features": None,
    },
    "curves": {"seed": 0, "out": None, "run": None, "threshold": 0.9},
    "ushape": {"seed": 0, "out": None, "snapshots": None},
    "wug": {
        "seed": 0,
        "out": None,
        "checkpoint": None,
        "items": None,
        "tag": None,
        "normalize": False,
        "inventory": None,
        "features": None,
        "beam": 0,
    },
    "decode": {
        "seed": 0,
        "out": None,
        "checkpoint": None,
        "input": None,
        "data": None,
        "tag": None,
        "multitask": False,
        "beam": 0,
        "inventory": None,
        "features": None,
    },
}

_COMMANDS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "curves": cmd_curves,
    "ushape": cmd_ushape,
    "wug": cmd_wug,
    "decode": cmd_decode,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morpholab",
        description="Train and evaluate morphological transduction models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory for all artifacts")
        p.add_argument("--config", help="JSON config file layered under flags")

    p = sub.add_parser("synth", help="generate a synthetic inflection corpus")
    common(p)
    p.add_argument("--types", type=int, help="number of verb types")
    p.add_argument("--irregular", type=int, help="number of irregular types")

    p = sub.add_parser("split", help="split a corpus by lemma 80-10-10")
    common(p)
    p.add_argument("--data", help="input dataset TSV")
    p.add_argument("--inventory")
    p.add_argument("--features")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--train", help="training dataset TSV")
    p.add_argument("--model", choices=["ed", "rm"])
    p.add_argument("--multitask", action="store_const", const=True)
    p.add_argument("--inventory")
    p.add_argument("--features")
    p.add_argument("--emb", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--eval-sample", type=int, dest="eval_sample")
    p.add_argument("--snapshot-every", type=int, dest="snapshot_every")

    p = sub.add_parser("eval", help="evaluate a checkpoint on datasets")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--multitask", action="store_const", const=True)
    p.add_argument("--errors", action="store_const", const=True, help="write error taxonomy TSV")
    p.add_argument("--beam", type=int)
    p.add_argument("--inventory")
    p.add_argument("--features")

    p = sub.add_parser("curves", help="merge training curves and summarise")
    common(p)
    p.add_argument("--run", action="append", help="label=path of a curves.csv")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("ushape", help="oscillation analysis of per-epoch snapshots")
    common(p)
    p.add_argument("--snapshots", help="snapshots.tsv from train --snapshot-every")

    p = sub.add_parser("wug", help="nonce-stem correlation against human rates")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--items", help="wug items TSV")
    p.add_argument("--tag")
    p.add_argument("--normalize", action="store_const", const=True)
    p.add_argument("--inventory")
    p.add_argument("--features")
    p.add_argument("--beam", type=int)

    p = sub.add_parser("decode", help="decode stems with a trained model")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--input", action="append", help="IPA stem (repeatable)")
    p.add_argument("--data", help="dataset TSV of stems to decode")
    p.add_argument("--tag")
    p.add_argument("--multitask", action="store_const", const=True)
    p.add_argument("--beam", type=int)
    p.add_argument("--inventory")
    p.add_argument("--features")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve(args, _DEFAULTS[args.command])
        config["seed"] = int(config["seed"])
        if not config.get("out"):
            raise UsageError("missing required option --out")
        return _COMMANDS[args.command](config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, FileNotFoundError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except MorpholabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
