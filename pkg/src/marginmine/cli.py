"""Command-line entry point.

Subcommands: prep, index, mine, sweep, eval. Exit status is 0 on success,
2 for bad input or configuration, 1 for anything unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .ann import build_index, load_index, write_index
from .embeddings import load_embeddings, load_sentences, normalize_l2, write_sentences
from .errors import ConsistencyError, MiningError
from .evaluation import parse_range, precision_recall, read_gold, threshold_sweep
from .manifest import RunManifest
from .mining import (
    DEFAULT_K,
    DEFAULT_RETAIN_FLOOR,
    DEFAULT_THRESHOLD,
    MinedPair,
    MiningConfig,
    attach_texts,
    read_candidates,
    read_pair_ids,
    score_candidates,
    select,
    write_candidates,
    write_pair_ids,
    write_rows,
)
from .parallel import resolve_threads
from .prep import check_language, ingest_jsonl, prepare, read_labels, train_lid

log = logging.getLogger("marginmine")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def _drop_path(out: Path) -> Path:
    return out.with_suffix(".drop.tsv") if out.suffix else _sibling(out, ".drop.tsv")


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(2, "input file not found", str(path))
    return path


def _read_lid_training(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            text, sep, lang = line.rpartition("\t")
            if not sep or not lang:
                raise ConsistencyError(f"{path}:{lineno}: expected sentence<TAB>lang")
            yield text, lang


def cmd_prep(args) -> RunManifest:
    check_language(args.lang)
    src = _require(args.input)
    out = Path(args.out)
    manifest = RunManifest("prep", dict(vars(args)))
    manifest.add_inputs([src, args.lid_train, args.lid_labels])

    docs = ingest_jsonl(src, text_field=args.text_field, lang=args.lang, strict=args.strict)
    model = labels = None
    if args.lid_train:
        model = train_lid(_read_lid_training(_require(args.lid_train)), alpha=args.lid_alpha)
    if args.lid_labels:
        labels = read_labels(_require(args.lid_labels))
    corpus = prepare(docs.documents, args.lang, model=model, labels=labels)

    write_sentences(corpus.sentences, out)
    drop = _drop_path(out)
    with open(drop, "w", encoding="utf-8", newline="\n") as fh:
        for d in corpus.dropped:
            fh.write(f"{d.sentence}\t{d.predicted}\t{d.confidence:.4f}\n")
    log.info("prep: %d documents, %d sentences, %d unique, %d kept",
             len(docs), corpus.segmented, corpus.deduplicated, len(corpus.sentences))
    manifest.config.update(skipped_missing=docs.missing_field, skipped_malformed=docs.malformed)
    manifest.add_outputs([out, drop])
    return manifest


def cmd_index(args) -> RunManifest:
    emb = _require(args.emb)
    manifest = RunManifest("index", dict(vars(args)), seed=args.seed)
    manifest.add_inputs([emb])
    data = normalize_l2(load_embeddings(emb))
    index = build_index(data, nlist=args.nlist, m=args.m, seed=args.seed,
                        max_iters=args.max_iters, threads=args.threads)
    write_index(index, args.out)
    manifest.config.update(nlist_used=index.nlist, m_used=index.m)
    manifest.add_outputs([args.out])
    return manifest


def _corpus_paths(prefix: str):
    base = prefix[:-4] if prefix.endswith(".emb") else prefix
    return _require(base + ".emb"), Path(base + ".txt")


def cmd_mine(args) -> RunManifest:
    src_emb, src_txt = _corpus_paths(args.src)
    tgt_emb, tgt_txt = _corpus_paths(args.tgt)
    _require(src_txt)
    _require(tgt_txt)
    out = Path(args.out)
    manifest = RunManifest("mine", dict(vars(args)), seed=args.seed)
    manifest.add_inputs([src_emb, src_txt, tgt_emb, tgt_txt, args.src_index, args.tgt_index])

    l1, l2 = normalize_l2(load_embeddings(src_emb)), normalize_l2(load_embeddings(tgt_emb))
    t1, t2 = load_sentences(src_txt), load_sentences(tgt_txt)
    t1.check_matches(l1)
    t2.check_matches(l2)
    config = MiningConfig(
        k=args.k, threshold=args.threshold,
        retain_floor=min(args.retain_floor, args.threshold),
        emit_secondary=args.emit_low, backend=args.backend,
        nlist=args.nlist, m=args.m, nprobe=args.nprobe, seed=args.seed, threads=args.threads,
    )
    l1_index = load_index(_require(args.src_index)) if args.src_index else None
    l2_index = load_index(_require(args.tgt_index)) if args.tgt_index else None
    for idx, mat, name in ((l1_index, l1, "source"), (l2_index, l2, "target")):
        if idx is not None and (idx.count != mat.count or idx.dim != mat.dim):
            raise ConsistencyError(f"{name} index does not match its embeddings")

    candidates = score_candidates(l1, l2, config, l1_index, l2_index)
    bitext = select(candidates, config.threshold, config.retain_floor if config.emit_secondary else None)

    write_rows(attach_texts(bitext, t1, t2), out)
    write_pair_ids(bitext.pairs, _sibling(out, ".ids"))
    outputs = [out, _sibling(out, ".ids")]
    if config.emit_secondary:
        write_rows(attach_texts(bitext, t1, t2, pairs=bitext.secondary), _sibling(out, ".low"))
        outputs.append(_sibling(out, ".low"))
    if args.candidates_out:
        write_candidates(candidates, args.candidates_out)
        outputs.append(args.candidates_out)
    log.info("mine: %d candidates, %d pairs >= %.4f", len(candidates), len(bitext), config.threshold)
    manifest.add_outputs(outputs)
    return manifest


def cmd_sweep(args) -> RunManifest:
    cand_path = _require(args.candidates)
    manifest = RunManifest("sweep", dict(vars(args)))
    manifest.add_inputs([cand_path, args.gold])
    thresholds = parse_range(args.thresholds)
    gold = read_gold(_require(args.gold)) if args.gold else None
    report = threshold_sweep(read_candidates(cand_path), gold, thresholds)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_tsv())
    manifest.add_outputs([args.out])
    return manifest


def _mined_ids(mined: Path, src_txt, tgt_txt):
    ids_path = _sibling(mined, ".ids")
    if ids_path.is_file():
        return read_pair_ids(ids_path)
    if not (src_txt and tgt_txt):
        raise ConsistencyError(f"{ids_path} not found; pass --src-txt and --tgt-txt to map texts to ids")
    lookup = []
    for path in (src_txt, tgt_txt):
        table, index = load_sentences(_require(path)), {}
        for i, text in enumerate(table.texts):
            if text in index:
                raise ConsistencyError(f"{path}: sentence {i} duplicates sentence {index[text]}; ids are ambiguous")
            index[text] = i
        lookup.append(index)
    pairs = []
    with open(mined, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ConsistencyError(f"{mined}:{lineno}: expected 3 tab-separated fields")
            try:
                pairs.append(MinedPair(float(parts[0]), lookup[0][parts[1]], lookup[1][parts[2]]))
            except (KeyError, ValueError):
                raise ConsistencyError(f"{mined}:{lineno}: sentence not found in sentence files") from None
    return pairs


def cmd_eval(args) -> RunManifest:
    mined = _require(args.mined)
    gold_path = _require(args.gold)
    manifest = RunManifest("eval", dict(vars(args)))
    manifest.add_inputs([mined, gold_path])
    gold = read_gold(gold_path)
    scores = precision_recall(_mined_ids(mined, args.src_txt, args.tgt_txt), gold)
    line = f"precision={scores.precision:.4f}\trecall={scores.recall:.4f}\tf1={scores.f1:.4f}"
    print(line)
    primary = Path(args.out) if args.out else _sibling(mined, ".eval")
    with open(primary, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(line + "\n")
    manifest.add_outputs([primary])
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marginmine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def threads(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $MARGIN_MINER_THREADS or 1)")

    p = sub.add_parser("prep", help="JSON lines -> clean, deduplicated, language-filtered sentences")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text-field", default="text")
    p.add_argument("--strict", action="store_true", help="fail on malformed JSON instead of skipping")
    lid = p.add_mutually_exclusive_group()
    lid.add_argument("--lid-train", help="TSV of sentence<TAB>lang to train the built-in LID")
    lid.add_argument("--lid-labels", help="one language code per deduplicated sentence")
    p.add_argument("--lid-alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("index", help="build an IVF-PQ index over an embedding file")
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nlist", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=25)
    threads(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("mine", help="mine a bitext between two embedded corpora")
    p.add_argument("--src", required=True, help="prefix of SRC.emb / SRC.txt")
    p.add_argument("--tgt", required=True, help="prefix of TGT.emb / TGT.txt")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--retain-floor", type=float, default=DEFAULT_RETAIN_FLOOR)
    p.add_argument("--emit-low", action="store_true", help="write pairs in [floor, threshold) to OUT.low")
    p.add_argument("--backend", choices=("exact", "ivfpq"), default="exact")
    p.add_argument("--nprobe", type=int, default=None)
    p.add_argument("--nlist", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--src-index")
    p.add_argument("--tgt-index")
    p.add_argument("--candidates-out", help="also write the scored candidate union for sweeps")
    threads(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("sweep", help="pair counts (and P/R/F1) across margin thresholds")
    p.add_argument("--candidates", required=True)
    p.add_argument("--gold")
    p.add_argument("--thresholds", default="1.00:1.10:0.01", help="start:end:step, inclusive")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="precision/recall/F1 of a mined bitext against gold ids")
    p.add_argument("--mined", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--src-txt")
    p.add_argument("--tgt-txt")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        if hasattr(args, "threads"):
            args.threads = resolve_threads(args.threads)
        func = args.func
        del args.func
        manifest = func(args)
        manifest.duration_seconds = round(time.perf_counter() - start, 3)
        manifest.write(args.out if getattr(args, "out", None) else _sibling(Path(args.mined), ".eval"))
    except (MiningError, OSError) as exc:
        print(f"marginmine {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"marginmine {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
