"""Command-line entry point: ``prosodic-codes <command> ...``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, _accel
from .config import Config
from .corpus import generate_synthetic_corpus, load_corpus, phone_inventory, read_ground_truth
from .errors import ProsodyError
from .eval_stats import (format_report, format_system_report, per_pair_report, per_system_report,
                         read_judgments)
from .f0_features import NormStats, compute_norm_stats
from .intonation_codes import assign_all, cluster_purity, extract_vamp_codes, kmeans_fit, Codebook
from .neural_core import write_container
from .phrase_parser import Lexicon, parse_phrases, tokenize
from .prosody_models import ModelCheckpoint, train
from .synthesis import load_sentence_spec, render_all_codes, sentence_spec_from_utterance

log = logging.getLogger("prosodic_codes")


def write_run_meta(out_dir, command, config: Config | None = None, **extra):
    lines = [f"command={command}", f"version={__version__}", f"numpy={np.__version__}",
             f"numba={_accel.NUMBA_VERSION}", f"backend={_accel.get_backend()}"]
    if config is not None:
        lines += [f"seed={config.seed}", f"config_hash={config.digest()}"]
    lines += [f"{k}={v}" for k, v in sorted(extra.items())]
    with open(os.path.join(out_dir, "run_meta.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if getattr(args, "config", None) else Config()
    for key in ("seed", "total_epochs", "batch_size", "latent_dim", "n_codes"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    return cfg


def _lexicon(args):
    return Lexicon.from_file(args.lexicon) if getattr(args, "lexicon", None) else None


def _stats_for(args, utts) -> NormStats:
    if getattr(args, "stats", None):
        with open(args.stats) as fh:
            return NormStats.from_text(fh.read())
    return compute_norm_stats([u.f0 for u in utts])


def cmd_parse(args):
    lexicon = _lexicon(args)
    fh = open(args.text) if args.text and args.text != "-" else sys.stdin
    with fh:
        for line in fh:
            if not line.strip():
                continue
            tokens, _ = tokenize(line, lexicon)
            phrases = parse_phrases(tokens)
            if args.classes:
                print(" | ".join(" ".join(f"{t.text}/{t.klass.value}" for t in p.tokens)
                                 for p in phrases))
            else:
                print(" | ".join(p.text for p in phrases))
    return 0


def cmd_gen_data(args):
    manifest = generate_synthetic_corpus(args.out, args.n, args.seed, args.templates,
                                         args.max_phrases)
    print(manifest)
    return 0


def cmd_features(args):
    utts = load_corpus(args.corpus, _lexicon(args))
    stats = compute_norm_stats([u.f0 for u in utts])
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "norm_stats.txt"), "w") as fh:
        fh.write(stats.to_text())
    phones = phone_inventory(utts)
    index = {p: i for i, p in enumerate(phones)}
    arrays = {}
    ranges = {}
    for u in utts:
        ex = u.to_example(stats, index)
        arrays[f"{u.utt_id}/features"] = ex.features
        arrays[f"{u.utt_id}/phone_ids"] = ex.phone_ids
        ranges[u.utt_id] = [list(r) for r in ex.ranges]
    write_container(os.path.join(args.out, "features.bin"), arrays,
                    {"phones": phones, "ranges": ranges, "norm_stats": dict(stats.__dict__)})
    write_run_meta(args.out, "features", n_utts=len(utts))
    print(f"{len(utts)} utterances, {sum(u.n_frames for u in utts)} frames")
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    utts = load_corpus(args.corpus, _lexicon(args))
    stats = _stats_for(args, utts)
    phones = phone_inventory(utts)
    index = {p: i for i, p in enumerate(phones)}
    examples = [u.to_example(stats, index) for u in utts]
    os.makedirs(args.out, exist_ok=True)
    cfg.save(os.path.join(args.out, "config.txt"))
    metrics = open(os.path.join(args.out, "metrics.log"), "w")
    with metrics:
        def on_epoch(m):
            metrics.write(m.to_line() + "\n")
            metrics.flush()
            if not args.quiet:
                print(m.to_line(), flush=True)

        ckpt_path = os.path.join(args.out, "model_epoch{epoch}.ckpt") if cfg.checkpoint_every else None
        ckpt, _ = train(args.model, examples, phones, cfg.schedule(), cfg.seed, cfg.latent_dim,
                        cfg.ff_units, cfg.rnn_units, cfg.rnn_layers,
                        cfg.pseudo_lengths if args.model == "vamp" else None, stats, on_epoch,
                        cfg.checkpoint_every, ckpt_path, cfg.pseudo_init)
    ckpt.save(os.path.join(args.out, "model.ckpt"))
    with open(os.path.join(args.out, "norm_stats.txt"), "w") as fh:
        fh.write(stats.to_text())
    write_run_meta(args.out, f"train --model {args.model}", cfg, n_utts=len(utts))
    return 0


def cmd_cluster(args):
    cfg = _load_config(args)
    ckpt = ModelCheckpoint.load(args.checkpoint)
    if ckpt.model.kind != "ae":
        raise ProsodyError("cluster expects an AE checkpoint (use 'codes' for vamp)")
    utts = load_corpus(args.corpus, _lexicon(args))
    stats = ckpt.norm_stats or compute_norm_stats([u.f0 for u in utts])
    index = ckpt.model.phone_index
    keys, embs = [], []
    for u in utts:
        z = ckpt.model.embed(u.to_example(stats, index))
        for p in range(z.shape[0]):
            keys.append((u.utt_id, p))
            embs.append(z[p])
    embs = np.array(embs)
    codebook = kmeans_fit(embs, cfg.n_codes, cfg.seed, cfg.kmeans_n_init)
    os.makedirs(args.out, exist_ok=True)
    codebook.save(os.path.join(args.out, "codebook.txt"))
    labels = assign_all(embs, codebook)
    with open(os.path.join(args.out, "assignments.tsv"), "w") as fh:
        fh.write("utt_id\tphrase\tcode\n")
        fh.writelines(f"{u}\t{p}\t{int(c)}\n" for (u, p), c in zip(keys, labels))
    truth_path = os.path.join(os.path.dirname(os.path.abspath(args.corpus)), "ground_truth.tsv")
    extra = {}
    if os.path.exists(truth_path):
        truth = read_ground_truth(truth_path)
        purity = cluster_purity(labels, [truth[k] for k in keys])
        extra["purity"] = repr(purity)
        print(f"cluster purity: {purity:.4f}")
    write_run_meta(args.out, "cluster", cfg, **extra)
    return 0


def cmd_codes(args):
    ckpt = ModelCheckpoint.load(args.checkpoint)
    codebook = extract_vamp_codes(ckpt)
    os.makedirs(args.out, exist_ok=True)
    codebook.save(os.path.join(args.out, "codebook.txt"))
    write_run_meta(args.out, "codes", K=codebook.K)
    return 0


def cmd_synth(args):
    ckpt = ModelCheckpoint.load(args.checkpoint)
    codebook = Codebook.load(args.codebook)
    if args.sentence:
        spec = load_sentence_spec(args.sentence)
    else:
        if not (args.corpus and args.utt):
            raise ProsodyError("synth needs --sentence FILE or --corpus MANIFEST --utt ID")
        matches = [u for u in load_corpus(args.corpus, _lexicon(args)) if u.utt_id == args.utt]
        if not matches:
            raise ProsodyError(f"utterance {args.utt!r} not in corpus")
        spec = sentence_spec_from_utterance(matches[0])
    codes = [int(c) for c in args.codes.split(",")] if args.codes else None
    stats = None
    if args.stats:
        with open(args.stats) as fh:
            stats = NormStats.from_text(fh.read())
    manifest = render_all_codes(spec, ckpt, codebook, stats, args.out, codes, args.voicing)
    write_run_meta(args.out, "synth", sentence=spec.sentence_id)
    print(manifest)
    return 0


def cmd_stats(args):
    records = read_judgments(args.judgments)
    alt = "two-sided" if args.two_sided else "greater"
    rows = per_pair_report(records, args.alpha, alternative=alt)
    text = format_report(rows)
    system_text = format_system_report(per_system_report(records, alternative=alt))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        with open(os.path.splitext(args.out)[0] + "_systems.tsv", "w") as fh:
            fh.write(system_text)
    else:
        sys.stdout.write(text + "\n" + system_text)
    n_sig = sum(r.significant for r in rows)
    print(f"{n_sig}/{len(rows)} pairs significant after Holm-Bonferroni (alpha={args.alpha})",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prosodic-codes",
                                description="Phrase-level intonation codes from F0.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", help="split sentences into chink/chunk phrases")
    s.add_argument("--text", help="one sentence per line (default: stdin)")
    s.add_argument("--lexicon", help="lexicon override file")
    s.add_argument("--classes", action="store_true", help="show chink/chunk per token")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("gen-data", help="write a synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--templates", type=int, default=8)
    s.add_argument("--max-phrases", type=int, default=1)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("features", help="normalisation stats and feature cache")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lexicon")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="train an AE or VAE-VAMP model")
    s.add_argument("--model", choices=("ae", "vamp"), required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--stats", help="norm_stats.txt from 'features'")
    s.add_argument("--lexicon")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", dest="total_epochs", type=int)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--latent-dim", dest="latent_dim", type=int)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("cluster", help="k-means codebook from AE phrase embeddings")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--k", dest="n_codes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lexicon")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("codes", help="codebook of VAMP mode centres")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_codes)

    s = sub.add_parser("synth", help="render one F0 contour per code")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sentence", help="sentence specification file")
    s.add_argument("--corpus")
    s.add_argument("--utt")
    s.add_argument("--codes", help="comma-separated code ids (default: all)")
    s.add_argument("--stats")
    s.add_argument("--voicing", action="store_true", help="unvoice silence phones")
    s.add_argument("--lexicon")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("stats", help="binomial tests with Holm-Bonferroni correction")
    s.add_argument("--judgments", required=True)
    s.add_argument("--out")
    s.add_argument("--alpha", type=float, default=0.005)
    s.add_argument("--two-sided", action="store_true")
    s.set_defaults(func=cmd_stats)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ProsodyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
