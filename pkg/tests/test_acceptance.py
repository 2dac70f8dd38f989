"""One test per acceptance criterion; a pass/fail line per criterion is
printed in the ``acceptance criteria`` section of the pytest summary."""
import math
import os
import re
import time
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from prosodic_codes.cli import run_command
from prosodic_codes.config import Config
from prosodic_codes.corpus import generate_synthetic_corpus, load_corpus, phone_inventory, \
    read_ground_truth
from prosodic_codes.eval_stats import (JudgmentRecord, System, binomial_test, holm_bonferroni,
                                       per_pair_report)
from prosodic_codes.f0_features import (F0Contour, compute_deltas, compute_norm_stats,
                                        features_to_hz, f0_rmse, mlpg, mlpg_dense)
from prosodic_codes.intonation_codes import (assign_all, cluster_purity, extract_vamp_codes,
                                             kmeans_fit)
from prosodic_codes.neural_core import Dense, GRULayer, ParamStore, SequenceStack, grad_check
from prosodic_codes.phrase_parser import Klass, Token, parse_phrases, tokenize
from prosodic_codes.prosody_models import (LatentPosterior, ProsodyModel, TrainingExample,
                                           gaussian_log_density, kl_mc_estimate, make_batch,
                                           train)
from prosodic_codes.synthesis import (pairwise_distinctness, sentence_spec_from_utterance,
                                      synthesize_f0)

from conftest import SINGLE_PHRASE_SENTENCES

# Desk-scale training recipe for criterion 5 (see README).
DESK_SCALE = dict(batch_size=8, peak_lr=0.003, warmup_epochs=8)


def _layer_loss(layer, x, w):
    def f(backward):
        y, cache = layer.forward(x)
        if backward:
            layer.backward(w, cache)
        return float(np.sum(y * w))
    return f


def test_criterion_1_gradients(acceptance_note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    errors = {}

    store = ParamStore()
    dense = Dense(store, "d", 8, 8, rng)
    errors["dense"] = grad_check(store, _layer_loss(dense, rng.standard_normal((8, 8)),
                                                    rng.standard_normal((8, 8))))
    store = ParamStore()
    gru = GRULayer(store, "g", 3, 4, rng)
    gru.b.value[...] = 0.1 * rng.standard_normal(12)
    errors["gru"] = grad_check(store, _layer_loss(gru, rng.standard_normal((5, 2, 3)),
                                                  rng.standard_normal((5, 2, 4))))
    store = ParamStore()
    stack = SequenceStack(store, "s", 3, 2, rng, ff_units=6, rnn_units=4, rnn_layers=3)
    errors["stack"] = grad_check(store, _layer_loss(stack, rng.standard_normal((7, 2, 3)),
                                                    rng.standard_normal((7, 2, 2))))
    for kind in ("ae", "vamp"):
        model = ProsodyModel(kind, list("abcde"), latent_dim=4, ff_units=5, rnn_units=4,
                             rnn_layers=3, pseudo_lengths=[3, 5, 7], seed=1)
        for p in model.store.values():
            p.value += 0.3 * rng.standard_normal(p.shape)

        def ex(T, two):
            r = [(0, T // 2), (T // 2, T)] if two else [(0, T)]
            return TrainingExample(rng.standard_normal((T, 3)), rng.integers(0, 5, T), r)

        batch = make_batch([ex(20, True), ex(13, False)])
        noise = rng.standard_normal((3, 4)) if kind == "vamp" else None
        errors[kind] = grad_check(model.store,
                                  lambda bw: model.loss_and_grad(batch, 0.7, noise, bw)[0])
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    acceptance_note("max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in errors.items())
                    + f"; {elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 60


def test_criterion_2_mlpg(acceptance_note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_rel = 0.0
    for _ in range(100):
        T = int(rng.integers(1, 201))
        means = rng.standard_normal((T, 3))
        stds = rng.uniform(0.02, 2.0, 3)
        ref = mlpg_dense(means, stds)
        got = mlpg(means, stds)
        worst_rel = max(worst_rel, np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-300))
    worst_abs = 0.0
    for _ in range(20):
        T = int(rng.integers(1, 201))
        c = np.cumsum(rng.standard_normal(T))
        worst_abs = max(worst_abs, float(np.max(np.abs(mlpg(compute_deltas(c).frames,
                                                              [1.0, 1.0, 1.0]) - c))))
    elapsed = time.perf_counter() - t0
    acceptance_note(f"banded vs dense rel {worst_rel:.1e}; identity abs {worst_abs:.1e}; "
                    f"{elapsed:.1f}s")
    assert worst_rel < 1e-8
    assert worst_abs < 1e-8
    assert elapsed < 10


def test_criterion_3_parser(acceptance_note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        n = int(rng.integers(0, 25))
        klasses = [Klass.CHINK if b else Klass.CHUNK for b in rng.integers(0, 2, n)]
        toks = [Token(f"w{i}", None, k) for i, k in enumerate(klasses)]
        phrases = parse_phrases(toks)
        assert [t for p in phrases for t in p.tokens] == toks
        starts, pos = set(), 0
        for p in phrases:
            s = "".join("c" if t.klass is Klass.CHINK else "k" for t in p.tokens)
            assert re.fullmatch("c*k+|c+", s)
            starts.add(pos)
            pos += len(p.tokens)
        for i in range(1, n):
            assert (i in starts) == (klasses[i] is Klass.CHINK and klasses[i - 1] is Klass.CHUNK)
    counts = [len(parse_phrases(tokenize(s)[0])) for s in SINGLE_PHRASE_SENTENCES]
    elapsed = time.perf_counter() - t0
    acceptance_note(f"10000 sequences ok; single-phrase sentence counts {counts}; {elapsed:.1f}s")
    assert counts == [1] * 12
    assert elapsed < 5


def test_criterion_4_kl_and_prior(acceptance_note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    post = LatentPosterior(np.zeros(1), np.ones(1))
    z = rng.standard_normal((100_000, 1))
    est = kl_mc_estimate(post, z, np.ones((1, 1)), np.zeros((1, 1)))
    se = est.std(ddof=1) / math.sqrt(est.size)
    model = ProsodyModel("vamp", list("ab"), latent_dim=3, ff_units=8, rnn_units=6,
                         rnn_layers=2, pseudo_lengths=[5, 9, 9, 14], seed=4)
    worst = 0.0
    for _ in range(20):
        zz = 2.0 * rng.standard_normal(3)
        means, logvars = model.prior_components()
        direct = math.log(sum(math.exp(gaussian_log_density(zz, m, lv))
                              for m, lv in zip(means, logvars)) / len(means))
        worst = max(worst, abs(model.vamp_log_prior(zz) - direct))
    elapsed = time.perf_counter() - t0
    acceptance_note(f"MC KL {est.mean():.4f} (SE {se:.4f}, target 0.5); "
                    f"prior vs oracle {worst:.1e}; {elapsed:.1f}s")
    assert abs(est.mean() - 0.5) < 3 * se
    assert worst < 1e-10
    assert elapsed < 30


def _examples(utts, stats, phones):
    index = {p: i for i, p in enumerate(phones)}
    return [u.to_example(stats, index) for u in utts]


def test_criterion_5_desk_scale_learning(tmp_path, acceptance_note):
    t0 = time.perf_counter()
    train_utts = load_corpus(generate_synthetic_corpus(tmp_path / "train", 200, seed=0,
                                                       n_templates=4))
    held_utts = load_corpus(generate_synthetic_corpus(tmp_path / "held", 100, seed=1,
                                                      n_templates=4))
    truth = read_ground_truth(tmp_path / "train" / "ground_truth.tsv")
    stats = compute_norm_stats([u.f0 for u in train_utts])
    phones = phone_inventory(train_utts)
    train_ex = _examples(train_utts, stats, phones)
    cfg = Config(total_epochs=30, **DESK_SCALE)
    schedule = cfg.schedule()

    ae, _ = train("ae", train_ex, phones, schedule, seed=0, norm_stats=stats)
    model = ae.model
    global_mean = float(np.mean(np.concatenate([u.f0.f0_hz[u.f0.f0_hz > 0]
                                                for u in train_utts])))

    def rmse_pair(utts):
        ours, base = [], []
        for u, ex in zip(utts, _examples(utts, stats, phones)):
            gen = features_to_hz(mlpg(model.reconstruct(ex), stats), stats)
            ours.append(f0_rmse(u.f0, gen))
            base.append(f0_rmse(u.f0, F0Contour(np.full(u.n_frames, global_mean))))
        return float(np.mean(ours)), float(np.mean(base))

    rmse_model, rmse_mean = rmse_pair(train_utts)
    reduction = 1.0 - rmse_model / rmse_mean
    held_model, held_mean = rmse_pair(held_utts)

    keys, embs = [], []
    for u, ex in zip(train_utts, train_ex):
        z = model.embed(ex)
        for p in range(z.shape[0]):
            keys.append((u.utt_id, p))
            embs.append(z[p])
    codebook = kmeans_fit(np.array(embs), 4, seed=0)
    purity = cluster_purity(assign_all(np.array(embs), codebook), [truth[k] for k in keys])

    vae, hist = train("vamp", train_ex, phones, schedule, seed=0, norm_stats=stats)
    vcodes = extract_vamp_codes(vae)
    spec = sentence_spec_from_utterance(held_utts[0])
    renditions = [synthesize_f0(spec, [k] * spec.n_phrases, vae, vcodes, stats)
                  for k in range(vcodes.K)]
    dist = pairwise_distinctness(renditions)
    n_distinct_pairs = int((np.triu(dist, 1) > 10.0).sum())
    elapsed = time.perf_counter() - t0
    acceptance_note(f"(a) RMSE {rmse_model:.2f} Hz vs global mean {rmse_mean:.2f} Hz "
                    f"({100 * reduction:.1f}% lower; held-out {held_model:.2f} vs {held_mean:.2f}); (b) purity {purity:.3f}; "
                    f"(c) max code distance {dist.max():.1f} Hz, {n_distinct_pairs} pairs > 10 Hz, "
                    f"final KL {hist[-1].kl:.2f}; {elapsed / 60:.1f} min")
    assert reduction >= 0.30
    assert purity >= 0.8
    assert n_distinct_pairs >= 1
    assert elapsed < 30 * 60


def _tail_oracle(k, n):
    return float(Fraction(sum(comb(n, i) for i in range(k, n + 1)), 2 ** n))


def test_criterion_6_statistics(acceptance_note):
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(21):
        for k in range(n + 1):
            ref = _tail_oracle(k, n)
            worst = max(worst, abs(binomial_test(k, n) - ref) / ref)
    res = holm_bonferroni([0.01, 0.04, 0.03], 0.05)
    assert res.reject == [True, False, False]
    assert holm_bonferroni([0.001, 0.01, 0.02, 0.2], 0.05).reject == [True, True, True, False]
    rng = np.random.default_rng(6)
    for _ in range(200):
        ps = rng.uniform(0, 0.05, int(rng.integers(1, 20)))
        r = holm_bonferroni(ps, 0.01).reject
        assert all(p <= 0.01 for p, rej in zip(ps, r) if rej)

    planted = {System.AE_KMEANS: {3, 11, 20}, System.VAE_VAMP: {0, 7, 8, 25, 37}}
    records = []
    for system in System:
        for pair in range(38):
            for listener in range(22):
                diff = True if pair in planted[system] else bool(rng.random() < 0.5)
                records.append(JudgmentRecord(system, f"pair{pair:02d}", f"l{listener}", diff))
    rows = per_pair_report(records, alpha=0.005)
    found = {(r.system, int(r.pair_id[4:])) for r in rows if r.significant}
    expected = {(s, p) for s, ps in planted.items() for p in ps}
    elapsed = time.perf_counter() - t0
    acceptance_note(f"binomial vs rational max rel {worst:.1e}; {len(rows)} pairs tested, "
                    f"{len(found)} significant, planted {len(expected)}; {elapsed:.1f}s")
    assert worst < 1e-12
    assert len(rows) == 76
    assert found == expected
    assert elapsed < 5


DETERMINISM_CONFIG = """\
seed = 11
latent_dim = 4
n_codes = 4
ff_units = 16
rnn_units = 8
rnn_layers = 2
pseudo_lengths = 50,50,100,100
total_epochs = 2
batch_size = 8
warmup_epochs = 1
"""


def _run_pipeline(root):
    root.mkdir()
    (root / "config.txt").write_text(DETERMINISM_CONFIG)
    data, manifest = root / "data", str(root / "data" / "manifest.tsv")
    steps = [
        ["gen-data", "--out", str(data), "--n", "24", "--seed", "5", "--templates", "4"],
        ["features", "--corpus", manifest, "--out", str(root / "features")],
        ["train", "--model", "vamp", "--corpus", manifest, "--config", str(root / "config.txt"),
         "--stats", str(root / "features" / "norm_stats.txt"), "--out", str(root / "model"),
         "--quiet"],
        ["codes", "--checkpoint", str(root / "model" / "model.ckpt"), "--out", str(root / "codes")],
        ["synth", "--checkpoint", str(root / "model" / "model.ckpt"),
         "--codebook", str(root / "codes" / "codebook.txt"), "--corpus", manifest,
         "--utt", "utt00003", "--out", str(root / "synth")],
    ]
    for argv in steps:
        assert run_command(argv) == 0, argv
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            path = os.path.join(dirpath, f)
            data_bytes = open(path, "rb").read()
            if f == "metrics.log":
                data_bytes = re.sub(rb" wall_time=[0-9.]+", b"", data_bytes)
            out[os.path.relpath(path, root)] = data_bytes
    return out


def test_criterion_7_determinism(tmp_path, acceptance_note):
    a = _run_pipeline(tmp_path / "run1")
    b = _run_pipeline(tmp_path / "run2")
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    acceptance_note(f"{len(a)} artifacts compared, {len(differing)} differ"
                    + (f": {differing[:5]}" if differing else ""))
    assert set(a) == set(b)
    assert not differing
