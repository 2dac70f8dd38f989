import os

import numpy as np
import pytest

from prosodic_codes.cli import run_command
from prosodic_codes.config import Config
from prosodic_codes.corpus import (SYNTH_PHONES, approximate_word_spans, generate_synthetic_corpus,
                                   load_corpus, read_ground_truth, template_curve, tile_ranges)
from prosodic_codes.errors import AlignmentGap, ConfigError, FileMissing, InvalidParams
from prosodic_codes.phrase_parser import tokenize

from conftest import SINGLE_PHRASE_SENTENCES

TINY = """\
seed = 5
latent_dim = 3
n_codes = 3
ff_units = 6
rnn_units = 5
rnn_layers = 1
pseudo_lengths = 10,20,30
total_epochs = 2
batch_size = 4
warmup_epochs = 1
kmeans_n_init = 2
"""


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_generated_corpus(tmp_path):
    m = generate_synthetic_corpus(tmp_path / "c", 40, seed=1, n_templates=4, max_phrases=3)
    utts = load_corpus(m)
    assert len(utts) == 40
    assert all(50 <= u.n_frames <= 500 for u in utts)
    assert {p for u in utts for p in u.phones} <= set(SYNTH_PHONES)
    truth = read_ground_truth(tmp_path / "c" / "ground_truth.tsv")
    for u in utts:
        assert [truth[(u.utt_id, i)] for i in range(len(u.ranges))]
        assert u.ranges[0][0] == 0 and u.ranges[-1][1] == u.n_frames
        assert sum(1 for k in truth if k[0] == u.utt_id) == len(u.ranges)
    assert set(truth.values()) <= {"rise", "fall", "rise-fall", "fall-rise"}


def test_generation_deterministic(tmp_path):
    generate_synthetic_corpus(tmp_path / "a", 100, seed=1)
    generate_synthetic_corpus(tmp_path / "b", 100, seed=1)
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_generation_invalid(tmp_path):
    with pytest.raises(InvalidParams):
        generate_synthetic_corpus(tmp_path, 10, n_templates=9)


def test_fall_template_decreasing():
    tau = np.linspace(0, 1, 100)
    assert np.all(np.diff(template_curve("fall", tau, 180, 60)) < 0)
    assert np.all(np.diff(template_curve("rise", tau, 180, 60)) > 0)
    with pytest.raises(InvalidParams):
        template_curve("wobble", tau, 180, 60)


def _write_utt(d, uid, n_frames, align_end):
    (d / f"{uid}.f0").write_text("".join(f"{150.0 + i}\n" for i in range(n_frames)))
    (d / f"{uid}.lab").write_text(f"0 5 sil\n5 12 k\n12 {align_end} ae\n")
    (d / f"{uid}.txt").write_text("the cat\n")


def test_load_corpus_valid(tmp_path):
    lines = []
    for i, T in enumerate((20, 30, 25)):
        _write_utt(tmp_path, f"u{i}", T, T)
        lines.append(f"u{i}\tu{i}.f0\tu{i}.lab\tu{i}.txt\n")
    (tmp_path / "m.tsv").write_text("".join(lines))
    utts = load_corpus(tmp_path / "m.tsv")
    assert [u.n_frames for u in utts] == [20, 30, 25]
    assert all(u.approximate_words for u in utts)


def test_load_corpus_alignment_short(tmp_path):
    _write_utt(tmp_path, "u", 20, 18)
    (tmp_path / "m.tsv").write_text("u\tu.f0\tu.lab\tu.txt\n")
    with pytest.raises(AlignmentGap):
        load_corpus(tmp_path / "m.tsv")


def test_load_corpus_missing_file(tmp_path):
    (tmp_path / "m.tsv").write_text("u\tnope.f0\tu.lab\tu.txt\n")
    with pytest.raises(FileMissing):
        load_corpus(tmp_path / "m.tsv")


def test_word_span_helpers():
    tokens, _ = tokenize("the cat sat")
    align = [(0, 3, "sil"), (3, 6, "dh"), (6, 9, "k"), (9, 12, "ae"), (12, 15, "s"), (15, 20, "sil")]
    spans = approximate_word_spans(tokens, align)
    assert len(spans) == 3 and spans[0][0] == 3 and spans[-1][1] == 15
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    assert tile_ranges([(3, 9), (9, 15)], 20) == [(0, 9), (9, 20)]


def test_config_roundtrip(tmp_path):
    cfg = Config.from_text(TINY)
    cfg.save(tmp_path / "c.txt")
    assert Config.load(tmp_path / "c.txt") == cfg
    with pytest.raises(ConfigError):
        Config.from_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        Config.from_text("latent_dim = 0\n")


def test_cli_parse_single_phrase_sentences(tmp_path, capsys):
    (tmp_path / "s.txt").write_text("\n".join(SINGLE_PHRASE_SENTENCES) + "\n")
    assert run_command(["parse", "--text", str(tmp_path / "s.txt")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 12
    assert all("|" not in line for line in lines)


def test_cli_unknown_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_command(["train", "--bogus"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_cli_error_is_one_line(tmp_path, capsys):
    code = run_command(["features", "--corpus", str(tmp_path / "none.tsv"),
                        "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error:") and "\n" not in err


def _pipeline(root, kind="vamp"):
    (root / "cfg.txt").write_text(TINY)
    cfg = str(root / "cfg.txt")
    assert run_command(["gen-data", "--out", str(root / "data"), "--n", "12", "--seed", "3",
                        "--templates", "4"]) == 0
    manifest = str(root / "data" / "manifest.tsv")
    assert run_command(["features", "--corpus", manifest, "--out", str(root / "feat")]) == 0
    assert run_command(["train", "--model", kind, "--corpus", manifest, "--config", cfg,
                        "--stats", str(root / "feat" / "norm_stats.txt"),
                        "--out", str(root / "model"), "--quiet"]) == 0
    ckpt = str(root / "model" / "model.ckpt")
    if kind == "vamp":
        assert run_command(["codes", "--checkpoint", ckpt, "--out", str(root / "codes")]) == 0
    else:
        assert run_command(["cluster", "--checkpoint", ckpt, "--corpus", manifest,
                            "--config", cfg, "--out", str(root / "codes")]) == 0
    assert run_command(["synth", "--checkpoint", ckpt,
                        "--codebook", str(root / "codes" / "codebook.txt"),
                        "--corpus", manifest, "--utt", "utt00000",
                        "--out", str(root / "synth")]) == 0


def test_cli_pipeline_vamp(tmp_path):
    _pipeline(tmp_path)
    meta = (tmp_path / "model" / "run_meta.txt").read_text()
    assert "seed=5" in meta and "config_hash=" in meta and "backend=" in meta
    log = (tmp_path / "model" / "metrics.log").read_text().splitlines()
    assert len(log) == 2 and log[0].startswith("epoch=0 lr=")
    renders = sorted(os.listdir(tmp_path / "synth"))
    assert sum(r.endswith(".f0") for r in renders) == 3
    assert "plot_data.tsv" in renders and "manifest.tsv" in renders


def test_cli_pipeline_ae(tmp_path, capsys):
    _pipeline(tmp_path, "ae")
    assert "cluster purity" in capsys.readouterr().out
    assert (tmp_path / "codes" / "assignments.tsv").exists()


def test_cli_stats(tmp_path, capsys):
    rows = ["system\tpair_id\tlistener_id\tjudged_different"]
    for pair, rate in (("p1", 1.0), ("p2", 0.5)):
        for i in range(30):
            rows.append(f"vae_vamp\t{pair}\tl{i}\t{int(i < rate * 30)}")
    (tmp_path / "j.tsv").write_text("\n".join(rows) + "\n")
    assert run_command(["stats", "--judgments", str(tmp_path / "j.tsv"),
                        "--out", str(tmp_path / "r.tsv")]) == 0
    report = (tmp_path / "r.tsv").read_text().splitlines()
    assert report[1].endswith("\t1") and report[2].endswith("\t0")
    assert "1/2 pairs significant" in capsys.readouterr().err
