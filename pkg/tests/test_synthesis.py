import numpy as np
import pytest

from prosodic_codes.errors import PhraseCountMismatch, UnknownCode, UnknownPhone
from prosodic_codes.f0_features import NormStats, read_f0_file
from prosodic_codes.intonation_codes import Codebook, CodeSource, IntonationCode
from prosodic_codes.prosody_models import ModelCheckpoint, ProsodyModel
from prosodic_codes.synthesis import (SentenceSpec, load_sentence_spec, pairwise_distinctness,
                                      read_render_manifest, render_all_codes, synthesize_f0,
                                      write_sentence_spec)

STATS = NormStats(np.log(180.0), 0.15, 1.0, 0.05, 0.02)


@pytest.fixture
def setup(rng):
    model = ProsodyModel("ae", ["sil", "a", "b"], latent_dim=2, ff_units=6, rnn_units=5,
                         rnn_layers=1, seed=0)
    ckpt = ModelCheckpoint(model, STATS)
    cb = Codebook([IntonationCode(k, v, CodeSource.KMEANS)
                   for k, v in enumerate(rng.standard_normal((3, 2)) * 3)])
    spec = SentenceSpec("s1", "the cat", ["sil", "a", "b", "sil"], [3, 5, 6, 2], [(0, 8), (8, 16)])
    return ckpt, cb, spec


def test_synthesize_length_and_voicing(setup):
    ckpt, cb, spec = setup
    c = synthesize_f0(spec, [0, 1], ckpt, cb)
    assert len(c) == 16 and np.all(c.f0_hz > 0)
    v = synthesize_f0(spec, [0, 1], ckpt, cb, apply_voicing=True)
    assert np.all(v.f0_hz[:3] == 0) and np.all(v.f0_hz[-2:] == 0)
    np.testing.assert_array_equal(v.f0_hz[3:14], c.f0_hz[3:14])


def test_synthesize_errors(setup):
    ckpt, cb, spec = setup
    with pytest.raises(PhraseCountMismatch):
        synthesize_f0(spec, [0], ckpt, cb)
    with pytest.raises(UnknownCode):
        synthesize_f0(spec, [0, 7], ckpt, cb)
    bad = SentenceSpec("s2", "", ["zz"], [4], [(0, 4)])
    with pytest.raises(UnknownPhone):
        synthesize_f0(bad, [0], ckpt, cb)


def test_render_all_codes(setup, tmp_path):
    ckpt, cb, spec = setup
    manifest = render_all_codes(spec, ckpt, cb, None, tmp_path / "out")
    rows = read_render_manifest(manifest)
    assert [r[1] for r in rows] == [0, 1, 2]
    contours = [read_f0_file(p) for _, _, p in rows]
    assert all(len(c) == 16 for c in contours)
    plot = (tmp_path / "out" / "plot_data.tsv").read_text().splitlines()
    assert plot[0].split("\t") == ["frame", "time_s", "code00", "code01", "code02"]
    assert len(plot) == 17


def test_render_failure_writes_nothing(setup, tmp_path):
    ckpt, cb, spec = setup
    with pytest.raises(UnknownCode):
        render_all_codes(spec, ckpt, cb, None, tmp_path / "out", code_ids=[0, 9])
    assert not (tmp_path / "out").exists()


def test_sentence_spec_roundtrip(setup, tmp_path):
    _, _, spec = setup
    write_sentence_spec(tmp_path / "s.txt", spec)
    back = load_sentence_spec(tmp_path / "s.txt")
    assert back == spec


def test_sentence_spec_parsed_phrases(tmp_path):
    (tmp_path / "s.txt").write_text("id x\ntext The cat sat on the mat\n"
                                    "0 4 sil\n4 8 dh\n8 12 k\n12 16 s\n16 20 aa\n20 24 dh\n"
                                    "24 28 m\n28 32 sil\n")
    spec = load_sentence_spec(tmp_path / "s.txt")
    assert spec.n_phrases == 2
    assert spec.ranges[0][0] == 0 and spec.ranges[-1][1] == 32


def test_pairwise_distinctness():
    a = np.array([100.0, 0.0, 110.0])
    b = np.array([104.0, 50.0, 107.0])
    d = pairwise_distinctness([a, b, a])
    assert d[0, 1] == pytest.approx(np.sqrt((16 + 9) / 2))
    assert d[0, 2] == 0.0 and d[1, 0] == d[0, 1]
