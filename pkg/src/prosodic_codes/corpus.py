"""Corpus ingestion and the synthetic stand-in corpus.

Manifest lines are tab separated::

    utt_id  f0_path  align_path  text_path  [words_path]

Paths are relative to the manifest's directory unless absolute.  Alignment
files hold ``start_frame end_frame phone`` per line, contiguous from frame 0
to the end of the F0 track.  The optional words file holds
``start_frame end_frame word`` per token; without it, word spans are
approximated from the phone alignment (see :func:`approximate_word_spans`).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentGap, FileMissing, FormatError, InvalidParams
from .f0_features import F0Contour, NormStats, extract_features, read_f0_file, write_f0_file
from .phrase_parser import Lexicon, parse_phrases, phrase_frame_ranges, tokenize
from .prosody_models import TrainingExample

SILENCES = frozenset({"sil", "pau", "sp", "#", "<sil>", "h#"})


@dataclass
class Utterance:
    utt_id: str
    text: str
    tokens: list
    f0: F0Contour
    alignment: list            # (start, end, phone)
    word_spans: list           # (start, end) per token
    phrases: list = field(default_factory=list)
    ranges: list = field(default_factory=list)
    approximate_words: bool = False

    @property
    def n_frames(self) -> int:
        return len(self.f0)

    @property
    def phones(self):
        return [p for _, _, p in self.alignment]

    @property
    def durations(self):
        return [e - s for s, e, _ in self.alignment]

    def frame_phones(self):
        out = []
        for s, e, p in self.alignment:
            out.extend([p] * (e - s))
        return out

    def to_example(self, stats: NormStats, phone_index: dict) -> TrainingExample:
        feats = extract_features(self.f0, stats).frames
        ids = np.array([phone_index[p] for p in self.frame_phones()], dtype=np.int64)
        return TrainingExample(feats, ids, list(self.ranges), self.utt_id)


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.join(base, path)


def read_alignment(path):
    rows = []
    try:
        fh = open(path)
    except FileNotFoundError:
        raise FileMissing(f"alignment file not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise FormatError("expected 'start end phone'", path, lineno)
            try:
                s, e = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError("frame indices must be integers", path, lineno) from None
            if e <= s:
                raise FormatError(f"empty or reversed segment {s}..{e}", path, lineno)
            expected = rows[-1][1] if rows else 0
            if s != expected:
                raise AlignmentGap(f"{path}:{lineno}: segment starts at {s}, expected {expected}")
            rows.append((s, e, parts[2]))
    if not rows:
        raise FormatError("empty alignment", path)
    return rows


def read_word_spans(path):
    rows = []
    try:
        fh = open(path)
    except FileNotFoundError:
        raise FileMissing(f"words file not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise FormatError("expected 'start end word'", path, lineno)
            try:
                rows.append((int(parts[0]), int(parts[1]), " ".join(parts[2:])))
            except ValueError:
                raise FormatError("frame indices must be integers", path, lineno) from None
    return rows


def approximate_word_spans(tokens, alignment):
    """Spread non-silence phones over tokens in proportion to letter counts.

    Pauses between words are absorbed by the preceding word so the spans stay
    contiguous.  This is only an approximation of a word-level alignment.
    """
    speech = [(s, e) for s, e, p in alignment if p.lower() not in SILENCES]
    if len(speech) < len(tokens):
        raise FormatError(f"{len(tokens)} words but only {len(speech)} non-silence phones")
    weights = np.array([max(1, sum(ch.isalpha() for ch in t.text)) for t in tokens], float)
    bounds = np.round(np.cumsum(weights) / weights.sum() * len(speech)).astype(int)
    spans = []
    first = 0
    for i, b in enumerate(bounds):
        # every token gets at least one phone, and leaves enough for the rest
        last = min(max(b, first + 1), len(speech) - (len(tokens) - i - 1))
        spans.append([speech[first][0], speech[last - 1][1]])
        first = last
    for i in range(len(spans) - 1):
        spans[i][1] = spans[i + 1][0]
    return [tuple(s) for s in spans]


def tile_ranges(ranges, T):
    """Stretch phrase ranges so they cover ``[0, T)`` (leading/trailing silence)."""
    if not ranges:
        return [(0, T)]
    out = [list(r) for r in ranges]
    out[0][0] = 0
    for i in range(len(out) - 1):
        out[i][1] = out[i + 1][0]
    out[-1][1] = T
    return [tuple(r) for r in out]


def build_utterance(utt_id, text, f0, alignment, words=None, lexicon=None) -> Utterance:
    tokens, _ = tokenize(text, lexicon)
    T = len(f0)
    if alignment[-1][1] != T:
        raise AlignmentGap(f"{utt_id}: alignment covers {alignment[-1][1]} frames, F0 has {T}")
    approximate = False
    if not tokens:
        raise FormatError(f"{utt_id}: text has no words")
    if words is None:
        spans = approximate_word_spans(tokens, alignment)
        approximate = True
    else:
        spans = [(s, e) for s, e, _ in words]
        if len(spans) != len(tokens):
            raise FormatError(f"{utt_id}: {len(spans)} word spans for {len(tokens)} tokens")
        if spans and spans[-1][1] > T:
            raise AlignmentGap(f"{utt_id}: word spans run past frame {T}")
    phrases = parse_phrases(tokens)
    ranges = tile_ranges(phrase_frame_ranges(phrases, spans), T)
    return Utterance(utt_id, text, tokens, f0, alignment, spans, phrases, ranges, approximate)


def load_corpus(manifest_path, lexicon: Lexicon | None = None) -> list[Utterance]:
    if not os.path.exists(manifest_path):
        raise FileMissing(f"manifest not found: {manifest_path}")
    base = os.path.dirname(os.path.abspath(manifest_path))
    utts = []
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (4, 5):
                raise FormatError("expected 4 or 5 tab-separated columns", manifest_path, lineno)
            utt_id = cols[0]
            paths = [_resolve(base, c) for c in cols[1:]]
            for p in paths:
                if not os.path.exists(p):
                    raise FileMissing(f"{manifest_path}:{lineno}: missing file {p}")
            f0 = read_f0_file(paths[0])
            alignment = read_alignment(paths[1])
            with open(paths[2]) as tf:
                text = tf.read().strip()
            words = read_word_spans(paths[3]) if len(paths) == 4 else None
            utts.append(build_utterance(utt_id, text, f0, alignment, words, lexicon))
    return utts


def phone_inventory(utterances) -> list[str]:
    return sorted({p for u in utterances for p in u.phones})


def read_ground_truth(path) -> dict:
    """``(utt_id, phrase_index) -> template name`` from a synthetic corpus."""
    truth = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            utt, idx, name = line.rstrip("\n").split("\t")
            truth[(utt, int(idx))] = name
    return truth


# ---------------------------------------------------------------------------
# Synthetic corpus

TEMPLATES = ("rise", "fall", "rise-fall", "fall-rise", "high-flat", "low-flat",
             "early-peak", "late-peak")

SYNTH_PHONES = ("sil", "aa", "ae", "ah", "ao", "b", "d", "eh", "er", "f", "g", "ih",
                "iy", "k", "l", "m", "n", "s", "t", "uw")

CHINK_WORDS = ("the", "a", "of", "and", "to", "in", "with", "from", "was", "is", "on", "at")
CHUNK_WORDS = ("turnip", "bear", "wolf", "porridge", "garden", "forest", "little",
               "enormous", "village", "morning", "golden", "stairs", "answer", "matter",
               "window", "kitchen", "basket", "mountain", "river", "cottage", "lantern",
               "yellow", "quiet", "happy")


def template_curve(name: str, tau: np.ndarray, base: float, excursion: float) -> np.ndarray:
    """Noise-free template F0 over normalised time ``tau`` in [0, 1]."""
    b, e = base, excursion
    if name == "rise":
        return b + e * (tau - 0.5)
    if name == "fall":
        return b - e * (tau - 0.5)
    if name == "rise-fall":
        return b - e / 2 + e * np.sin(np.pi * tau)
    if name == "fall-rise":
        return b + e / 2 - e * np.sin(np.pi * tau)
    if name == "high-flat":
        return np.full_like(tau, b + e / 2)
    if name == "low-flat":
        return np.full_like(tau, b - e / 2)
    if name == "early-peak":
        return b - e / 2 + e * np.exp(-(((tau - 0.25) / 0.12) ** 2))
    if name == "late-peak":
        return b - e / 2 + e * np.exp(-(((tau - 0.75) / 0.12) ** 2))
    raise InvalidParams(f"unknown template {name!r}")


def _smooth_noise(rng, n, sigma):
    win = np.hanning(17)[1:-1]
    white = rng.standard_normal(n + win.size - 1)
    return sigma * np.convolve(white, win, mode="valid") / np.sqrt((win ** 2).sum())


def _durations(rng, total, lo, hi):
    out = []
    left = total
    while left > 0:
        d = int(rng.integers(lo, hi + 1))
        if left - d < lo:
            d = left
        out.append(d)
        left -= d
    return out


def generate_utterance(rng, utt_id, n_templates=8, max_phrases=1, min_len=50, max_len=500,
                       noise_hz=5.0):
    T = int(rng.integers(min_len, max_len + 1))
    lead = int(rng.integers(4, 11))
    trail = int(rng.integers(4, 11))
    speech = T - lead - trail
    n_phr = int(rng.integers(1, max_phrases + 1))
    n_phr = max(1, min(n_phr, speech // 40))
    cuts = np.sort(rng.choice(np.arange(1, n_phr * 8), size=n_phr - 1, replace=False)) \
        if n_phr > 1 else np.array([], int)
    # phrase budgets: roughly even split with jitter, each >= 20 frames
    fracs = np.diff(np.concatenate([[0], cuts, [n_phr * 8]])) / (n_phr * 8)
    budgets = 20 + np.floor(fracs * (speech - 20 * n_phr)).astype(int)
    budgets[-1] = speech - budgets[:-1].sum()

    alignment = [(0, lead, "sil")]
    words = []
    tokens_text = []
    f0 = np.zeros(T)
    truth = []
    base = float(rng.uniform(170.0, 210.0))
    excursion = float(rng.uniform(50.0, 80.0))
    pos = lead
    for p, budget in enumerate(budgets):
        start = pos
        durs = _durations(rng, int(budget), 4, 14)
        phones = [SYNTH_PHONES[int(rng.integers(1, len(SYNTH_PHONES)))] for _ in durs]
        seg_bounds = []
        for d, ph in zip(durs, phones):
            alignment.append((pos, pos + d, ph))
            seg_bounds.append((pos, pos + d))
            pos += d
        # group phones into words of 2..4 phones
        groups = []
        i = 0
        while i < len(seg_bounds):
            n = int(rng.integers(2, 5))
            if len(seg_bounds) - (i + n) == 1:
                n += 1
            groups.append((seg_bounds[i][0], seg_bounds[min(i + n, len(seg_bounds)) - 1][1]))
            i += n
        if len(groups) == 1 and p > 0:
            # a later phrase needs a leading chink and a chunk
            groups = [seg_bounds[0], (seg_bounds[1][0], seg_bounds[-1][1])]
        n_words = len(groups)
        n_chink = 0
        if n_words > 1:
            n_chink = int(rng.integers(1 if p > 0 else 0, min(3, n_words - 1) + 1))
        for w, (s, e) in enumerate(groups):
            vocab = CHINK_WORDS if w < n_chink else CHUNK_WORDS
            word = vocab[int(rng.integers(len(vocab)))]
            tokens_text.append(word)
            words.append((s, e, word))
        template = TEMPLATES[int(rng.integers(n_templates))]
        truth.append((p, template))
        seg_start = 0 if p == 0 else start
        seg_end = T if p == len(budgets) - 1 else pos
        tau = np.linspace(0.0, 1.0, seg_end - seg_start)
        f0[seg_start:seg_end] = template_curve(template, tau, base, excursion)
    alignment.append((pos, T, "sil"))

    f0 = f0 + _smooth_noise(rng, T, noise_hz)
    voiced = np.ones(T, bool)
    voiced[:lead] = False
    voiced[T - trail :] = False
    for _ in range(int(rng.integers(0, 4))):
        g = int(rng.integers(3, 16))
        s = int(rng.integers(lead, max(lead + 1, T - trail - g)))
        voiced[s : s + g] = False
    if not voiced.any():
        voiced[T // 2] = True
    f0 = np.where(voiced, f0, 0.0)
    return {"id": utt_id, "f0": f0, "alignment": alignment, "words": words,
            "text": " ".join(tokens_text), "truth": truth}


def generate_synthetic_corpus(out_dir, n_utts: int = 200, seed: int = 0, n_templates: int = 8,
                              max_phrases: int = 1, min_len: int = 50, max_len: int = 500):
    """Write a synthetic corpus; returns the manifest path.

    Each phrase follows one of the first ``n_templates`` intonation templates
    (recorded in ``ground_truth.tsv``), with smooth 5 Hz noise and random
    unvoiced gaps.  Output is byte-identical for a given seed.
    """
    if not 1 <= n_templates <= len(TEMPLATES):
        raise InvalidParams(f"template count must be in 1..{len(TEMPLATES)}")
    if n_utts < 1 or max_phrases < 1 or not 50 <= min_len <= max_len:
        raise InvalidParams("n_utts and max_phrases must be >= 1, 50 <= min_len <= max_len")
    rng = np.random.default_rng(seed)
    for sub in ("f0", "align", "text", "words"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w") as mf, open(os.path.join(out_dir, "ground_truth.tsv"), "w") as gt:
        gt.write("utt_id\tphrase\ttemplate\n")
        for i in range(n_utts):
            utt = generate_utterance(rng, f"utt{i:05d}", n_templates, max_phrases, min_len, max_len)
            uid = utt["id"]
            write_f0_file(os.path.join(out_dir, "f0", uid + ".f0"), F0Contour(utt["f0"]))
            with open(os.path.join(out_dir, "align", uid + ".lab"), "w") as fh:
                fh.writelines(f"{s} {e} {p}\n" for s, e, p in utt["alignment"])
            with open(os.path.join(out_dir, "text", uid + ".txt"), "w") as fh:
                fh.write(utt["text"] + "\n")
            with open(os.path.join(out_dir, "words", uid + ".words"), "w") as fh:
                fh.writelines(f"{s} {e} {w}\n" for s, e, w in utt["words"])
            mf.write(f"{uid}\tf0/{uid}.f0\talign/{uid}.lab\ttext/{uid}.txt\twords/{uid}.words\n")
            for p, name in utt["truth"]:
                gt.write(f"{uid}\t{p}\t{name}\n")
    return manifest
