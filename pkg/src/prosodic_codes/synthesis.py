"""F0 renditions of a sentence from a trained model and a codebook."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .corpus import SILENCES, approximate_word_spans, read_alignment, tile_ranges
from .errors import (FormatError, LengthMismatch, PhraseCountMismatch, UnknownCode,
                     UnknownPhone)
from .f0_features import F0Contour, NormStats, features_to_hz, mlpg, write_f0_file
from .phrase_parser import parse_phrases, phrase_frame_ranges, tokenize


@dataclass
class SentenceSpec:
    sentence_id: str
    text: str
    phones: list
    durations: list
    ranges: list

    @property
    def n_frames(self) -> int:
        return int(sum(self.durations))

    @property
    def n_phrases(self) -> int:
        return len(self.ranges)


def sentence_spec_from_utterance(utt) -> SentenceSpec:
    return SentenceSpec(utt.utt_id, utt.text, list(utt.phones), list(utt.durations),
                        list(utt.ranges))


def load_sentence_spec(path) -> SentenceSpec:
    """Read a sentence file.

    Lines are ``id NAME``, ``text ...``, optional ``phrase START END`` and
    ``word START END WORD`` lines, and ``START END PHONE`` alignment lines.
    Without ``phrase`` lines the text is parsed into phrases, using ``word``
    spans when present and an approximate word alignment otherwise.
    """
    sid, text = os.path.splitext(os.path.basename(path))[0], ""
    phrases, words, align_lines = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            head = parts[0]
            try:
                if head == "id":
                    sid = parts[1]
                elif head == "text":
                    text = line.split(None, 1)[1].strip() if len(parts) > 1 else ""
                elif head == "phrase":
                    phrases.append((int(parts[1]), int(parts[2])))
                elif head == "word":
                    words.append((int(parts[1]), int(parts[2]), parts[3]))
                else:
                    align_lines.append((lineno, int(parts[0]), int(parts[1]), parts[2]))
            except (IndexError, ValueError):
                raise FormatError(f"cannot parse {line.strip()!r}", path, lineno) from None
    if not align_lines:
        raise FormatError("sentence has no phone alignment", path)
    alignment = []
    for lineno, s, e, p in align_lines:
        expected = alignment[-1][1] if alignment else 0
        if s != expected or e <= s:
            raise FormatError(f"alignment must be contiguous from 0 (got {s}..{e})", path, lineno)
        alignment.append((s, e, p))
    T = alignment[-1][1]
    if phrases:
        ranges = phrases
    else:
        tokens, _ = tokenize(text)
        if not tokens:
            raise FormatError("sentence needs phrase lines or text", path)
        spans = [(s, e) for s, e, _ in words] if words else approximate_word_spans(tokens, alignment)
        ranges = tile_ranges(phrase_frame_ranges(parse_phrases(tokens), spans), T)
    return SentenceSpec(sid, text, [p for *_, p in alignment],
                        [e - s for s, e, _ in alignment], list(ranges))


def write_sentence_spec(path, spec: SentenceSpec):
    with open(path, "w") as fh:
        fh.write(f"id {spec.sentence_id}\n")
        fh.write(f"text {spec.text}\n")
        for s, e in spec.ranges:
            fh.write(f"phrase {s} {e}\n")
        pos = 0
        for p, d in zip(spec.phones, spec.durations):
            fh.write(f"{pos} {pos + d} {p}\n")
            pos += d


def synthesize_f0(spec: SentenceSpec, code_ids, checkpoint, codebook, stats: NormStats | None = None,
                  apply_voicing: bool = False) -> F0Contour:
    """Decode one code per phrase, run MLPG and return the contour in Hz.

    With ``apply_voicing`` frames inside silence phones are marked unvoiced.
    """
    model = checkpoint.model
    stats = stats or checkpoint.norm_stats
    if stats is None:
        raise ValueError("normalisation stats are required")
    code_ids = list(code_ids)
    if len(code_ids) != spec.n_phrases:
        raise PhraseCountMismatch(f"{len(code_ids)} codes for {spec.n_phrases} phrases")
    for c in code_ids:
        if not isinstance(c, (int, np.integer)) or not 0 <= c < codebook.K:
            raise UnknownCode(f"code {c!r} not in codebook of size {codebook.K}")
    unknown = [p for p in spec.phones if p not in model.phone_index]
    if unknown:
        raise UnknownPhone(f"phone {unknown[0]!r} is not in the model inventory")
    vectors = np.stack([codebook[int(c)].vector for c in code_ids])
    frame_ids = model.upsample_phones(spec.phones, spec.durations)
    means = model.decode(vectors, frame_ids, spec.ranges)
    contour = features_to_hz(mlpg(means, stats), stats)
    if apply_voicing:
        f0 = contour.f0_hz.copy()
        pos = 0
        for p, d in zip(spec.phones, spec.durations):
            if p.lower() in SILENCES:
                f0[pos : pos + d] = 0.0
            pos += d
        if np.any(f0 > 0):
            contour = F0Contour(f0)
    return contour


def render_all_codes(spec: SentenceSpec, checkpoint, codebook, stats: NormStats | None,
                     out_dir, code_ids=None, apply_voicing: bool = False):
    """One rendition per code (the same code on every phrase).

    Writes ``<sentence>_codeNN.f0`` files, ``manifest.tsv`` and
    ``plot_data.tsv``.  Every rendition is computed before anything is
    written, so a failure leaves no partial output.  Returns the manifest path.
    """
    if spec.n_frames < 1 or not spec.phones:
        raise FormatError("empty sentence specification")
    code_ids = list(range(codebook.K)) if code_ids is None else list(code_ids)
    contours = [synthesize_f0(spec, [c] * spec.n_phrases, checkpoint, codebook, stats,
                              apply_voicing) for c in code_ids]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for c, contour in zip(code_ids, contours):
        name = f"{spec.sentence_id}_code{c:02d}.f0"
        write_f0_file(os.path.join(out_dir, name), contour)
        rows.append(f"{spec.sentence_id}\t{c}\t{name}\n")
    manifest = os.path.join(out_dir, "manifest.tsv")
    with open(manifest, "w") as fh:
        fh.write("sentence_id\tcode_id\tpath\n")
        fh.writelines(rows)
    with open(os.path.join(out_dir, "plot_data.tsv"), "w") as fh:
        fh.write("frame\ttime_s\t" + "\t".join(f"code{c:02d}" for c in code_ids) + "\n")
        for t in range(spec.n_frames):
            vals = "\t".join(repr(float(cn.f0_hz[t])) for cn in contours)
            fh.write(f"{t}\t{t * contours[0].frame_shift:.3f}\t{vals}\n")
    return manifest


def read_render_manifest(path):
    """``[(sentence_id, code_id, absolute_path)]`` from a render manifest."""
    base = os.path.dirname(os.path.abspath(path))
    out = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            sid, code, rel = line.rstrip("\n").split("\t")
            out.append((sid, int(code), os.path.join(base, rel)))
    return out


def pairwise_distinctness(renditions) -> np.ndarray:
    """Symmetric matrix of RMSE (Hz) over frames voiced in both renditions."""
    arrs = [r.f0_hz if isinstance(r, F0Contour) else np.asarray(r, float) for r in renditions]
    n = len(arrs)
    if n and any(a.shape != arrs[0].shape for a in arrs):
        raise LengthMismatch("renditions must have equal lengths")
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            both = (arrs[i] > 0) & (arrs[j] > 0)
            d = 0.0 if not both.any() else float(np.sqrt(np.mean((arrs[i][both] - arrs[j][both]) ** 2)))
            out[i, j] = out[j, i] = d
    return out
