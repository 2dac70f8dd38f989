"""Chink/chunk prosodic phrasing.

Words are split into two classes: *chinks* (function words and tensed verbs)
and *chunks* (content words and objective pronouns).  A phrase is a greedy
match of ``chink* chunk*``: a new phrase starts whenever a chink follows a
chunk.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .errors import FormatError, MissingAlignment, OverlapError


class Klass(enum.Enum):
    CHINK = "chink"
    CHUNK = "chunk"


FUNCTION_WORDS = frozenset("""
a an the this that these those some any no every each either neither another both
such what which whose
of in on at by for with from to into onto upon about above across after
against along among around before behind below beneath beside besides between
beyond down during except inside like near off out outside over past since
through throughout till toward towards under underneath until up via within
without
and or but nor so yet if because although though unless while whereas whether
than as once lest
be am is are was were been being do does did done doing have has had having
will would shall should can could may might must ought
i you he she it we they one
my your his its our their
who whom where when why how
not n't there here then
's 're 've 'll 'd 'm
""".split())

OBJECTIVE_PRONOUNS = frozenset("me him her us them myself yourself himself herself "
                               "ourselves themselves".split())

# Verb forms that are always tensed; auxiliaries are covered by FUNCTION_WORDS.
TENSED_VERBS = frozenset("""
said went came saw took got made knew thought told gave found felt left kept
began ran sat stood heard brought became held wrote meant met paid put set
let lost sent fell grew drew threw flew wore tore won sang rang swam climbed
wanted tugged cried looked pulled called asked walked lived loved liked
says goes comes sees takes gets makes knows thinks tells gives finds wants think
""".split())

FUNCTION_TAGS = frozenset({"DT", "PDT", "IN", "CC", "TO", "MD", "PRP", "PRP$", "WDT",
                           "WP", "WP$", "WRB", "EX", "RP", "POS"})
TENSED_TAGS = frozenset({"VBD", "VBZ", "VBP"})
UNTENSED_VERB_TAGS = frozenset({"VB", "VBG", "VBN"})
OBJECT_TAGS = frozenset({"PRP-OBJ"})

_PUNCT = re.compile(r"^[^\w']+$")
_QUOTES = "\"“”’"
NEGATION = "n't"


@dataclass(frozen=True)
class Lexicon:
    function_words: frozenset = FUNCTION_WORDS
    objective_pronouns: frozenset = OBJECTIVE_PRONOUNS
    tensed_verbs: frozenset = TENSED_VERBS

    @classmethod
    def default(cls) -> "Lexicon":
        return cls()

    @classmethod
    def from_file(cls, path, base: "Lexicon | None" = None) -> "Lexicon":
        """Load an override file with ``[function_words]``-style sections.

        Listed words are added to the given (default) lexicon.
        """
        base = base or cls()
        sections = {"function_words": set(), "objective_pronouns": set(),
                    "tensed_verbs": set()}
        current = None
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if line.startswith("[") and line.endswith("]"):
                    current = line[1:-1].strip()
                    if current not in sections:
                        raise FormatError(f"unknown section [{current}]", path, lineno)
                    continue
                if current is None:
                    raise FormatError("word outside of a section", path, lineno)
                sections[current].add(line.lower())
        return cls(base.function_words | sections["function_words"],
                   base.objective_pronouns | sections["objective_pronouns"],
                   base.tensed_verbs | sections["tensed_verbs"])


@dataclass(frozen=True)
class Token:
    text: str
    pos: str | None = None
    klass: Klass = field(default=None)

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if self.klass is None:
            object.__setattr__(self, "klass", classify_token(self.text, self.pos))


@dataclass(frozen=True)
class Phrase:
    tokens: tuple
    index: int

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)

    def __len__(self):
        return len(self.tokens)


def _looks_tensed(word: str) -> bool:
    # used only when no POS tag is available
    return len(word) > 3 and word.endswith("ed")


def classify_token(token_text: str, pos: str | None = None,
                   lexicon: Lexicon | None = None) -> Klass:
    """Chink or chunk, by priority: objective pronoun, tensed verb, function word."""
    if not token_text:
        raise ValueError("token text must be non-empty")
    lex = lexicon or _DEFAULT_LEXICON
    word = token_text.lower()
    tag = pos.upper() if pos else None

    if word in lex.objective_pronouns or tag in OBJECT_TAGS:
        return Klass.CHUNK
    if tag is not None:
        if tag in TENSED_TAGS:
            return Klass.CHINK
        if tag in UNTENSED_VERB_TAGS:
            return Klass.CHINK if word in lex.function_words else Klass.CHUNK
    elif word in lex.tensed_verbs or _looks_tensed(word):
        return Klass.CHINK
    if word in lex.function_words or (tag is not None and tag in FUNCTION_TAGS):
        return Klass.CHINK
    return Klass.CHUNK


_DEFAULT_LEXICON = Lexicon()


def parse_phrases(tokens) -> list[Phrase]:
    """Greedy ``chink* chunk*`` segmentation of a token sequence."""
    phrases = []
    current = []
    seen_chunk = False
    for tok in tokens:
        if tok.klass is Klass.CHINK and seen_chunk:
            phrases.append(Phrase(tuple(current), len(phrases)))
            current, seen_chunk = [], False
        current.append(tok)
        if tok.klass is Klass.CHUNK:
            seen_chunk = True
    if current:
        phrases.append(Phrase(tuple(current), len(phrases)))
    return phrases


def split_contractions(word: str) -> list[str]:
    """``What's`` -> ``What 's``; ``didn't`` -> ``did n't``."""
    lower = word.lower()
    if lower.endswith("n't") and len(word) > 3:
        return [word[:-3], word[-3:]]
    for suffix in ("'s", "'re", "'ve", "'ll", "'d", "'m"):
        if lower.endswith(suffix) and len(word) > len(suffix):
            return [word[: -len(suffix)], word[-len(suffix):]]
    return [word]


def tokenize(line: str, lexicon: Lexicon | None = None):
    """Tokenise one sentence line.

    Items are whitespace separated, optionally ``word/TAG``.  Punctuation is
    stripped; the sentence-final mark (if any) is returned separately.
    Returns ``(tokens, final_punct)``.
    """
    lexicon = lexicon or _DEFAULT_LEXICON
    tokens = []
    final = None
    after_quote = False
    for item in line.split():
        word, tag = item, None
        if "/" in item and not item.startswith("/"):
            word, _, tag = item.rpartition("/")
        stripped = word.strip("\"“”‘’,.;:!?()[]")
        trail = word[len(word.rstrip("\"“”‘’,.;:!?()[]")):]
        if not stripped or _PUNCT.match(stripped):
            after_quote = after_quote or any(ch in _QUOTES for ch in word)
            continue
        parts = split_contractions(stripped) if tag is None else [stripped]
        negated = len(parts) == 2 and parts[1].lower() == NEGATION
        for part in parts:
            klass = classify_token(part, tag, lexicon)
            if negated:
                # stressed negative auxiliary: content-like
                klass = Klass.CHUNK
            elif after_quote and tokens and klass is Klass.CHINK \
                    and _is_verb(part, tag, lexicon):
                # quotative verb after direct speech does not open a phrase
                klass = Klass.CHUNK
            tokens.append(Token(part, tag, klass))
            after_quote = False
        after_quote = any(ch in _QUOTES for ch in trail)
        final = None
        for ch in trail:
            if ch in ".!?":
                final = ch
    return tokens, final


def _is_verb(word: str, tag: str | None, lexicon: Lexicon) -> bool:
    if tag is not None:
        return tag.upper().startswith("VB")
    return word.lower() in lexicon.tensed_verbs or _looks_tensed(word.lower())


def phrase_frame_ranges(phrases, word_alignment) -> list[tuple[int, int]]:
    """Frame range ``[start, end)`` of each phrase from per-token spans.

    ``word_alignment`` holds one ``(start, end)`` span per token, in token
    order.  Spans must be contiguous and non-overlapping.
    """
    n_tokens = sum(len(p.tokens) for p in phrases)
    spans = list(word_alignment)
    if len(spans) < n_tokens:
        raise MissingAlignment(f"{n_tokens} tokens but only {len(spans)} spans")
    for i, (s, e) in enumerate(spans[:n_tokens]):
        if e <= s:
            raise MissingAlignment(f"empty span for token {i}")
        if i > 0:
            prev_end = spans[i - 1][1]
            if s < prev_end:
                raise OverlapError(f"span {i} starts at {s} before previous end {prev_end}")
            if s > prev_end:
                raise MissingAlignment(f"frames {prev_end}..{s} between tokens {i - 1} and {i}"
                                       " are not aligned to any token")
    ranges = []
    pos = 0
    for p in phrases:
        first = spans[pos]
        last = spans[pos + len(p.tokens) - 1]
        ranges.append((int(first[0]), int(last[1])))
        pos += len(p.tokens)
    return ranges
