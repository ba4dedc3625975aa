"""Text preprocessing: sentence splitting, tokenization, cleanup.

The pipeline is rule-based and fully deterministic:

    split_sentences(doc)      -> list of sentence strings
    tokenize(sentence)        -> list of surface tokens
    preprocess(tokens, cfg)   -> cleaned token list (may be empty)

All functions are pure; they can be called concurrently from any number
of workers.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

# Characters considered punctuation for token peeling and punctuation-only
# token removal.  ASCII punctuation plus common unicode quotes/dashes.
PUNCT_CHARS = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~") | set("‘’“”–—…")

# Abbreviations whose trailing period never ends a sentence.  Stored
# lowercased, with the period included.
ABBREVIATIONS = {
    "e.g.", "i.e.", "cf.", "vs.", "al.", "fig.", "figs.", "eq.", "eqs.",
    "ref.", "refs.", "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "no.",
    "vol.", "ca.", "approx.", "sp.", "spp.",
}

# Sentence boundary: terminal punctuation followed by whitespace and an
# uppercase letter or digit.
_BOUNDARY = re.compile(r"[.!?](?=\s+[A-Z0-9])")

_CONTRACTION = re.compile(r"(?i)^(.+)(n't|'s|'re|'ve|'ll|'d|'m)$")


def default_stopwords() -> frozenset[str]:
    """The bundled 170-entry English stopword list (lowercased)."""
    text = resources.files("sentvec").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w for w in text.split("\n") if w)


def load_stopwords(path: str) -> frozenset[str]:
    """Load a stopword list from a file, one entry per line."""
    with open(path, encoding="utf-8") as f:
        return frozenset(line.strip() for line in f if line.strip())


@dataclass(frozen=True)
class PrepConfig:
    """Cleanup options applied after tokenization.

    `stopword_list` entries must already be lowercased when
    `lowercase=True`.  `max_sentence_tokens` caps sentence length for
    downstream training (applied by the corpus pipeline, not by
    `preprocess` itself).
    """

    lowercase: bool = True
    stopword_list: frozenset[str] = field(default_factory=default_stopwords)
    strip_punctuation: bool = True
    max_sentence_tokens: int = 256

    def __post_init__(self):
        if any(not w for w in self.stopword_list):
            raise ValueError("stopword entries must be non-empty")
        if self.lowercase and any(w != w.lower() for w in self.stopword_list):
            raise ValueError("stopword entries must be lowercased when lowercase=True")
        if self.max_sentence_tokens < 1:
            raise ValueError("max_sentence_tokens must be positive")


@dataclass
class SentenceRecord:
    tokens: list[str]
    source_doc_id: str | None = None


@dataclass
class CorpusStats:
    documents: int = 0
    sentences: int = 0
    tokens: int = 0


def split_sentences(text: str) -> list[str]:
    """Split a document into sentences.

    A boundary is a '.', '!' or '?' followed by whitespace and an
    uppercase letter or digit, except when the preceding word is a known
    abbreviation.  Concatenating the returned sentences reproduces every
    non-whitespace character of the input.
    """
    if not text:
        return []
    cuts = []
    for m in _BOUNDARY.finditer(text):
        i = m.start()
        if text[i] == ".":
            # Word ending at this period, leading brackets/quotes stripped.
            j = i
            while j > 0 and not text[j - 1].isspace():
                j -= 1
            word = text[j : i + 1].lstrip("([{\"'‘“").lower()
            if word in ABBREVIATIONS:
                continue
        cuts.append(i + 1)
    sentences = []
    start = 0
    for cut in cuts + [len(text)]:
        sent = text[start:cut].strip()
        if sent:
            sentences.append(sent)
        start = cut
    return sentences


def tokenize(sentence: str) -> list[str]:
    """Tokenize one sentence with Treebank-style rules.

    Splits on whitespace, peels leading/trailing punctuation into their
    own tokens, and detaches common English contractions (n't, 's, 're,
    've, 'll, 'd, 'm).  Word-internal hyphens and periods are kept.
    """
    tokens: list[str] = []
    for chunk in sentence.split():
        leading: list[str] = []
        trailing: list[str] = []
        while chunk and chunk[0] in PUNCT_CHARS and len(chunk) > 1:
            leading.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in PUNCT_CHARS and len(chunk) > 1:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(leading)
        if chunk:
            m = _CONTRACTION.match(chunk)
            if m:
                tokens.append(m.group(1))
                tokens.append(m.group(2))
            else:
                tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens


def preprocess(tokens: Iterable[str], config: PrepConfig) -> list[str]:
    """Lowercase, drop stopwords and punctuation-only tokens.

    Order-preserving and idempotent.  May return an empty list; callers
    drop such records.
    """
    out = []
    for tok in tokens:
        if config.lowercase:
            tok = tok.lower()
        if config.strip_punctuation and tok and all(c in PUNCT_CHARS for c in tok):
            continue
        if tok in config.stopword_list:
            continue
        if tok:
            out.append(tok)
    return out


def corpus_stats(documents: Iterable[str]) -> CorpusStats:
    """Count documents, sentences and raw tokens (before cleanup)."""
    stats = CorpusStats()
    for doc in documents:
        stats.documents += 1
        for sent in split_sentences(doc):
            stats.sentences += 1
            stats.tokens += len(tokenize(sent))
    return stats


def iter_preprocessed(
    documents: Iterable[str],
    config: PrepConfig,
    split: bool = True,
) -> Iterator[list[str]]:
    """Full prep pipeline: split (optional), tokenize, clean, cap length.

    Empty records are dropped.  Sentences longer than
    `config.max_sentence_tokens` are truncated; a single warning with the
    total truncation count is logged at the end of the stream.
    """
    truncated = 0
    for doc in documents:
        sentences = split_sentences(doc) if split else [doc]
        for sent in sentences:
            toks = preprocess(tokenize(sent), config)
            if not toks:
                continue
            if len(toks) > config.max_sentence_tokens:
                toks = toks[: config.max_sentence_tokens]
                truncated += 1
            yield toks
    if truncated:
        logger.warning("truncated %d sentences to %d tokens", truncated, config.max_sentence_tokens)


def prep_sentence(sentence: str, config: PrepConfig) -> list[str]:
    """Tokenize and clean a single raw sentence (no sentence splitting)."""
    return preprocess(tokenize(sentence), config)
