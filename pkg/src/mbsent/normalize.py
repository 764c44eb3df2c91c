"""Deterministic normalization pipeline for colloquial Persian text.

Fixed stage order:

1. Unicode NFC.
2. Character-map normalization (Arabic letterforms to Persian, drop
   tatweel and Arabic diacritics). The map is a versioned table; golden
   fixtures depend on it, so extending it means bumping CHAR_MAP_VERSION.
3. Emoji replacement: every inventory emoji, including runs written with
   no separator, becomes its name token.
4. Removal of URLs, @mentions, hashtag markers (the tag word is kept),
   date-time patterns, and digit runs (Persian, Arabic-Indic, ASCII).
5. Removal of remaining punctuation, symbols, marks, and format
   characters. ZWNJ and underscore survive; out-of-inventory emoji are
   symbols and die here.
6. De-elongation: any character run of length >= 3 collapses to one.
7. Whitespace tokenization.

The pipeline is pure and idempotent on its own token output.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from importlib import resources

CHAR_MAP_VERSION = 1
CHAR_MAP = {
    "ي": "ی",  # ي -> ی
    "ى": "ی",  # ى -> ی
    "ك": "ک",  # ك -> ک
}
# tatweel + Arabic harakat/superscript alef
_DROP_CHARS = re.compile("[ـً-ْٰ]")

ZWNJ = "‌"

_URL = re.compile(r"(?:https?://\S+|\bwww\.\S+)", re.IGNORECASE)
_MENTION = re.compile(r"@[A-Za-z0-9_.]+")
_DATETIME = re.compile(
    r"\d{1,4}[./-]\d{1,2}[./-]\d{1,4}"  # dates with / - or .
    r"|\d{1,2}:\d{2}(?::\d{2})?"  # clock times
)
_NUMBER = re.compile(r"\d+(?:[.,٫٬]\d+)*")
_HASHTAG_MARK = re.compile(r"#")
_ELONGATION = re.compile(r"(.)\1{2,}", re.DOTALL)

REMOVED_KINDS = ("url", "mention", "hashtag", "number", "datetime", "punctuation")


@dataclass
class NormalizationReport:
    tokens: tuple[str, ...]
    emoji_count: int
    removed_spans: list[tuple[str, str]]


class EmojiInventory:
    """Emoji sequence -> lowercase underscore-joined name token."""

    NAME_RE = re.compile(r"[a-z0-9_]+\Z")

    def __init__(self, mapping: dict[str, str]):
        for seq, name in mapping.items():
            if not seq:
                raise ValueError("empty emoji sequence")
            if not self.NAME_RE.match(name):
                raise ValueError(f"bad emoji name {name!r} for {seq!r}")
        self.mapping = dict(mapping)
        self._max_len = max((len(k) for k in mapping), default=0)
        self.names = frozenset(mapping.values())

    @classmethod
    def from_tsv(cls, path) -> "EmojiInventory":
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{line_no}: expected 2 fields")
                mapping[parts[0]] = parts[1]
        return cls(mapping)

    @classmethod
    def default(cls) -> "EmojiInventory":
        ref = resources.files("mbsent").joinpath("data/emoji_names.tsv")
        with resources.as_file(ref) as path:
            return cls.from_tsv(path)

    def match_at(self, text: str, i: int) -> str | None:
        """Longest inventory key starting at text[i], or None."""
        limit = min(self._max_len, len(text) - i)
        for length in range(limit, 0, -1):
            if text[i : i + length] in self.mapping:
                return text[i : i + length]
        return None


def _is_kept_char(ch: str) -> bool:
    if ch.isspace() or ch == ZWNJ or ch == "_":
        return True
    return unicodedata.category(ch).startswith("L")


def _replace_emoji(text: str, inventory: EmojiInventory) -> tuple[str, int]:
    out = []
    count = 0
    i = 0
    while i < len(text):
        seq = inventory.match_at(text, i)
        if seq is not None:
            out.append(f" {inventory.mapping[seq]} ")
            count += 1
            i += len(seq)
        else:
            out.append(text[i])
            i += 1
    return "".join(out), count


def _remove_pattern(
    text: str, pattern: re.Pattern, kind: str, spans: list[tuple[str, str]]
) -> str:
    def record(match: re.Match) -> str:
        spans.append((kind, match.group(0)))
        return " "

    return pattern.sub(record, text)


def normalize(text: str, inventory: EmojiInventory | None = None) -> NormalizationReport:
    if inventory is None:
        inventory = EmojiInventory.default()
    spans: list[tuple[str, str]] = []

    text = unicodedata.normalize("NFC", text)
    text = "".join(CHAR_MAP.get(ch, ch) for ch in text)
    text = _DROP_CHARS.sub("", text)

    text, emoji_count = _replace_emoji(text, inventory)

    text = _remove_pattern(text, _URL, "url", spans)
    text = _remove_pattern(text, _MENTION, "mention", spans)
    text = _remove_pattern(text, _DATETIME, "datetime", spans)
    text = _remove_pattern(text, _NUMBER, "number", spans)
    text = _remove_pattern(text, _HASHTAG_MARK, "hashtag", spans)

    # stage 5: sweep anything that is not a letter, whitespace, ZWNJ, or _
    kept = []
    run: list[str] = []
    for ch in text:
        if _is_kept_char(ch):
            if run:
                spans.append(("punctuation", "".join(run)))
                run = []
            kept.append(ch)
        else:
            run.append(ch)
            kept.append(" ")
    if run:
        spans.append(("punctuation", "".join(run)))
    text = "".join(kept)

    text = _ELONGATION.sub(r"\1", text)

    tokens = tuple(
        stripped for tok in text.split() if (stripped := tok.strip(ZWNJ))
    )
    return NormalizationReport(
        tokens=tokens, emoji_count=emoji_count, removed_spans=spans
    )


def is_idempotent_check(text: str, inventory: EmojiInventory | None = None) -> bool:
    """True when re-normalizing the joined token output changes nothing."""
    if inventory is None:
        inventory = EmojiInventory.default()
    first = normalize(text, inventory)
    second = normalize(" ".join(first.tokens), inventory)
    return first.tokens == second.tokens
