"""Word classes and English plurals for LOC object checks."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

IRREGULAR_PLURALS = {
    "person": "people",
    "child": "children",
    "man": "men",
    "woman": "women",
    "foot": "feet",
    "mouse": "mice",
    "goose": "geese",
    "leaf": "leaves",
}
_IRREGULAR_SINGULARS = {v: k for k, v in IRREGULAR_PLURALS.items()}


def _load(name: str) -> frozenset[str]:
    text = resources.files("planscript").joinpath("data").joinpath(name).read_text("utf-8")
    words = set()
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        words.update(w.lower() for w in line.split())
    return frozenset(words)


@lru_cache(maxsize=None)
def nouns() -> frozenset[str]:
    return _load("nouns.txt")


@lru_cache(maxsize=None)
def non_nouns() -> frozenset[str]:
    return _load("non_nouns.txt") - nouns()


def pluralize(word: str) -> str:
    if word in IRREGULAR_PLURALS:
        return IRREGULAR_PLURALS[word]
    if word.endswith(("s", "x", "z", "ch", "sh")):
        return word + "es"
    if len(word) > 1 and word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


def singular_candidates(word: str) -> list[str]:
    """Possible singular stems of ``word``, most specific first."""
    if word in _IRREGULAR_SINGULARS:
        return [_IRREGULAR_SINGULARS[word]]
    out = []
    if word.endswith("ies") and len(word) > 3:
        out.append(word[:-3] + "y")
    if word.endswith("es") and len(word) > 2:
        out.append(word[:-2])
    if word.endswith("s") and len(word) > 1:
        out.append(word[:-1])
    return out


def is_plural(word: str) -> bool:
    if word in _IRREGULAR_SINGULARS:
        return True
    if word in nouns() and not word.endswith("s"):
        return False
    known = nouns()
    return any(stem in known and pluralize(stem) == word for stem in singular_candidates(word))


def word_class(word: str) -> str:
    """``"noun"`` or ``"other"``.

    Lexicon hits decide; unknown words ending in -ing/-ed/-ly are treated as
    non-nouns and every other unknown word as a noun.
    """
    word = word.lower()
    if word in nouns() or word in _IRREGULAR_SINGULARS:
        return "noun"
    if word in non_nouns():
        return "other"
    if any(stem in nouns() for stem in singular_candidates(word)):
        return "noun"
    if word.endswith(("ing", "ed", "ly")):
        return "other"
    return "noun"
