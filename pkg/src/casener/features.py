"""Sparse feature extraction for sequence tagging.

Two template sets over a +/-2 token window.  CASE_AWARE adds word-shape and
capitalization-pattern features on top of case-free ones; CASE_AGNOSTIC
emits only features that cannot distinguish a sentence from its lowercased
form.  Word identities are stored lowercased in both sets, so casing is
carried exclusively by the shape/pattern features.
"""

from __future__ import annotations

import enum
from collections import Counter

from .corpus import Corpus, Sentence, extract_spans
from .truecase import CaseClass, classify_case

#: Offsets considered around the current position.
WINDOW = 2

_BOS = "<s>"
_EOS = "</s>"

_CAP_NAME = {
    CaseClass.LOWER: "AllLower",
    CaseClass.INIT_CAP: "InitCap",
    CaseClass.ALL_CAP: "AllCap",
    CaseClass.MIXED: "Mixed",
    CaseClass.NO_CASE: "NoCase",
}

_MAX_AFFIX = 4
_MAX_SHAPE_RUN = 4


class TemplateSet(enum.Enum):
    CASE_AWARE = "case_aware"
    CASE_AGNOSTIC = "case_agnostic"


def word_shape(word: str) -> str:
    """Character-class sketch: uppercase X, lowercase x, digit d, other #.

    Runs of one class are capped at four characters, so "York" -> "Xxxx"
    and "Acknowledgement" -> "Xxxxx".
    """
    out: list[str] = []
    run_char = ""
    run_len = 0
    for ch in word:
        if ch.isupper():
            cls = "X"
        elif ch.islower():
            cls = "x"
        elif ch.isdigit():
            cls = "d"
        else:
            cls = "#"
        if cls == run_char:
            run_len += 1
            if run_len <= _MAX_SHAPE_RUN:
                out.append(cls)
        else:
            run_char, run_len = cls, 1
            out.append(cls)
    return "".join(out)


def extract(sentence: Sentence, i: int, template_set: TemplateSet) -> set[str]:
    """Feature strings for position `i` of `sentence`.

    Out-of-range window offsets emit boundary sentinels instead of being
    skipped, so models can learn sentence-edge behavior.
    """
    n = len(sentence)
    if not 0 <= i < n:
        raise ValueError(f"position {i} out of range for a {n}-token sentence")
    case_aware = template_set is TemplateSet.CASE_AWARE
    feats: set[str] = set()

    for d in range(-WINDOW, WINDOW + 1):
        j = i + d
        if j < 0:
            feats.add(f"w{d}={_BOS}")
            if case_aware:
                feats.add(f"sh{d}={_BOS}")
        elif j >= n:
            feats.add(f"w{d}={_EOS}")
            if case_aware:
                feats.add(f"sh{d}={_EOS}")
        else:
            token = sentence.tokens[j]
            feats.add(f"w{d}={token.lower()}")
            if case_aware:
                feats.add(f"sh{d}={word_shape(token)}")

    word = sentence.tokens[i].lower()
    for length in range(1, min(_MAX_AFFIX, len(word)) + 1):
        feats.add(f"pre{length}={word[:length]}")
        feats.add(f"suf{length}={word[-length:]}")

    if case_aware:
        for d in (-1, 0, 1):
            j = i + d
            if j < 0:
                feats.add(f"cap{d}={_BOS}")
            elif j >= n:
                feats.add(f"cap{d}={_EOS}")
            else:
                feats.add(f"cap{d}={_CAP_NAME[classify_case(sentence.tokens[j])]}")

    if i == 0:
        feats.add("bos")
    return feats


def _cutoff_exempt(feature: str) -> bool:
    # Shape and capitalization patterns are a small closed set; keep them all.
    key = feature.partition("=")[0]
    return key.startswith("sh") or key.startswith("cap")


class FeatureMap:
    """Immutable bidirectional feature/tag <-> dense index mapping.

    Index order is fixed at construction; unknown feature strings map to
    None (absent) rather than growing the map.
    """

    __slots__ = ("features", "tags", "_feature_index", "_tag_index")

    def __init__(self, features: tuple[str, ...], tags: tuple[str, ...]) -> None:
        features = tuple(features)
        tags = tuple(tags)
        if len(set(features)) != len(features):
            raise ValueError("duplicate feature strings")
        if len(set(tags)) != len(tags):
            raise ValueError("duplicate tags")
        if not tags:
            raise ValueError("a feature map needs at least one tag")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(
            self, "_feature_index", {f: i for i, f in enumerate(features)}
        )
        object.__setattr__(self, "_tag_index", {t: i for i, t in enumerate(tags)})

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("FeatureMap is immutable")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.features == other.features and self.tags == other.tags

    def __hash__(self) -> int:
        return hash((self.features, self.tags))

    def __repr__(self) -> str:
        return (
            f"FeatureMap({len(self.features)} features, {len(self.tags)} tags)"
        )

    @property
    def num_features(self) -> int:
        return len(self.features)

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    def feature_index(self, feature: str) -> int | None:
        """Dense index of `feature`, or None if absent."""
        return self._feature_index.get(feature)

    def tag_index(self, tag: str) -> int:
        try:
            return self._tag_index[tag]
        except KeyError:
            raise ValueError(f"unknown tag {tag!r}") from None


def fit_feature_map(
    corpus: Corpus, template_set: TemplateSet, min_count: int = 1
) -> FeatureMap:
    """Collect features occurring >= `min_count` times plus the corpus tag set.

    Shape/pattern features are exempt from the cutoff.  Feature indices are
    assigned lexicographically; the tag list puts "O" first and closes the
    IOBES label space over every entity type seen (all of B/I/E/S per type),
    so decoding constraints are always well-formed.
    """
    if len(corpus) == 0:
        raise ValueError("cannot fit a feature map on an empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be at least 1")

    counts: Counter[str] = Counter()
    types: set[str] = set()
    for ann in corpus:
        for i in range(len(ann.sentence)):
            counts.update(extract(ann.sentence, i, template_set))
        types.update(span.entity_type for span in extract_spans(ann.gold))

    kept = sorted(
        f for f, n in counts.items() if n >= min_count or _cutoff_exempt(f)
    )
    tags = ("O",) + tuple(
        sorted(f"{p}-{t}" for t in types for p in ("B", "I", "E", "S"))
    )
    return FeatureMap(tuple(kept), tags)
