from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import settings

from casener.corpus import (
    AnnotatedSentence,
    Corpus,
    EntitySpan,
    Scheme,
    Sentence,
    spans_to_tags,
)
from casener.crf import CrfModel
from casener.features import FeatureMap, TemplateSet, fit_feature_map

settings.register_profile("suite", derandomize=True, max_examples=60)
settings.load_profile("suite")

_WORDS = [
    "the", "a", "in", "on", "said", "met", "news", "old", "river", "talks",
    "boston", "oslo", "acme", "baker", "york", "city", "report", "monday",
]
_CASINGS = (str.lower, str.upper, str.capitalize)


def random_sentence(rng: random.Random, max_len: int = 8) -> Sentence:
    n = rng.randint(1, max_len)
    tokens = []
    for _ in range(n):
        word = rng.choice(_WORDS)
        tokens.append(rng.choice(_CASINGS)(word))
    return Sentence(tuple(tokens))


def random_tagging(
    rng: random.Random, length: int, types: tuple[str, ...] = ("PER", "LOC")
):
    """A random valid IOBES tagging for a sentence of `length` tokens."""
    spans = []
    i = 0
    while i < length:
        if rng.random() < 0.4:
            end = min(length - 1, i + rng.randint(0, 2))
            spans.append(EntitySpan(i, end, rng.choice(types)))
            i = end + 1
        else:
            i += 1
    return spans_to_tags(spans, length, Scheme.IOBES)


def random_corpus(rng: random.Random, sentences: int = 20) -> Corpus:
    annotated = []
    for _ in range(sentences):
        sent = random_sentence(rng)
        annotated.append(AnnotatedSentence(sent, random_tagging(rng, len(sent))))
    return Corpus(tuple(annotated), "random test corpus")


def random_model(
    rng: random.Random,
    corpus: Corpus | None = None,
    template_set: TemplateSet = TemplateSet.CASE_AWARE,
    scale: float = 2.0,
    tags: tuple[str, ...] | None = None,
) -> CrfModel:
    """A CRF with random uniform[-scale, scale] weights.

    The feature map comes from fitting on `corpus` (or a fresh random one);
    `tags` can override the label space, e.g. to shrink K.
    """
    corpus = corpus or random_corpus(rng, sentences=6)
    fitted = fit_feature_map(corpus, template_set)
    fmap = FeatureMap(fitted.features, tags or fitted.tags)
    f, k = fmap.num_features, fmap.num_tags
    uniform = lambda size: np.array(  # noqa: E731
        [rng.uniform(-scale, scale) for _ in range(size)]
    )
    return CrfModel(
        fmap,
        template_set,
        uniform(f * k).reshape(f, k),
        uniform(k),
        uniform(k),
        uniform(k * k).reshape(k, k),
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(12345)
