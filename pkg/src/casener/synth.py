"""Deterministic synthetic corpus generator for capitalization experiments.

Sentences are drawn from context templates with entity slots filled from
per-type gazetteers.  The vocabulary is built so that capitalization
carries real signal: some gazetteer entries double as common nouns and are
only entities when capitalized, acronym organizations are all-caps, and a
slice of test entities never occurs in training.  Gold tags are derived
from the slot positions, so annotations are scheme-valid by construction.

Slot syntax inside templates: ``{PER}``/``{LOC}``/``{ORG}`` draw an entity
of that type, ``{ANY}`` draws a random type, and ``{AMB:TYPE}`` flips a
coin between an ambiguous entity of TYPE and its common-noun decoy.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .corpus import (
    AnnotatedSentence,
    Corpus,
    EntitySpan,
    Scheme,
    Sentence,
    extract_spans,
    spans_to_tags,
)

#: Probability that an {AMB:TYPE} slot resolves to an entity rather than a
#: decoy noun.
AMB_ENTITY_PROBABILITY = 0.5

#: Gazetteer split: training draws from the first fraction, test from the
#: last; the overlap region supplies entities seen on both sides.
_TRAIN_POOL_FRACTION = 0.80
_TEST_POOL_START = 0.30


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    train_sentences: int
    test_sentences: int
    noise_rate: float
    gazetteers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    templates: tuple[tuple[str, ...], ...] = ()
    decoys: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gazetteers", dict(self.gazetteers))
        object.__setattr__(self, "decoys", dict(self.decoys))
        if self.train_sentences < 1 or self.test_sentences < 1:
            raise ValueError("sentence counts must be at least 1")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if not self.gazetteers:
            raise ValueError("at least one gazetteer is required")
        for etype, entries in self.gazetteers.items():
            if not entries:
                raise ValueError(f"gazetteer for {etype!r} is empty")
        if not self.templates:
            raise ValueError("at least one template is required")
        for template in self.templates:
            for token in template:
                slot = _parse_slot(token)
                if slot is None:
                    continue
                kind, etype = slot
                if kind in ("type", "amb") and etype not in self.gazetteers:
                    raise ValueError(
                        f"template slot {token!r} references unknown type"
                    )
                if kind == "amb" and not self.decoys.get(etype):
                    raise ValueError(
                        f"template slot {token!r} needs decoys for {etype!r}"
                    )


def _parse_slot(token: str) -> tuple[str, str | None] | None:
    if not (token.startswith("{") and token.endswith("}")):
        return None
    inner = token[1:-1]
    if inner == "ANY":
        return "any", None
    if inner.startswith("AMB:"):
        return "amb", inner[4:]
    return "type", inner


def _split_pools(
    rng: random.Random, gazetteers: Mapping[str, tuple[str, ...]]
) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    train: dict[str, list[str]] = {}
    test: dict[str, list[str]] = {}
    for etype in sorted(gazetteers):
        entries = list(gazetteers[etype])
        rng.shuffle(entries)
        n = len(entries)
        train_end = max(1, round(n * _TRAIN_POOL_FRACTION))
        test_start = min(n - 1, round(n * _TEST_POOL_START))
        train[etype] = entries[:train_end]
        test[etype] = entries[test_start:]
    return train, test


def _ambiguous_subset(
    pool: list[str], decoys: Mapping[str, tuple[str, ...]], etype: str
) -> list[str]:
    noun_forms = set(decoys.get(etype, ()))
    subset = [e for e in pool if e.lower() in noun_forms]
    return subset or pool


def _make_sentence(
    rng: random.Random,
    cfg: SynthConfig,
    pools: Mapping[str, list[str]],
) -> AnnotatedSentence:
    template = rng.choice(cfg.templates)
    tokens: list[str] = []
    spans: list[EntitySpan] = []
    entity_positions: set[int] = set()

    for element in template:
        slot = _parse_slot(element)
        if slot is None:
            tokens.append(element)
            continue
        kind, etype = slot
        if kind == "any":
            etype = rng.choice(sorted(cfg.gazetteers))
        assert etype is not None
        if kind == "amb" and rng.random() >= AMB_ENTITY_PROBABILITY:
            tokens.append(rng.choice(cfg.decoys[etype]))
            continue
        pool = (
            _ambiguous_subset(pools[etype], cfg.decoys, etype)
            if kind == "amb"
            else pools[etype]
        )
        phrase = rng.choice(pool)
        parts = phrase.split()
        if rng.random() < cfg.noise_rate:
            parts = [p.lower() for p in parts]
        start = len(tokens)
        tokens.extend(parts)
        entity_positions.update(range(start, start + len(parts)))
        spans.append(EntitySpan(start, start + len(parts) - 1, etype))

    if 0 not in entity_positions:
        first = tokens[0]
        tokens[0] = first[0].upper() + first[1:]

    gold = spans_to_tags(spans, len(tokens), Scheme.IOBES)
    return AnnotatedSentence(Sentence(tuple(tokens)), gold)


def generate(cfg: SynthConfig) -> tuple[Corpus, Corpus]:
    """Produce (train, test) corpora; fully deterministic given cfg.seed."""
    rng = random.Random(cfg.seed)
    train_pools, test_pools = _split_pools(rng, cfg.gazetteers)
    train = tuple(
        _make_sentence(rng, cfg, train_pools) for _ in range(cfg.train_sentences)
    )
    test = tuple(
        _make_sentence(rng, cfg, test_pools) for _ in range(cfg.test_sentences)
    )
    label = (
        f"synthetic seed={cfg.seed} noise_rate={cfg.noise_rate} "
        f"train={cfg.train_sentences} test={cfg.test_sentences}"
    )
    return (
        Corpus(train, f"{label} (training split)"),
        Corpus(test, f"{label} (test split)"),
    )


def vocabulary_overlap(train: Corpus, test: Corpus) -> dict[str, float]:
    """How much of the test data was seen in training (lowercased).

    Needed to interpret robustness numbers: unseen entities are exactly the
    ones whose recognition must rest on orthographic or contextual cues.
    """
    def token_vocab(corpus: Corpus) -> set[str]:
        return {
            token.lower() for ann in corpus for token in ann.sentence.tokens
        }

    def entity_vocab(corpus: Corpus) -> set[tuple[str, ...]]:
        out = set()
        for ann in corpus:
            for span in extract_spans(ann.gold):
                surface = tuple(
                    ann.sentence.tokens[i].lower()
                    for i in range(span.start, span.end + 1)
                )
                out.add(surface)
        return out

    train_tokens = token_vocab(train)
    test_tokens = token_vocab(test)
    train_entities = entity_vocab(train)
    test_entities = entity_vocab(test)
    return {
        "test_token_types": float(len(test_tokens)),
        "test_token_types_seen": (
            len(test_tokens & train_tokens) / len(test_tokens)
            if test_tokens
            else 0.0
        ),
        "test_entity_types": float(len(test_entities)),
        "test_entity_types_seen": (
            len(test_entities & train_entities) / len(test_entities)
            if test_entities
            else 0.0
        ),
    }


_PER_FIRST = (
    "Anna", "James", "Maria", "Peter", "Susan", "David", "Laura", "Kevin",
    "Nadia", "Omar", "Wei", "Yuki", "Carlos", "Elena", "Tomas", "Ingrid",
)
_PER_LAST = (
    "Ramirez", "Kowalski", "Tanaka", "Novak", "Haddad", "Larsen", "Moreau",
    "Petrov", "Okafor", "Silva", "Weber", "Rossi", "Dumont", "Eriksen",
    "Varga", "Lindqvist",
)
#: Surnames that double as common nouns; only capitalization separates the
#: entity reading from the noun reading.
_PER_AMBIGUOUS = (
    "Baker", "Hunter", "Fisher", "Mason", "Porter",
    "Cook", "Fox", "Stone", "Bush", "Wolf",
)
_LOC_PLAIN = (
    "Boston", "Oslo", "Cairo", "Lima", "Osaka", "Lagos", "Quito", "Geneva",
    "Dublin", "Madrid", "Naples", "Havana", "Kyoto", "Zurich", "Vienna",
    "Bogota", "Seoul", "Accra", "Tallinn", "Perth",
)
_LOC_AMBIGUOUS = (
    "Reading", "Mobile", "Buffalo", "Nice", "Orange", "Flint", "Bath", "Cork",
)
# All-caps acronyms give capitalization real weight: they teach a strong
# AllCap -> ORG association that misleads case-trusting models on
# upper-cased input.
_ORG_ACRONYM = (
    "IBM", "NASA", "OPEC", "FIFA", "NATO", "CERN", "UNESCO", "INTERPOL",
    "UNICEF", "WTO", "IMF", "ICAO", "OSCE", "ASEAN", "EFTA", "NORAD",
)
_ORG_NAMED = (
    "Acme Corp", "Orion Systems", "Vertex Industries", "Halcyon Group",
)

_DEFAULT_TEMPLATES = (
    # contexts that reveal the entity type
    "the minister met {PER} on friday",
    "{PER} told reporters the deal was close",
    "prosecutors said {PER} would appeal",
    "the jury heard {PER} on monday",
    "thousands marched in {LOC} yesterday",
    "the summit will be held in {LOC}",
    "heavy rain hit {LOC} over the weekend",
    "flights from {LOC} resumed on sunday",
    "shares of {ORG} fell sharply",
    "{ORG} announced record profits on monday",
    "regulators fined {ORG} after the inquiry",
    "a lawsuit against {ORG} was dismissed",
    # neutral contexts: the type must come from the entity itself
    "the report mentioned {ANY} again",
    "{ANY} was in the news this week",
    # frames where only capitalization separates entity from noun
    "the {AMB:PER} said the offer was fair",
    "they stopped near {AMB:LOC} before dark",
    # entity-free filler, including entity frames around plain nouns
    "the meeting was moved to monday",
    "officials said the talks had stalled",
    "shares of the company fell sharply",
    "the summit will be held in secret",
)


def default_config(
    seed: int = 42,
    train_sentences: int = 2000,
    test_sentences: int = 500,
    noise_rate: float = 0.05,
) -> SynthConfig:
    """The standard synthetic setup used by the experiment harness."""
    per = tuple(
        f"{first} {last}"
        for first, last in zip(_PER_FIRST + _PER_FIRST[:8], _PER_LAST + _PER_LAST[8:])
    ) + _PER_AMBIGUOUS
    return SynthConfig(
        seed=seed,
        train_sentences=train_sentences,
        test_sentences=test_sentences,
        noise_rate=noise_rate,
        gazetteers={
            "PER": per,
            "LOC": _LOC_PLAIN + _LOC_AMBIGUOUS,
            "ORG": _ORG_ACRONYM + _ORG_NAMED,
        },
        templates=tuple(
            tuple(template.split()) for template in _DEFAULT_TEMPLATES
        ),
        decoys={
            "PER": tuple(w.lower() for w in _PER_AMBIGUOUS),
            "LOC": tuple(w.lower() for w in _LOC_AMBIGUOUS),
        },
    )
