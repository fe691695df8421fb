import pytest

from casener.corpus import EntitySpan, Scheme, TagSequence, spans_to_tags
from casener.crf import TrainConfig, train
from casener.evaluation import Metrics, evaluate, metrics_lines, robustness_grid
from casener.features import TemplateSet
from casener.transforms import CaseVariant
from casener.truecase import train_truecaser
from casener.synth import default_config, generate
from conftest import random_tagging
from oracles import conlleval_counts


def seq(*tags: str) -> TagSequence:
    return TagSequence(tuple(tags), Scheme.IOBES)


class TestEvaluate:
    def test_perfect_prediction(self):
        gold = [seq("O", "O", "O", "B-ORG", "I-ORG", "E-ORG")]
        metrics = evaluate(gold, gold)
        assert metrics.precision == metrics.recall == metrics.f1 == 1.0

    def test_half_right_hand_count(self):
        gold = [spans_to_tags(
            [EntitySpan(0, 0, "LOC"), EntitySpan(3, 5, "ORG")], 6, Scheme.IOBES
        )]
        pred = [spans_to_tags(
            [EntitySpan(1, 1, "LOC"), EntitySpan(3, 5, "ORG")], 6, Scheme.IOBES
        )]
        metrics = evaluate(pred, gold)
        assert metrics.true_positives == 1
        assert metrics.precision == 0.5
        assert metrics.recall == 0.5
        assert metrics.f1 == 0.5

    def test_all_o_prediction(self):
        gold = [seq("S-LOC", "O")]
        pred = [seq("O", "O")]
        metrics = evaluate(pred, gold)
        assert metrics.precision == 0.0
        assert metrics.recall == 0.0
        assert metrics.f1 == 0.0

    def test_zero_gold_zero_pred(self):
        metrics = evaluate([seq("O")], [seq("O")])
        assert metrics == Metrics.from_counts(0, 0, 0)
        assert metrics.f1 == 0.0

    def test_type_must_match(self):
        gold = [seq("S-LOC")]
        pred = [seq("S-PER")]
        assert evaluate(pred, gold).true_positives == 0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            evaluate([seq("O")], [seq("O"), seq("O")])
        with pytest.raises(ValueError):
            evaluate([seq("O")], [seq("O", "O")])

    def test_micro_counts_equal_sum_of_per_type(self, rng):
        for _ in range(20):
            n = rng.randint(1, 12)
            gold = [random_tagging(rng, rng.randint(1, 9)) for _ in range(n)]
            pred = [random_tagging(rng, len(g)) for g in gold]
            metrics = evaluate(pred, gold)
            assert metrics.true_positives == sum(
                m.true_positives for m in metrics.per_type.values()
            )
            assert metrics.predicted_count == sum(
                m.predicted_count for m in metrics.per_type.values()
            )
            assert metrics.gold_count == sum(
                m.gold_count for m in metrics.per_type.values()
            )

    def test_permutation_invariance(self, rng):
        n = 10
        gold = [random_tagging(rng, rng.randint(1, 8)) for _ in range(n)]
        pred = [random_tagging(rng, len(g)) for g in gold]
        base = evaluate(pred, gold)
        order = list(range(n))
        rng.shuffle(order)
        shuffled = evaluate([pred[i] for i in order], [gold[i] for i in order])
        assert shuffled == base

    def test_agreement_with_conlleval_oracle(self, rng):
        for _ in range(50):
            n = rng.randint(1, 10)
            gold = [random_tagging(rng, rng.randint(1, 9)) for _ in range(n)]
            pred = [random_tagging(rng, len(g)) for g in gold]
            metrics = evaluate(pred, gold)
            tp, pred_n, gold_n, per_type = conlleval_counts(pred, gold)
            assert metrics.true_positives == tp
            assert metrics.predicted_count == pred_n
            assert metrics.gold_count == gold_n
            for etype, (ttp, tpred, tgold) in per_type.items():
                sub = metrics.per_type.get(etype, Metrics.from_counts(0, 0, 0))
                assert (sub.true_positives, sub.predicted_count,
                        sub.gold_count) == (ttp, tpred, tgold)

    def test_metrics_lines_format(self):
        metrics = Metrics.from_counts(1, 2, 4)
        lines = metrics_lines(metrics, prefix="x.")
        assert "x.tp=1" in lines
        assert "x.precision=0.5" in lines
        assert "x.recall=0.25" in lines


@pytest.fixture(scope="module")
def setup():
    cfg = default_config(seed=9, train_sentences=120, test_sentences=40)
    train_corpus, test_corpus = generate(cfg)
    model = train(train_corpus, TemplateSet.CASE_AWARE,
                  TrainConfig(max_epochs=60))
    return model, train_corpus, test_corpus


class TestRobustnessGrid:
    def test_original_cell_equals_plain_evaluate(self, setup):
        from casener.crf import decode

        model, _, test_corpus = setup
        grid = robustness_grid(model, test_corpus)
        direct = evaluate(
            [decode(model, ann.sentence) for ann in test_corpus],
            [ann.gold for ann in test_corpus],
        )
        assert grid[CaseVariant.ORIGINAL] == direct

    def test_caseless_rows_equal(self, setup):
        from casener.harness import Strategy, training_view

        _, train_corpus, test_corpus = setup
        view, tset = training_view(train_corpus, Strategy.CASELESS)
        model = train(view, tset, TrainConfig(max_epochs=60))
        grid = robustness_grid(model, test_corpus, caseless=True)
        assert grid[CaseVariant.ORIGINAL] == grid[CaseVariant.LOWER]
        assert grid[CaseVariant.ORIGINAL] == grid[CaseVariant.UPPER]

    def test_truecasing_rows_equal(self, setup):
        model, train_corpus, test_corpus = setup
        caser = train_truecaser(train_corpus)
        grid = robustness_grid(model, test_corpus, truecaser=caser)
        assert grid[CaseVariant.ORIGINAL] == grid[CaseVariant.LOWER]
        assert grid[CaseVariant.ORIGINAL] == grid[CaseVariant.UPPER]

    def test_truecaser_and_caseless_exclusive(self, setup):
        model, train_corpus, test_corpus = setup
        caser = train_truecaser(train_corpus)
        with pytest.raises(ValueError):
            robustness_grid(model, test_corpus, truecaser=caser, caseless=True)
