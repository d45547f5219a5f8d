import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ner_forge.corpus import Dataset, Sentence
from ner_forge.errors import DataError
from ner_forge.evaluation import EvalReport, calc_metrics, evaluate, evaluate_oracle, token_scores

POOL = ["O"] + [f"{p}-{t}" for p in "BI" for t in ("D", "C", "S")]


def gold_dataset(*tag_lists):
    return Dataset(tuple(Sentence.from_pairs([f"w{i}" for i in range(len(t))], t) for t in tag_lists))


def test_worked_example():
    gold = [["B-D", "I-D", "O", "B-C"]]
    predicted = [["B-D", "I-D", "B-C", "O"]]
    report = evaluate(gold, predicted)
    assert (report.tp, report.fp, report.fn) == (1, 1, 1)
    assert report.precision == report.recall == report.f1 == 0.5


def test_boundary_error_is_fp_and_fn():
    report = evaluate([["B-D", "I-D", "O"]], [["B-D", "I-D", "I-D"]])
    assert (report.tp, report.fp, report.fn) == (0, 1, 1)


def test_perfect_prediction():
    gold = gold_dataset(["B-D", "I-D", "O"], ["B-C"])
    report = evaluate(gold, [s.tags for s in gold])
    assert report.precision == report.recall == report.f1 == 1.0
    assert report.token_accuracy == 1.0


def test_all_outside_prediction():
    report = evaluate([["B-D", "O"]], [["O", "O"]])
    assert (report.tp, report.fp, report.fn) == (0, 0, 1)
    assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0


def test_dangling_inside_is_repaired():
    report = evaluate([["B-D", "I-D"]], [["I-D", "I-D"]])
    assert report.tp == 1 and report.fp == 0


def test_length_mismatch():
    with pytest.raises(DataError):
        evaluate([["O", "O"]], [["O"]])
    with pytest.raises(DataError):
        evaluate([["O"]], [["O"], ["O"]])


def test_calc_metrics_zero_denominators():
    assert calc_metrics(0, 0, 0) == (0.0, 0.0, 0.0)


def test_per_type_sums_to_micro():
    gold = [["B-D", "O", "B-C", "I-C"], ["B-S", "B-D"]]
    predicted = [["B-D", "B-C", "I-C", "O"], ["B-S", "O"]]
    report = evaluate(gold, predicted)
    assert report.tp == sum(s.tp for s in report.per_type.values())
    assert report.fp == sum(s.fp for s in report.per_type.values())
    assert report.fn == sum(s.fn for s in report.per_type.values())
    assert report.per_type["S"].f1 == 1.0


def test_single_token_spans_hand_count():
    gold = [["B-D", "O", "B-C", "O", "B-D"]]
    predicted = [["B-D", "B-C", "B-C", "O", "O"]]
    for scorer in (evaluate, evaluate_oracle):
        report = scorer(gold, predicted)
        assert (report.tp, report.fp, report.fn) == (2, 1, 1)


def test_empty_predictions_agree():
    gold = [["O", "O"], ["O"]]
    assert evaluate(gold, gold) == evaluate_oracle(gold, gold) == EvalReport(0, 0, 0, {}, 1.0)


def test_order_invariance():
    gold = [["B-D", "I-D"], ["O", "B-C"], ["B-S"]]
    predicted = [["B-D", "O"], ["O", "B-C"], ["B-D"]]
    forward = evaluate(gold, predicted)
    backward = evaluate(gold[::-1], predicted[::-1])
    assert (forward.tp, forward.fp, forward.fn, forward.f1) == (backward.tp, backward.fp, backward.fn, backward.f1)


def test_random_pairs_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        gold = [[POOL[i] for i in rng.integers(0, len(POOL), n)]]
        predicted = [[POOL[i] for i in rng.integers(0, len(POOL), n)]]
        assert evaluate(gold, predicted) == evaluate_oracle(gold, predicted)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=4).flatmap(
    lambda lengths: st.tuples(
        st.tuples(*[st.lists(st.sampled_from(POOL), min_size=n, max_size=n) for n in lengths]),
        st.tuples(*[st.lists(st.sampled_from(POOL), min_size=n, max_size=n) for n in lengths]),
    )
))
def test_multi_sentence_pairs_match_oracle(pair):
    gold, predicted = map(list, pair)
    assert evaluate(gold, predicted) == evaluate_oracle(gold, predicted)


def test_to_frame_layout():
    report = evaluate([["B-D", "O", "B-C"]], [["B-D", "O", "O"]])
    frame = report.to_frame()
    assert list(frame.columns) == ["type", "tp", "fp", "fn", "precision", "recall", "f1"]
    assert frame["type"].tolist() == ["C", "D", "TOTAL"]
    total = frame.iloc[-1]
    assert total["precision"] == 100.0
    assert total["recall"] == 50.0


def test_token_scores():
    scores = token_scores([["B-D", "I-D", "O", "O"]], [["B-D", "O", "B-C", "O"]])
    assert (scores.tp, scores.fp, scores.fn) == (1, 1, 1)


def test_dataset_gold_accepted():
    gold = gold_dataset(["B-D", "I-D"])
    assert evaluate(gold, [["B-D", "I-D"]]).f1 == 1.0
