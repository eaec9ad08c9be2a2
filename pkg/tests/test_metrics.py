import itertools

import numpy as np
import pytest

from oracles import auc_oracle_error, brute_force_auc
from tard.errors import ConfigError
from tard.metrics import accuracy, auc, confusion, f1_score, false_alarm_rate


def test_accuracy_examples():
    t = np.array([0, 1, 1, 0])
    assert accuracy(t, t) == 1.0
    assert accuracy(1 - t, t) == 0.0
    assert accuracy([0, 1, 1, 1], t) == 0.75


def test_f1_examples():
    assert f1_score([1, 0, 1], [1, 0, 1]) == 1.0
    assert f1_score([0, 0, 0], [1, 0, 1]) == 0.0
    # TP=2, FP=1, FN=1
    assert f1_score([1, 1, 1, 0, 0], [1, 1, 0, 1, 0]) == pytest.approx(2 / 3, abs=1e-15)


def _hand(labels, truth):
    tp = fp = fn = correct = 0
    for p, t in zip(labels, truth):
        tp += p == 1 and t == 1
        fp += p == 1 and t == 0
        fn += p == 0 and t == 1
        correct += p == t
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
    return correct / len(labels), f1


def test_exhaustive_four_sample_combinations():
    combos = list(itertools.product([0, 1], repeat=4))
    for labels in combos:
        for truth in combos:
            acc, f1 = _hand(labels, truth)
            assert accuracy(labels, truth) == acc
            assert f1_score(labels, truth) == pytest.approx(f1, abs=1e-15)


def test_false_alarm_rate():
    assert false_alarm_rate([1, 0, 1, 1], [0, 0, 1, 1]) == 0.5
    assert false_alarm_rate([1, 1], [1, 1]) == 0.0
    assert confusion([1, 0], [0, 1]) == {"tp": 0, "fp": 1, "fn": 1, "tn": 0}


def test_length_mismatch():
    with pytest.raises(ConfigError):
        accuracy([1, 0], [1])
    with pytest.raises(ConfigError):
        f1_score([1], [1, 0])
    with pytest.raises(ConfigError):
        auc([0.1], [1, 0])


def test_auc_examples():
    assert auc([1, 2, 3, 4], [0, 1, 0, 1]) == 0.75
    assert auc([3, 4, 1, 2], [1, 1, 0, 0]) == 1.0
    assert auc([5, 5, 5, 5], [1, 0, 1, 0]) == 0.5


def test_auc_single_class_is_undefined():
    with pytest.raises(ConfigError):
        auc([0.1, 0.2], [0, 0])


def test_auc_matches_brute_force():
    assert auc_oracle_error(100, seed=0) <= 1e-12


def test_brute_force_oracle_sanity():
    assert brute_force_auc([1, 2, 3, 4], [0, 1, 0, 1]) == 0.75
