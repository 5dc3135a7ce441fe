import random

import pytest
from sklearn.metrics import f1_score, precision_score, recall_score

from aicl.evalkit import EvalError, MetricsReport, compare, score
from aicl.runner import RunRecord


def rec(instance_id, gold, predicted, k=1, tokens=10):
    return RunRecord(
        instance_id=instance_id,
        gold_label=gold,
        predicted_label=predicted,
        k_used=k,
        posterior=[],
        posterior_source="logprobs",
        prompt_tokens=tokens,
        strategy_kind="static:1",
    )


class TestScore:
    def test_all_correct_balanced(self):
        records = [rec(f"i{n}", n % 2, n % 2) for n in range(10)]
        report = score(records, 2)
        assert report.macro_precision == 1.0
        assert report.macro_recall == 1.0
        assert report.macro_f1 == 1.0

    def test_hand_confusion_matrix(self):
        # gold balanced over {0,1}, every prediction is class 0
        records = [rec("a", 0, 0), rec("b", 0, 0), rec("c", 1, 0), rec("d", 1, 0)]
        report = score(records, 2)
        assert report.per_class[0] == pytest.approx((0.5, 1.0, 2 / 3))
        assert report.per_class[1] == (0.0, 0.0, 0.0)
        assert report.macro_f1 == pytest.approx(1 / 3)

    def test_avg_k_and_ais(self):
        records = [rec("a", 0, 0, k=1, tokens=10), rec("b", 1, 1, k=4, tokens=21)]
        report = score(records, 2)
        assert report.avg_k == 2.5
        assert report.ais == 16  # mean 15.5 rounds to 16
        assert report.n == 2

    def test_empty_rejected(self):
        with pytest.raises(EvalError):
            score([], 2)

    def test_permutation_invariance(self):
        rng = random.Random(3)
        records = [rec(f"i{n}", rng.randrange(3), rng.randrange(3)) for n in range(50)]
        a = score(records, 3)
        shuffled = records[:]
        rng.shuffle(shuffled)
        b = score(shuffled, 3)
        assert a == b

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_sklearn_brute_force(self, trial):
        rng = random.Random(trial)
        p = rng.randint(2, 5)
        n = rng.randint(5, 200)
        gold = [rng.randrange(p) for _ in range(n)]
        pred = [rng.randrange(p) for _ in range(n)]
        records = [rec(f"i{j}", g, q) for j, (g, q) in enumerate(zip(gold, pred))]
        report = score(records, p)
        labels = list(range(p))
        assert report.macro_precision == pytest.approx(
            precision_score(gold, pred, labels=labels, average="macro", zero_division=0)
        )
        assert report.macro_recall == pytest.approx(
            recall_score(gold, pred, labels=labels, average="macro", zero_division=0)
        )
        assert report.macro_f1 == pytest.approx(
            f1_score(gold, pred, labels=labels, average="macro", zero_division=0)
        )

    def test_report_json_round_trip(self, tmp_path):
        report = score([rec("a", 0, 0), rec("b", 1, 0)], 2)
        report.to_json(tmp_path / "r.json")
        again = MetricsReport.from_json(tmp_path / "r.json")
        assert again == report


class TestCompare:
    def make_report(self, f1):
        return MetricsReport(
            per_class=[(f1, f1, f1), (f1, f1, f1)],
            macro_precision=f1,
            macro_recall=f1,
            macro_f1=f1,
            avg_k=2.0,
            ais=100,
            n=10,
        )

    def test_single_row(self):
        text, table = compare([("only", self.make_report(0.9))])
        assert len(table["rows"]) == 1
        assert "only" in text

    def test_best_f_bolded(self):
        text, table = compare(
            [("first", self.make_report(0.90)), ("second", self.make_report(0.91))]
        )
        assert "**0.9100**" in text
        assert "**0.9000**" not in text
        assert [r["best"] for r in table["rows"]] == [False, True]

    def test_empty_rejected(self):
        with pytest.raises(EvalError):
            compare([])

    def test_columns_present(self):
        text, _ = compare([("m", self.make_report(0.5))])
        header = text.split("\n")[0]
        for col in ("Method", "k", "Precision", "Recall", "F-score", "AIS"):
            assert col in header
