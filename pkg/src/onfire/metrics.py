"""Confusion-matrix statistics plus the complexity figures of merit.

Identities: TPR = TP/(TP+FN), FPR = FP/(FP+TN), P = TP/(TP+FP),
A = (TP+TN)/total, F = 2PR/(P+R) with R = TPR.  A field whose denominator
is zero is ``None`` (undefined) rather than a fabricated value.  The A:C
ratio divides accuracy as a percentage by the parameter count in millions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError


def _ratio(num: int, den: int):
    return num / den if den > 0 else None


@dataclass
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    tpr: float | None = None
    fpr: float | None = None
    precision: float | None = None
    accuracy: float | None = None
    f_score: float | None = None
    params_millions: float | None = None
    a_to_c: float | None = None
    fps: float | None = None

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        if min(tp, fp, tn, fn) < 0:
            raise ContractError("confusion counts must be non-negative")
        if tp + fp + tn + fn == 0:
            raise ContractError("empty confusion matrix")
        r = cls(tp, fp, tn, fn)
        r.tpr = _ratio(tp, tp + fn)
        r.fpr = _ratio(fp, fp + tn)
        r.precision = _ratio(tp, tp + fp)
        r.accuracy = (tp + tn) / (tp + fp + tn + fn)
        if r.precision is not None and r.tpr is not None and (r.precision + r.tpr) > 0:
            r.f_score = 2 * r.precision * r.tpr / (r.precision + r.tpr)
        return r

    def with_complexity(self, params_millions: float,
                        fps: float | None = None) -> "MetricsReport":
        self.params_millions = params_millions
        if self.accuracy is not None and params_millions > 0:
            self.a_to_c = self.accuracy * 100.0 / params_millions
        self.fps = fps
        return self

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "fpr": self.fpr, "precision": self.precision,
            "accuracy": self.accuracy, "f_score": self.f_score,
            "params_millions": self.params_millions,
            "a_to_c": self.a_to_c, "fps": self.fps,
        }

    def table_row(self) -> str:
        """One aligned line with the paper-style 1-decimal percentages."""
        def pct(v):
            return f"{v * 100.0:5.1f}" if v is not None else "  n/a"
        return (f"TPR {pct(self.tpr)}  FPR {pct(self.fpr)}  F {pct(self.f_score)}  "
                f"P {pct(self.precision)}  A {pct(self.accuracy)}")


def a_to_c_ratio(accuracy: float, params_millions: float) -> float:
    """Accuracy (fraction) to complexity (millions of parameters) ratio,
    computed directly as accuracy_percent / millions."""
    if params_millions <= 0:
        raise ContractError(f"params_millions must be > 0, got {params_millions}")
    return accuracy * 100.0 / params_millions
