# tasks/metrics.py
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence, Union

from core.errors import DataError

DEFAULT_RECALL_AT = (1, 2, 5)

Prediction = Union[int, Sequence[int]]


@dataclass(frozen=True)
class Metrics:
    n_instances: int
    accuracy: Optional[float] = None
    recall_at: Mapping[int, float] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "n_instances": self.n_instances,
            "accuracy": self.accuracy,
            "recall_at": {str(n): value for n, value in sorted(self.recall_at.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Metrics":
        try:
            return cls(
                n_instances=int(data["n_instances"]),
                accuracy=None if data.get("accuracy") is None else float(data["accuracy"]),
                recall_at={int(n): float(v) for n, v in (data.get("recall_at") or {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed metrics: {e}") from e


def compute_metrics(
    predictions: Sequence[Prediction], labels: Sequence[int], ns: Sequence[int] = DEFAULT_RECALL_AT
) -> Metrics:
    """
    Accuracy from top-1 predictions; recall@N too when predictions are rankings.

    A prediction is either a predicted index (II) or a ranked list of
    candidate indices, best first (NUR).
    """
    if len(predictions) != len(labels):
        raise DataError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise DataError("cannot compute metrics over zero instances")

    rankings = [isinstance(p, (list, tuple)) for p in predictions]
    if any(rankings) and not all(rankings):
        raise DataError("predictions mix indices and rankings")

    n = len(labels)
    if not rankings[0]:
        hits = sum(int(p) == int(y) for p, y in zip(predictions, labels))
        return Metrics(n_instances=n, accuracy=hits / n)

    top1 = sum(int(r[0]) == int(y) for r, y in zip(predictions, labels) if r)
    recall = {
        int(k): sum(int(y) in r[:k] for r, y in zip(predictions, labels)) / n for k in sorted(set(ns))
    }
    return Metrics(n_instances=n, accuracy=top1 / n, recall_at=recall)
