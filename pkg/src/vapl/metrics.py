"""Binary classification metrics from confusion counts."""

from dataclasses import dataclass


class MetricsError(Exception):
    pass


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    zero_division: bool = False  # set when precision/recall/f1 hit a 0/0

    def as_row(self):
        return [self.accuracy, self.precision, self.recall, self.f1]


def compute_metrics(predictions, labels, positive_class=1):
    if len(predictions) != len(labels):
        raise MetricsError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise MetricsError("empty prediction list")
    tp = fp = tn = fn = 0
    for p, y in zip(predictions, labels):
        if p == positive_class:
            if y == positive_class:
                tp += 1
            else:
                fp += 1
        else:
            if y == positive_class:
                fn += 1
            else:
                tn += 1
    total = tp + fp + tn + fn
    flag = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, flag = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, flag = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, flag = 0.0, True
    return Metrics(accuracy=(tp + tn) / total, precision=precision, recall=recall,
                   f1=f1, tp=tp, fp=fp, tn=tn, fn=fn, zero_division=flag)
