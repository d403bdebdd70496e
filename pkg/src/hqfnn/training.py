"""End-to-end optimization: cross-entropy loss, Adam, milestone learning
rate decay, validation checkpointing and the usual classification metrics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gradients import softmax_ce_backward, softmax_ce_forward
from .model import ModelConfig, ModelParams, model_backward, model_forward


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 500
    lr0: float = 0.001
    epochs: int = 200
    milestones: tuple[int, ...] = (100, 150)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr0 < 0:
            raise ValueError(f"lr0 must be >= 0, got {self.lr0}")
        # milestones beyond the epoch budget never fire and are legal, so a
        # short run can keep the default schedule
        if any(s < 1 for s in self.milestones):
            raise ValueError(f"milestones must be >= 1, got {self.milestones}")


@dataclass
class MetricsRecord:
    epoch: int
    loss: float
    accuracy: float
    precision: float
    recall: float
    f1: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.loss!r},{self.accuracy!r},"
                f"{self.precision!r},{self.recall!r},{self.f1!r}")


CSV_HEADER = "epoch,loss,acc,precision,recall,f1"


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean over the batch of -log softmax(logits)[label]."""
    loss, _ = softmax_ce_forward(logits, labels)
    return loss


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moments per tensor plus the shared step counter."""
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(m={name: np.zeros_like(a) for name, a in params.named_tensors()},
                   v={name: np.zeros_like(a) for name, a in params.named_tensors()})


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam update, in place, fixed tensor order."""
    state.t += 1
    correction1 = 1.0 - beta1**state.t
    correction2 = 1.0 - beta2**state.t
    for name, value in params.named_tensors():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        setattr(params, name, value - lr * m_hat / (np.sqrt(v_hat) + eps))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def macro_metrics(predictions: np.ndarray, labels: np.ndarray, n_classes: int):
    """Macro-averaged precision, recall and F1 over all n_classes; a class
    with no support on either side contributes 0 to the average."""
    precision = np.zeros(n_classes)
    recall = np.zeros(n_classes)
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        tp = int(np.sum((predictions == c) & (labels == c)))
        fp = int(np.sum((predictions == c) & (labels != c)))
        fn = int(np.sum((predictions != c) & (labels == c)))
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])
    return float(precision.mean()), float(recall.mean()), float(f1.mean())


def evaluate(params: ModelParams, config: ModelConfig, images: np.ndarray,
             labels: np.ndarray, batch_size: int = 500, epoch: int = 0) -> MetricsRecord:
    """Accuracy plus macro precision/recall/F1 and the mean loss."""
    if images.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    predictions = np.empty(images.shape[0], dtype=np.int64)
    total_loss = 0.0
    for start in range(0, images.shape[0], batch_size):
        stop = min(start + batch_size, images.shape[0])
        logits, _ = model_forward(images[start:stop], params, config)
        predictions[start:stop] = logits.argmax(axis=1)
        total_loss += cross_entropy(logits, labels[start:stop]) * (stop - start)
    accuracy = float((predictions == labels).mean())
    precision, recall, f1 = macro_metrics(predictions, labels, config.n_classes)
    return MetricsRecord(epoch=epoch, loss=total_loss / images.shape[0],
                         accuracy=accuracy, precision=precision, recall=recall, f1=f1)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    best_params: ModelParams
    best_epoch: int
    best_val_accuracy: float
    history: list[MetricsRecord] = field(default_factory=list)
    lr_schedule: list[float] = field(default_factory=list)


def train(train_images: np.ndarray, train_labels: np.ndarray,
          val_images: np.ndarray, val_labels: np.ndarray,
          params: ModelParams, model_cfg: ModelConfig, train_cfg: TrainConfig,
          log=None) -> TrainResult:
    """Mini-batch Adam training with the piecewise learning-rate schedule:
    the rate is multiplied by 0.1 at the end of every milestone epoch. Per
    epoch the history records the mean training loss and the validation
    metrics; the returned parameters are the ones with the best validation
    accuracy.
    """
    if train_images.shape[0] == 0 or val_images.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")
    from .data import make_batches  # local import to avoid a cycle

    state = AdamState.for_params(params)
    lr = train_cfg.lr0
    result = TrainResult(best_params=params.copy(), best_epoch=0, best_val_accuracy=-1.0)
    for epoch in range(1, train_cfg.epochs + 1):
        batches = make_batches(train_images, train_labels, train_cfg.batch_size,
                               seed=train_cfg.seed + epoch, shuffle=True)
        result.lr_schedule.append(lr)
        epoch_loss = 0.0
        for batch_images, batch_labels in batches:
            logits, cache = model_forward(batch_images, params, model_cfg)
            loss, ce_cache = softmax_ce_forward(logits, batch_labels)
            grads = model_backward(softmax_ce_backward(ce_cache), params, model_cfg, cache)
            adam_step(params, grads, state, lr,
                      train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
            epoch_loss += loss * batch_images.shape[0]
        if epoch in train_cfg.milestones:
            lr *= 0.1

        val = evaluate(params, model_cfg, val_images, val_labels,
                       batch_size=train_cfg.batch_size, epoch=epoch)
        record = MetricsRecord(epoch=epoch, loss=epoch_loss / train_images.shape[0],
                               accuracy=val.accuracy, precision=val.precision,
                               recall=val.recall, f1=val.f1)
        result.history.append(record)
        if val.accuracy > result.best_val_accuracy:
            result.best_val_accuracy = val.accuracy
            result.best_epoch = epoch
            result.best_params = params.copy()
        if log is not None:
            log(f"epoch {epoch:3d}  lr {result.lr_schedule[-1]:.2e}  "
                f"train loss {record.loss:.4f}  val acc {val.accuracy:.4f}")
    return result


def write_metrics_csv(path, history: list[MetricsRecord]) -> None:
    lines = [CSV_HEADER] + [rec.csv_row() for rec in history]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
