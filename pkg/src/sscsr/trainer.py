"""Semi-supervised training loop, EMA maintenance, evaluation and stability trials.

One optimizer step draws a labeled batch and an unlabeled batch, computes

    L_s = mean H(y, f(g(x_s)))
    L_u = lam * mean consistency(f(x_u), f(g(x_u)))

and takes an Adam step on L_s + L_u, then moves the EMA shadow.  In
TRAIN_ON_EMA mode the live weights are replaced by the shadow after the last
step of every epoch.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import losses
from .augment import AugmentConfig, composite_augment
from .dataio import SignalDataset, to_network_input
from .errors import ConfigError, DegenerateInputError, ShapeError, TrainingDivergence
from .losses import Form, LossParams
from .netcore import AdamState, Mode, adam_step, backward, build_model, forward, predict
from .sigsim import sample_rng

# stream keys for sample_rng(seed, key, ...)
_INIT, _LABELED_ORDER, _UNLABELED_ORDER, _LABELED_AUG, _UNLABELED_AUG = range(1, 6)


class EmaMode(str, Enum):
    OFF = "OFF"
    SHADOW_ONLY = "SHADOW_ONLY"
    TRAIN_ON_EMA = "TRAIN_ON_EMA"


@dataclass(frozen=True)
class TrainConfig:
    form: Form = Form.SWAPPED
    alpha: float = 0.0
    gamma: float = 0.9
    tau: float = 0.95
    lam: float | None = None
    batch_labeled: int = 32
    batch_unlabeled: int = 128
    epochs: int = 60
    lr: float = 1e-3
    seed: int = 0
    ema_mode: EmaMode = EmaMode.TRAIN_ON_EMA
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    stop_grad_target: bool | None = None
    supervised_only: bool = False
    # None: one pass over U (or over S when U is empty)
    steps_per_epoch: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "form", losses.as_form(self.form))
        try:
            mode = self.ema_mode if isinstance(self.ema_mode, EmaMode) else EmaMode(str(self.ema_mode).upper())
            object.__setattr__(self, "ema_mode", mode)
        except ValueError:
            raise ConfigError(f"unknown ema_mode {self.ema_mode!r}") from None
        if isinstance(self.augment, dict):
            object.__setattr__(self, "augment", AugmentConfig(**self.augment))
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1")
        if self.form is Form.MSE and self.lam is None and not self.supervised_only:
            raise ConfigError("the MSE form needs an explicit lam (it has no natural scale)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @property
    def loss_params(self):
        return LossParams(
            alpha=self.alpha,
            tau=self.tau,
            lam=1.0 if self.lam is None else self.lam,
            stop_grad_target=self.stop_grad_target,
        )

    def to_dict(self):
        d = asdict(self)
        d["form"] = self.form.value
        d["ema_mode"] = self.ema_mode.value
        d["augment"] = self.augment.to_dict()
        return d


@dataclass
class RunReport:
    config: dict
    epochs: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    confusion: list = field(default_factory=list)
    retention_rate: float | None = None
    wall_time: float = 0.0
    outcome: str = "unknown"
    steps: int = 0
    ema_updates: int = 0
    ema_swaps: int = 0

    def loss_trace(self):
        return [row[:2] for row in self.step_losses]

    def to_dict(self):
        return asdict(self)


def ema_update(shadow, live, gamma):
    """In place: ``shadow <- gamma * shadow + (1 - gamma) * live`` for every name."""
    if set(shadow) != set(live):
        raise ShapeError("shadow and live parameter names differ")
    for name, s in shadow.items():
        v = live[name]
        if s.shape != v.shape:
            raise ShapeError(f"{name}: shadow {s.shape} vs live {v.shape}")
        s *= gamma
        s += (1 - gamma) * v
    return shadow


def evaluate(paramset, x, y, batch_size=256):
    """EVAL-mode accuracy and confusion matrix (rows true class, columns prediction)."""
    y = np.asarray(y)
    if len(x) == 0:
        raise DegenerateInputError("cannot evaluate on an empty split")
    if len(x) != len(y):
        raise ShapeError("sample and label counts differ")
    C = paramset.arch.num_classes
    if y.max() >= C:
        raise ShapeError(f"labels reach {y.max()} but the model has {C} classes")
    pred = np.argmax(predict(paramset, x, batch_size), axis=1)
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    return float(np.mean(pred == y)), confusion


def augment_batch(x, config, rng):
    return np.stack([composite_augment(s, config, rng) for s in x])


def step_loss_and_grads(paramset, xs_aug, ys, xu, xu_aug, config, update_stats=True):
    """Losses and parameter gradients for one step of pre-augmented batches.

    Returns ``(loss_s, loss_u, grads, retained)``; ``xu`` may be None for a
    supervised step.  Each forward pass uses its own batch statistics.
    """
    grads = {}
    probs_s, tape_s = forward(paramset, to_network_input(xs_aug), Mode.TRAIN, record=True, update_stats=update_stats)
    loss_s, d_s = losses.supervised_loss_grad(probs_s, ys)
    backward(paramset, tape_s, d_s, grads)
    loss_u, retained = 0.0, 0
    if xu is not None and len(xu):
        p, tape_p = forward(paramset, to_network_input(xu), Mode.TRAIN, record=True, update_stats=update_stats)
        q, tape_q = forward(paramset, to_network_input(xu_aug), Mode.TRAIN, record=True, update_stats=update_stats)
        loss_u, d_p, d_q, retained = losses.unsupervised_loss_grad(p, q, config.form, config.loss_params)
        if np.any(d_p):
            backward(paramset, tape_p, d_p, grads)
        backward(paramset, tape_q, d_q, grads)
    return loss_s, loss_u, grads, retained


class _LabeledSampler:
    """Endless reshuffled passes over S, consumed ``batch`` indices at a time."""

    def __init__(self, n, seed):
        self.n, self.rng = n, sample_rng(seed, _LABELED_ORDER)
        self.queue = np.zeros(0, dtype=np.int64)

    def take(self, batch):
        while len(self.queue) < batch:
            self.queue = np.concatenate([self.queue, self.rng.permutation(self.n)])
        out, self.queue = self.queue[:batch], self.queue[batch:]
        return out


class Trainer:
    """Runs one training job; ``optimizer`` and ``live`` stay inspectable afterwards."""

    def __init__(self, dataset, arch, config, verbose=False, log=print):
        if len(dataset.labeled_x) == 0:
            raise ConfigError("the labeled set is empty")
        if arch.num_classes != dataset.num_classes:
            raise ShapeError(f"arch has {arch.num_classes} classes, dataset has {dataset.num_classes}")
        if arch.input_len != dataset.sample_len:
            raise ShapeError(f"arch expects length {arch.input_len}, dataset has {dataset.sample_len}")
        missing = np.setdiff1d(np.arange(dataset.num_classes), dataset.labeled_y)
        if missing.size:
            raise ConfigError(f"classes {missing.tolist()} have no labeled example")
        if len(dataset.val_x) == 0 or len(dataset.test_x) == 0:
            raise ConfigError("validation and test splits must be non-empty")
        self.dataset, self.arch, self.config = dataset, arch, config
        self.verbose, self.log = verbose, log
        self.live = None
        self.optimizer = None

    def steps_per_epoch(self, n_unlabeled):
        c = self.config
        if c.steps_per_epoch is not None:
            return c.steps_per_epoch
        if n_unlabeled:
            return math.ceil(n_unlabeled / c.batch_unlabeled)
        return math.ceil(len(self.dataset.labeled_x) / c.batch_labeled)

    def run(self):
        c, ds = self.config, self.dataset
        t0 = time.perf_counter()
        ps = build_model(self.arch, sample_rng(c.seed, _INIT), dtype=np.dtype(c.dtype))
        self.live = ps
        self.optimizer = opt = AdamState.for_params(ps.params)
        report = RunReport(config=c.to_dict())

        U = np.zeros((0, ds.sample_len), np.complex64) if c.supervised_only else ds.unlabeled_x
        n_u = len(U)
        steps = self.steps_per_epoch(n_u)
        labeled = _LabeledSampler(len(ds.labeled_x), c.seed)
        use_ema = c.ema_mode is not EmaMode.OFF
        best = None
        kept = seen = 0

        for epoch in range(c.epochs):
            u_order = sample_rng(c.seed, _UNLABELED_ORDER, epoch).permutation(n_u) if n_u else None
            u_pos = 0
            sums = np.zeros(2)
            for step in range(steps):
                li = labeled.take(c.batch_labeled)
                xs = augment_batch(ds.labeled_x[li], c.augment, sample_rng(c.seed, _LABELED_AUG, epoch, step))
                xu = xu_aug = None
                if n_u:
                    if u_pos >= n_u:
                        u_order = np.concatenate([u_order, sample_rng(c.seed, _UNLABELED_ORDER, epoch, step).permutation(n_u)])
                    ui = u_order[u_pos:u_pos + c.batch_unlabeled]
                    u_pos += len(ui)
                    xu = U[ui]
                    xu_aug = augment_batch(xu, c.augment, sample_rng(c.seed, _UNLABELED_AUG, epoch, step))
                loss_s, loss_u, grads, retained = step_loss_and_grads(
                    ps, xs, ds.labeled_y[li], xu, xu_aug, c
                )
                total = loss_s + loss_u
                if not math.isfinite(total):
                    raise TrainingDivergence(
                        f"non-finite loss at epoch {epoch} step {step}: L_s={loss_s} L_u={loss_u}"
                    )
                if xu is not None:
                    kept += retained
                    seen += len(xu)
                adam_step(ps.params, grads, opt, c.lr)
                if use_ema:
                    ema_update(ps.ema, ps.live(), c.gamma)
                    report.ema_updates += 1
                report.steps += 1
                report.step_losses.append((loss_s, loss_u, total))
                sums += (loss_s, loss_u)

            if c.ema_mode is EmaMode.TRAIN_ON_EMA:
                ps.load_live(ps.ema)
                report.ema_swaps += 1
            scored = ps.shadow_set() if c.ema_mode is EmaMode.SHADOW_ONLY else ps
            val_acc, _ = evaluate(scored, ds.val_x, ds.val_y)
            row = {
                "epoch": epoch,
                "loss_s": sums[0] / steps,
                "loss_u": sums[1] / steps,
                "val_accuracy": val_acc,
            }
            report.epochs.append(row)
            if self.verbose:
                self.log(f"epoch {epoch:4d}  L_s {row['loss_s']:.4f}  L_u {row['loss_u']:.4f}  val {val_acc:.4f}")
            if best is None or val_acc > report.best_val_accuracy:
                report.best_val_accuracy, report.best_epoch = val_acc, epoch
                best = scored.live() if scored is not ps else {k: v.copy() for k, v in ps.live().items()}

        result = build_model(self.arch, sample_rng(c.seed, _INIT), dtype=np.dtype(c.dtype))
        result.load_live(best)
        result.ema = {k: v.copy() for k, v in best.items()}
        acc, confusion = evaluate(result, ds.test_x, ds.test_y)
        report.test_accuracy = acc
        report.confusion = confusion.tolist()
        if c.form is Form.CE_PSEUDO and seen:
            report.retention_rate = kept / seen
        report.wall_time = time.perf_counter() - t0
        report.outcome = classify_outcome(acc, ds.num_classes)
        return result, report


def train(dataset, arch, config, verbose=False):
    """Train on ``dataset``; returns the best-validation parameters and the run report."""
    return Trainer(dataset, arch, config, verbose=verbose).run()


def chance_margin_threshold(num_classes):
    return 1.0 / num_classes + 0.05


def classify_outcome(accuracy, num_classes, good_threshold=None):
    if accuracy <= chance_margin_threshold(num_classes):
        return "bad"
    if good_threshold is not None and accuracy >= good_threshold:
        return "good"
    return "ok"


@dataclass
class StabilityResult:
    m: int
    n: int
    best_accuracy: float
    trials: int
    reports: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.m, self.n, self.best_accuracy))


def _run_trial(args):
    runner, dataset, arch, config = args
    try:
        return runner(dataset, arch, config)[1]
    except TrainingDivergence as exc:
        return exc


def stability_trials(dataset, arch, config, trials, good_threshold, runner=train, jobs=1):
    """Run ``trials`` seeds and tally good (``m``) and bad-minimum (``n``) outcomes.

    Trial ``i`` uses seed ``config.seed + i``.  ``best_accuracy`` is the test
    accuracy of the trial with the best validation accuracy.  A diverged
    trial counts as a bad outcome.  Unpacks as ``m, n, best_accuracy``.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    jobs_args = [(runner, dataset, arch, replace(config, seed=config.seed + i)) for i in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_trial, jobs_args))
    else:
        outcomes = [_run_trial(a) for a in jobs_args]

    C = dataset.num_classes
    m = n = 0
    best_val, best_acc = -1.0, float("nan")
    reports = []
    for out in outcomes:
        if isinstance(out, Exception):
            n += 1
            reports.append(None)
            continue
        reports.append(out)
        if out.test_accuracy <= chance_margin_threshold(C):
            n += 1
        elif out.test_accuracy >= good_threshold:
            m += 1
        if out.best_val_accuracy > best_val:
            best_val, best_acc = out.best_val_accuracy, out.test_accuracy
    return StabilityResult(m=m, n=n, best_accuracy=best_acc, trials=trials, reports=reports)
