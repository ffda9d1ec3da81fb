"""Supervised and consistency losses over probability vectors.

All per-sample functions accept ``(..., C)`` arrays and reduce over the last
axis.  Predictions are clamped to ``[EPS, 1]`` inside every logarithm; the
clamp is treated as part of the function when differentiating.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError

EPS = 1e-7


class Form(str, Enum):
    SWAPPED = "SWAPPED"
    CE = "CE"
    KL = "KL"
    MSE = "MSE"
    CE_PSEUDO = "CE_PSEUDO"


def as_form(value):
    if isinstance(value, Form):
        return value
    try:
        return Form(str(value).upper())
    except ValueError:
        raise ConfigError(f"unknown consistency form {value!r}; choose from {[f.value for f in Form]}") from None


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {q.shape}")
    return p, q


def _log(x):
    return np.log(np.clip(x, EPS, 1.0))


def _dlog(x):
    """Derivative of ``log(clip(x, EPS, 1))``."""
    return np.where((x >= EPS) & (x <= 1.0), 1.0 / np.clip(x, EPS, 1.0), 0.0)


def _check_alpha(alpha):
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")


def cross_entropy(target, pred):
    """``-sum_k target_k log pred_k``."""
    target, pred = _pair(target, pred)
    return -np.sum(target * _log(pred), axis=-1)


def entropy(p):
    return cross_entropy(p, p)


def kl_div(p, q):
    """``-sum_k p_k log(q_k / p_k)``; entries with ``p_k = 0`` contribute nothing."""
    p, q = _pair(p, q)
    return np.sum(p * (_log(p) - _log(q)), axis=-1)


def mse_consistency(p, q):
    p, q = _pair(p, q)
    return np.sum((p - q) ** 2, axis=-1)


def _focal_weight(target, alpha):
    if alpha == 0:
        return np.ones_like(target)
    return (1.0 - target) ** alpha


def scaled_cross_entropy(target, pred, alpha):
    """``-sum_k (1 - target_k)^alpha target_k log pred_k``; ``alpha = 0`` is plain cross-entropy."""
    _check_alpha(alpha)
    target, pred = _pair(target, pred)
    if alpha == 0:
        return cross_entropy(target, pred)
    return -np.sum(_focal_weight(target, alpha) * target * _log(pred), axis=-1)


def swapped_prediction_loss(p, q, alpha):
    """Average of ``H_alpha(p, q)`` and ``H_alpha(q, p)``; symmetric in its arguments."""
    _check_alpha(alpha)
    p, q = _pair(p, q)
    a = scaled_cross_entropy(p, q, alpha)
    b = scaled_cross_entropy(q, p, alpha)
    # sum in a fixed order so that swapping arguments is bit-exact
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return (lo + hi) / 2


def pseudo_label(p, tau):
    """Argmax class of ``p`` if ``max(p) >= tau`` (lowest index on ties), else ``None``."""
    p = np.asarray(p, dtype=float)
    if p.max() >= tau:
        return int(np.argmax(p))
    return None


def pseudo_labels(P, tau):
    """Batch version of :func:`pseudo_label`; ``-1`` marks rejected rows."""
    P = np.asarray(P, dtype=float)
    labels = np.argmax(P, axis=-1)
    return np.where(P.max(axis=-1) >= tau, labels, -1)


def one_hot(labels, num_classes):
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


# gradients ---------------------------------------------------------------


def scaled_cross_entropy_grads(target, pred, alpha):
    """Per-sample value and gradients ``(value, d/d target, d/d pred)``."""
    _check_alpha(alpha)
    target, pred = _pair(target, pred)
    log_pred = _log(pred)
    if alpha == 0:
        w = np.ones_like(target)
        dw = np.zeros_like(target)
    else:
        base = 1.0 - target
        w = base ** alpha
        # d/dt (1-t)^alpha; the base is floored where alpha < 1 makes it singular
        dw = -alpha * (np.maximum(base, 1e-12) ** (alpha - 1) if alpha < 1 else base ** (alpha - 1))
    value = -np.sum(w * target * log_pred, axis=-1)
    d_target = -(w + dw * target) * log_pred
    d_pred = -w * target * _dlog(pred)
    return value, d_target, d_pred


def consistency_terms(p, q, form, alpha=0.0, tau=0.95, stop_grad_target=None):
    """Per-sample consistency values between ``p = f(x)`` and ``q = f(g(x))``.

    Returns ``(values, d_p, d_q, mask)``. ``mask`` flags the rows that count
    towards the batch mean (all rows except for rejected pseudo-labels).
    ``stop_grad_target`` defaults to True for CE and CE_PSEUDO, False otherwise.
    """
    form = as_form(form)
    p, q = _pair(p, q)
    if stop_grad_target is None:
        stop_grad_target = form in (Form.CE, Form.CE_PSEUDO)
    mask = np.ones(p.shape[:-1], dtype=bool)

    if form is Form.SWAPPED:
        a, da_p, da_q = scaled_cross_entropy_grads(p, q, alpha)
        b, db_q, db_p = scaled_cross_entropy_grads(q, p, alpha)
        values = swapped_prediction_loss(p, q, alpha)
        d_p = (da_p + db_p) / 2
        d_q = (da_q + db_q) / 2
    elif form is Form.CE:
        values, d_p, d_q = scaled_cross_entropy_grads(p, q, 0.0)
    elif form is Form.KL:
        values = kl_div(p, q)
        d_p = _log(p) + p * _dlog(p) - _log(q)
        d_q = -p * _dlog(q)
    elif form is Form.MSE:
        diff = p - q
        values = np.sum(diff ** 2, axis=-1)
        d_p, d_q = 2 * diff, -2 * diff
    else:  # CE_PSEUDO
        labels = pseudo_labels(p, tau)
        mask = labels >= 0
        target = one_hot(np.where(mask, labels, 0), p.shape[-1])
        values = cross_entropy(target, q) * mask
        d_q = -target * _dlog(q) * mask[..., None]
        d_p = np.zeros_like(p)  # hard labels carry no gradient
    if stop_grad_target:
        d_p = np.zeros_like(p)
    return values, d_p, d_q, mask


@dataclass(frozen=True)
class LossParams:
    alpha: float = 0.0
    tau: float = 0.95
    lam: float = 1.0
    stop_grad_target: bool | None = None


def supervised_loss(preds, labels):
    """Batch mean of ``H(onehot(label), pred)``."""
    return supervised_loss_grad(preds, labels)[0]


def supervised_loss_grad(preds, labels):
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels)
    if preds.ndim != 2 or len(preds) != len(labels):
        raise ShapeError(f"preds {preds.shape} and labels {labels.shape} do not pair up")
    if len(preds) == 0:
        raise DegenerateInputError("empty batch")
    rows = np.arange(len(preds))
    picked = preds[rows, labels]
    loss = float(np.mean(-_log(picked)))
    grad = np.zeros_like(preds)
    grad[rows, labels] = -_dlog(picked) / len(preds)
    return loss, grad


def unsupervised_loss(preds_orig, preds_aug, form, params=LossParams()):
    return unsupervised_loss_grad(preds_orig, preds_aug, form, params)[0]


def unsupervised_loss_grad(preds_orig, preds_aug, form, params=LossParams()):
    """Batch consistency loss ``lam * mean(term)`` and its gradients.

    Returns ``(loss, d_orig, d_aug, retained)`` where ``retained`` counts the
    rows that entered the mean (only below the batch size for CE_PSEUDO,
    whose mean runs over retained rows and is 0 when none survive).
    """
    p, q = _pair(preds_orig, preds_aug)
    if p.ndim != 2:
        raise ShapeError(f"expected (batch, classes), got {p.shape}")
    if len(p) == 0:
        raise DegenerateInputError("empty batch")
    values, d_p, d_q, mask = consistency_terms(
        p, q, form, alpha=params.alpha, tau=params.tau, stop_grad_target=params.stop_grad_target
    )
    retained = int(mask.sum())
    if retained == 0:
        return 0.0, np.zeros_like(p), np.zeros_like(q), 0
    scale = params.lam / retained
    loss = float(params.lam * np.sum(values[mask]) / retained)
    return loss, d_p * scale, d_q * scale, retained
