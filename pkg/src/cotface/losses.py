"""Margin losses over sample-to-class angles.

Every angular loss below is a softmax cross-entropy whose logits are a
transform of the angles: the true class gets f(theta), every other class gets
g(theta), and the per-sample loss is

    -log_b( e^{f(theta_y)} / (e^{f(theta_y)} + sum_{j != y} e^{g(theta_j)}) )

computed as logit minus log-sum-exp with a max shift so large logits cannot
overflow.  The batch value is the mean of the per-sample losses; grad_theta
carries d(value)/d(theta_ji) with the same shape as the angle matrix.

The cosine family (norm-softmax, SphereFace, CosFace, ArcFace, ElasticFace,
combined margins) uses f in {s*cos(m1*theta + m2) - m3}; the cotangent family
replaces cos with cot, which diverges as the angle approaches 0 and so
punishes badly misclassified samples much harder while driving well-classified
ones to essentially zero loss.

Score-level losses for the binary heads live here too: a margin-shifted
sigmoid cross-entropy and a score-separation loss over a (low, high) pair of
score sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .angular import (
    AngularBatch,
    LossConfig,
    SingularityError,
    _check_cot_singularity,
    elastic_sample,
)


@dataclass
class LossOutput:
    """Loss value plus the gradients a trainer needs.

    value = mean(per_sample).  grad_theta is set by the angular losses (for
    plain softmax it is the gradient w.r.t. the raw logits); grad_scores by
    margin_sigmoid_ce; grad_low/grad_high by double_loss.
    """

    value: float
    per_sample: np.ndarray
    grad_theta: np.ndarray | None = None
    grad_scores: np.ndarray | None = None
    grad_low: np.ndarray | None = None
    grad_high: np.ndarray | None = None


@dataclass
class ScorePair:
    """Two score sets in [0, 1]: low should be pushed down, high up."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        self.high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        for name, arr in (("low", self.low), ("high", self.high)):
            if arr.size == 0:
                raise ValueError(f"{name} scores must be non-empty")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} scores contain non-finite values")
            if (arr < 0.0).any() or (arr > 1.0).any():
                raise ValueError(f"{name} scores must lie in [0, 1]")


def _ce_output(batch: AngularBatch, cfg: LossConfig, f_true, g_other, df_true, dg_other):
    """Assemble the shared cross-entropy from true/other logits and slopes.

    f_true, df_true: (N,) logit and d(logit)/d(theta) for the labeled class.
    g_other, dg_other: (N, n) matrices for every class; the labeled slot is
    overwritten, so its content there is ignored.
    """
    rows = np.arange(batch.n_samples)
    z = np.array(g_other, dtype=np.float64, copy=True)
    z[rows, batch.labels] = f_true
    zmax = z.max(axis=1, keepdims=True)
    shifted = np.exp(z - zmax)
    denom = shifted.sum(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(denom[:, 0])
    ln_b = cfg.log_divisor
    per_sample = (lse - z[rows, batch.labels]) / ln_b

    probs = shifted / denom
    grad_z = probs
    grad_z[rows, batch.labels] -= 1.0
    grad_z /= batch.n_samples * ln_b
    dz = np.array(dg_other, dtype=np.float64, copy=True)
    dz[rows, batch.labels] = df_true
    return LossOutput(
        value=float(per_sample.mean()),
        per_sample=per_sample,
        grad_theta=grad_z * dz,
    )


def _true_angles(batch: AngularBatch) -> np.ndarray:
    return batch.theta[np.arange(batch.n_samples), batch.labels]


def _cos_logits(batch: AngularBatch, cfg: LossConfig):
    """g = s*cos(theta) matrix and its slope, shared by the cosine family."""
    g = cfg.s * np.cos(batch.theta)
    dg = -cfg.s * np.sin(batch.theta)
    return g, dg


def _cot_logits(batch: AngularBatch, cfg: LossConfig):
    """g = s*cot(theta) matrix with the magnitude-floored tangent.

    Where the floor engages (|tan| < eps) the implemented kernel is flat, so
    the slope is zero there; elsewhere d(cot)/d(theta) = -(1 + cot^2).
    """
    t = np.tan(batch.theta)
    floored = np.abs(t) < cfg.eps
    cot = 1.0 / np.copysign(np.maximum(np.abs(t), cfg.eps), t)
    g = cfg.s * cot
    dg = np.where(floored, 0.0, -cfg.s * (1.0 + cot * cot))
    return g, dg


def _shifted_cot(angle, eps: float):
    """cot(angle) and its slope for the margin-shifted true class (no floor)."""
    _check_cot_singularity(angle, eps)
    cot = 1.0 / np.tan(angle)
    return cot, -(1.0 + cot * cot)


def softmax_loss(logits, labels, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Plain softmax cross-entropy on raw, unnormalized logits.

    grad_theta holds the gradient w.r.t. the logits themselves.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    rows = np.arange(logits.shape[0])
    zmax = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - zmax)
    denom = shifted.sum(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(denom[:, 0])
    ln_b = cfg.log_divisor
    per_sample = (lse - logits[rows, labels]) / ln_b
    grad = shifted / denom
    grad[rows, labels] -= 1.0
    grad /= logits.shape[0] * ln_b
    return LossOutput(float(per_sample.mean()), per_sample, grad_theta=grad)


def norm_softmax_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """No margin: f = g = s*cos(theta)."""
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    f = cfg.s * np.cos(ty)
    df = -cfg.s * np.sin(ty)
    return _ce_output(batch, cfg, f, g, df, dg)


def sphereface_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Multiplicative angular margin: f = s*cos(m*theta)."""
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    f = cfg.s * np.cos(cfg.m * ty)
    df = -cfg.s * cfg.m * np.sin(cfg.m * ty)
    return _ce_output(batch, cfg, f, g, df, dg)


def cosface_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Subtractive cosine margin: f = s*(cos(theta) - m)."""
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    f = cfg.s * (np.cos(ty) - cfg.m)
    df = -cfg.s * np.sin(ty)
    return _ce_output(batch, cfg, f, g, df, dg)


def arcface_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Additive angular margin: f = s*cos(theta + m)."""
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    f = cfg.s * np.cos(ty + cfg.m)
    df = -cfg.s * np.sin(ty + cfg.m)
    return _ce_output(batch, cfg, f, g, df, dg)


def elasticface_arc_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """ArcFace with a per-sample margin drawn from N(m, sigma2^2)."""
    if rng is None:
        raise ValueError("elastic losses need an rng")
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    m = elastic_sample(cfg.m, cfg.sigma2, rng, size=batch.n_samples)
    f = cfg.s * np.cos(ty + m)
    df = -cfg.s * np.sin(ty + m)
    return _ce_output(batch, cfg, f, g, df, dg)


def elasticface_cos_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """CosFace with a per-sample margin drawn from N(m, sigma3^2)."""
    if rng is None:
        raise ValueError("elastic losses need an rng")
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    m = elastic_sample(cfg.m, cfg.sigma3, rng, size=batch.n_samples)
    f = cfg.s * (np.cos(ty) - m)
    df = -cfg.s * np.sin(ty)
    return _ce_output(batch, cfg, f, g, df, dg)


def lmcot_loss(batch: AngularBatch, cfg: LossConfig, rng=None, kernel: str = "theta") -> LossOutput:
    """Cotangent margin: f = s*cot(theta + m), g = s*cot(theta).

    kernel selects how the true-class cotangent is evaluated: "theta" divides
    by tan(theta + m) directly, "identity" recovers it from cos(theta) via the
    angle-addition identities.  Both agree away from the poles.
    """
    if kernel not in ("theta", "identity"):
        raise ValueError(f"unknown kernel {kernel!r}")
    g, dg = _cot_logits(batch, cfg)
    ty = _true_angles(batch)
    if kernel == "theta":
        cot_m, dcot_m = _shifted_cot(ty + cfg.m, cfg.eps)
    else:
        cos_t = np.cos(ty)
        sin_t = np.maximum(np.sqrt(1.0 - cos_t * cos_t), cfg.eps)
        cos_tm = cos_t * np.cos(cfg.m) - sin_t * np.sin(cfg.m)
        sin_tm = sin_t * np.cos(cfg.m) + cos_t * np.sin(cfg.m)
        if (np.abs(sin_tm) < cfg.eps).any():
            raise SingularityError("cot undefined: |sin(theta + m)| < eps")
        cot_m = cos_tm / sin_tm
        dcot_m = -(1.0 + cot_m * cot_m)
    f = cfg.s * cot_m
    df = cfg.s * dcot_m
    return _ce_output(batch, cfg, f, g, df, dg)


def combined_margin_cos_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """All three cosine margins at once: f = s*(cos(m1*theta + m2) - m3).

    (m1, m2, m3) = (m, 0, 0), (1, m, 0) and (1, 0, m) reduce to SphereFace,
    ArcFace and CosFace.
    """
    g, dg = _cos_logits(batch, cfg)
    ty = _true_angles(batch)
    u = cfg.m1 * ty + cfg.m2
    f = cfg.s * (np.cos(u) - cfg.m3)
    df = -cfg.s * cfg.m1 * np.sin(u)
    return _ce_output(batch, cfg, f, g, df, dg)


def combined_margin_cot_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Cotangent form of the combined margin: f = s*(cot(m1*theta + m2) - m3)."""
    g, dg = _cot_logits(batch, cfg)
    ty = _true_angles(batch)
    u = cfg.m1 * ty + cfg.m2
    cot_u, dcot_u = _shifted_cot(u, cfg.eps)
    f = cfg.s * (cot_u - cfg.m3)
    df = cfg.s * cfg.m1 * dcot_u
    return _ce_output(batch, cfg, f, g, df, dg)


def elastic_cot_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Cotangent margin with the additive margin drawn from N(m, sigma2^2)."""
    if rng is None:
        raise ValueError("elastic losses need an rng")
    g, dg = _cot_logits(batch, cfg)
    ty = _true_angles(batch)
    m = elastic_sample(cfg.m, cfg.sigma2, rng, size=batch.n_samples)
    cot_m, dcot_m = _shifted_cot(ty + m, cfg.eps)
    f = cfg.s * cot_m
    df = cfg.s * dcot_m
    return _ce_output(batch, cfg, f, g, df, dg)


def _generalized_cot_true(batch, cfg, rng):
    """Sampled-margin true-class cotangent logit shared by the dual loss.

    Draws E(m1, sigma1), E(m2, sigma2), E(m3, sigma3) per sample and returns
    (f, df, margins) with f = s*(cot(e1*theta + e2) - e3).
    """
    ty = _true_angles(batch)
    e1 = elastic_sample(cfg.m1, cfg.sigma1, rng, size=batch.n_samples)
    e2 = elastic_sample(cfg.m2, cfg.sigma2, rng, size=batch.n_samples)
    e3 = elastic_sample(cfg.m3, cfg.sigma3, rng, size=batch.n_samples)
    u = e1 * ty + e2
    cot_u, dcot_u = _shifted_cot(u, cfg.eps)
    f = cfg.s * (cot_u - e3)
    df = cfg.s * e1 * dcot_u
    return f, df, (e1, e2, e3), ty


def generalized_lmcot_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Combined cotangent margin with every margin drawn per sample."""
    if rng is None:
        raise ValueError("elastic losses need an rng")
    g, dg = _cot_logits(batch, cfg)
    f, df, _, _ = _generalized_cot_true(batch, cfg, rng)
    return _ce_output(batch, cfg, f, g, df, dg)


def dual_cot_cos_loss(batch: AngularBatch, cfg: LossConfig, rng=None) -> LossOutput:
    """Weighted sum of a cot branch and a cos branch over one margin draw.

    Both branches share the sampled margins (e1, e2, e3) and the same
    cot-based competitor term sum_{j != y} e^{s*cot(theta_j)}; only the
    true-class logit differs: s*(cot(e1*theta + e2) - e3) versus
    s*(cos(e1*theta + e2) - e3).  value = alpha*cot_branch + beta*cos_branch.
    """
    if rng is None:
        raise ValueError("elastic losses need an rng")
    if not cfg.alpha + cfg.beta > 0.0:
        raise ValueError("alpha + beta must be positive")
    g, dg = _cot_logits(batch, cfg)
    f_cot, df_cot, (e1, e2, e3), ty = _generalized_cot_true(batch, cfg, rng)
    u = e1 * ty + e2
    f_cos = cfg.s * (np.cos(u) - e3)
    df_cos = -cfg.s * e1 * np.sin(u)
    out_cot = _ce_output(batch, cfg, f_cot, g, df_cot, dg)
    out_cos = _ce_output(batch, cfg, f_cos, g, df_cos, dg)
    per_sample = cfg.alpha * out_cot.per_sample + cfg.beta * out_cos.per_sample
    grad = cfg.alpha * out_cot.grad_theta + cfg.beta * out_cos.grad_theta
    return LossOutput(float(per_sample.mean()), per_sample, grad_theta=grad)


def double_loss(pair: ScorePair) -> LossOutput:
    """Separation loss on a (low, high) score pair: mean(low) - mean(high) + 1.

    Scores in [0, 1] bound the value to [0, 2]; identical branches give
    exactly 1.  The pair counts as a single sample, so per_sample has length
    one.  Gradients are +1/|low| per low score and -1/|high| per high score.
    """
    value = float(pair.low.mean() - pair.high.mean() + 1.0)
    return LossOutput(
        value=value,
        per_sample=np.array([value]),
        grad_low=np.full(pair.low.shape, 1.0 / pair.low.size),
        grad_high=np.full(pair.high.shape, -1.0 / pair.high.size),
    )


def margin_sigmoid_ce(scores, labels, m: float = 0.0) -> LossOutput:
    """Sigmoid cross-entropy on margin-shifted raw scores.

    z = score + (label - 0.5)*m, so a positive m eases the labeled class
    (shifts the true side further from the decision boundary before the
    sigmoid); pass a negative m for the penalizing variant.  Natural-log BCE
    in the stable softplus form; grad_scores = (sigmoid(z) - label)/N.
    """
    scores = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.float64))
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have matching shapes")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    z = scores + (labels - 0.5) * m
    # softplus(z) - z*y is -log sigmoid(z) for y=1 and -log(1-sigmoid(z)) for y=0
    per_sample = np.logaddexp(0.0, z) - z * labels
    # exp of -|z| only, so extreme scores cannot overflow
    ez = np.exp(-np.abs(z))
    sig = np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    grad = (sig - labels) / scores.size
    return LossOutput(float(per_sample.mean()), per_sample, grad_scores=grad)


ANGULAR_LOSSES = {
    "norm-softmax": norm_softmax_loss,
    "sphereface": sphereface_loss,
    "cosface": cosface_loss,
    "arcface": arcface_loss,
    "elastic-arc": elasticface_arc_loss,
    "elastic-cos": elasticface_cos_loss,
    "lmcot": lmcot_loss,
    "combined-cos": combined_margin_cos_loss,
    "combined-cot": combined_margin_cot_loss,
    "elastic-cot": elastic_cot_loss,
    "generalized-lmcot": generalized_lmcot_loss,
    "dual": dual_cot_cos_loss,
}

ELASTIC_LOSSES = frozenset(
    ("elastic-arc", "elastic-cos", "elastic-cot", "generalized-lmcot", "dual")
)
