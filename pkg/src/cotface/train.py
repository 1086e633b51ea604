"""Desk-scale MLP trainer with hand-written backprop.

Two head styles share the same stack of affine+ReLU layers:

  * angular head: the final layer output is L2-normalized into an embedding,
    compared against L2-normalized class rows of head_W (no bias), and turned
    into angles; any loss from the angular registry trains it.
  * score head: the final layer has a single unit whose raw output is a
    binary score, trained with margin_sigmoid_ce and optionally the
    double_loss separation term over pure-label batches.

Gradients flow through the normalizations explicitly: for u = z/||z|| the
Jacobian-vector product is (g - u<g, u>)/||z||, and d(arccos c)/dc =
-1/sqrt(1 - c^2) evaluated at the clamped cosine (clamped values keep their
gradient rather than dropping it).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .angular import AngularBatch, LossConfig, l2_normalize_rows
from .losses import (
    ANGULAR_LOSSES,
    ScorePair,
    double_loss,
    margin_sigmoid_ce,
    softmax_loss,
)
from .metrics import ScoredPairs, auc, eer

TASKS = ("embedding", "binary-live-spoof", "binary-eye-state")
BINARY_TASKS = ("binary-live-spoof", "binary-eye-state")

ARCCOS_CLAMP = 1e-7


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpModel:
    """Affine stack plus an optional angular head (unit rows, no bias)."""

    layers: list
    head_W: np.ndarray | None
    seed: int

    @property
    def embed_dim(self) -> int:
        return self.layers[-1].W.shape[0]


@dataclass
class Grads:
    layers: list
    head_W: np.ndarray | None


@dataclass
class SynthSpec:
    """Synthetic dataset description.

    embedding: per class, a random unit prototype plus isotropic Gaussian
    jitter of scale intra_spread.  binary-*: two clusters a unit distance
    apart, overlap controlled by intra_spread.
    """

    task: str = "embedding"
    n_classes: int = 10
    dim: int = 16
    per_class: int = 20
    intra_spread: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.task in BINARY_TASKS:
            self.n_classes = 2
        if self.n_classes < 2 or self.per_class < 2 or self.dim < 2:
            raise ValueError("need n_classes >= 2, per_class >= 2, dim >= 2")
        if self.intra_spread < 0.0:
            raise ValueError("intra_spread must be >= 0")


@dataclass
class TrainReport:
    """Per-step loss curve and wall times plus summary metrics."""

    loss_curve: list
    wall_ms: list
    metrics: dict
    config: dict
    wall_time_s: float = 0.0

    def to_records(self) -> str:
        """One line per step: step,loss,wall_ms."""
        lines = ["step,loss,wall_ms"]
        for i, (loss, ms) in enumerate(zip(self.loss_curve, self.wall_ms)):
            lines.append(f"{i},{loss:.17g},{ms:.3f}")
        return "\n".join(lines) + "\n"


def synth_dataset(spec: SynthSpec):
    """Deterministic synthetic features and labels for a spec."""
    rng = np.random.default_rng(spec.seed)
    if spec.task == "embedding":
        protos = l2_normalize_rows(rng.standard_normal((spec.n_classes, spec.dim)))
        dists = np.linalg.norm(protos[:, None] - protos[None, :], axis=-1)
        if (dists[np.triu_indices(spec.n_classes, k=1)] < 1e-9).any():
            raise ValueError("degenerate prototypes")
    else:
        direction = rng.standard_normal(spec.dim)
        direction /= np.linalg.norm(direction)
        protos = np.stack([-0.5 * direction, 0.5 * direction])
    labels = np.repeat(np.arange(spec.n_classes), spec.per_class)
    noise = rng.standard_normal((labels.size, spec.dim))
    features = protos[labels] + spec.intra_spread * noise
    return features, labels


def _init_layers(dims, activations, rng):
    layers = []
    for (d_in, d_out), act in zip(zip(dims[:-1], dims[1:]), activations):
        scale = np.sqrt((2.0 if act == "relu" else 1.0) / d_in)
        layers.append(Layer(W=rng.standard_normal((d_out, d_in)) * scale,
                            b=np.zeros(d_out), activation=act))
    return layers


def init_embedding_model(in_dim, n_classes, hidden=(32, 32), embed_dim=32, seed=0) -> MlpModel:
    """ReLU hidden layers, identity embedding layer, unit-row angular head."""
    rng = np.random.default_rng(seed)
    dims = [in_dim, *hidden, embed_dim]
    acts = ["relu"] * len(hidden) + ["identity"]
    layers = _init_layers(dims, acts, rng)
    head = l2_normalize_rows(rng.standard_normal((n_classes, embed_dim)))
    return MlpModel(layers=layers, head_W=head, seed=seed)


def init_score_model(in_dim, hidden=(32, 32), seed=0) -> MlpModel:
    """ReLU hidden layers into a single raw-score output unit."""
    rng = np.random.default_rng(seed)
    dims = [in_dim, *hidden, 1]
    acts = ["relu"] * len(hidden) + ["identity"]
    return MlpModel(layers=_init_layers(dims, acts, rng), head_W=None, seed=seed)


def _forward_layers(model: MlpModel, x):
    """Run the affine stack, returning activations and pre-activations."""
    a_list = [np.asarray(x, dtype=np.float64)]
    z_list = []
    for layer in model.layers:
        z = a_list[-1] @ layer.W.T + layer.b
        z_list.append(z)
        a_list.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return a_list, z_list


def forward(model: MlpModel, x):
    """Unit embeddings and the angle matrix against the head rows."""
    if model.head_W is None:
        raise ValueError("model has no angular head")
    a_list, _ = _forward_layers(model, x)
    emb = l2_normalize_rows(a_list[-1])
    head = l2_normalize_rows(model.head_W)
    cos = np.clip(emb @ head.T, -1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP)
    return emb, np.arccos(cos)


def forward_scores(model: MlpModel, x):
    """Raw scalar scores from a score-head model."""
    if model.head_W is not None:
        raise ValueError("model has an angular head, not a score head")
    a_list, _ = _forward_layers(model, x)
    return a_list[-1][:, 0]


def _normalization_vjp(raw, grad_unit):
    """Backprop g through u = raw/||raw|| row-wise: (g - u<g,u>)/||raw||."""
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    unit = raw / norms
    return (grad_unit - unit * (grad_unit * unit).sum(axis=1, keepdims=True)) / norms


def _backward_layers(model, a_list, z_list, grad_out) -> list:
    grads = [None] * len(model.layers)
    da = grad_out
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        dz = da * (z_list[i] > 0.0) if layer.activation == "relu" else da
        grads[i] = (dz.T @ a_list[i], dz.sum(axis=0))
        da = dz @ layer.W
    return grads


def backward(model: MlpModel, x, grad_theta) -> Grads:
    """Gradients of a scalar loss given d(loss)/d(theta).

    Recomputes the forward pass, then chains through arccos (slope evaluated
    at the clamped cosine), both L2 normalizations, and the affine stack.
    """
    a_list, z_list = _forward_layers(model, x)
    emb_raw = a_list[-1]
    emb = l2_normalize_rows(emb_raw)
    head = l2_normalize_rows(model.head_W)
    cos = np.clip(emb @ head.T, -1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP)
    dcos = np.asarray(grad_theta) * (-1.0 / np.sqrt(1.0 - cos * cos))
    grad_emb_unit = dcos @ head
    grad_head_unit = dcos.T @ emb
    head_grad = _normalization_vjp(model.head_W, grad_head_unit)
    grad_emb_raw = _normalization_vjp(emb_raw, grad_emb_unit)
    return Grads(layers=_backward_layers(model, a_list, z_list, grad_emb_raw),
                 head_W=head_grad)


def backward_scores(model: MlpModel, x, grad_scores) -> Grads:
    """Gradients of a scalar loss given d(loss)/d(raw score)."""
    a_list, z_list = _forward_layers(model, x)
    grad_out = np.zeros_like(a_list[-1])
    grad_out[:, 0] = grad_scores
    return Grads(layers=_backward_layers(model, a_list, z_list, grad_out), head_W=None)


def sgd_step(model: MlpModel, grads: Grads, lr: float) -> MlpModel:
    """In-place SGD: p <- p - lr*g; head rows re-normalized afterwards."""
    for layer, (dW, db) in zip(model.layers, grads.layers):
        layer.W -= lr * dW
        layer.b -= lr * db
    if model.head_W is not None:
        if grads.head_W is not None:
            model.head_W -= lr * grads.head_W
        model.head_W = l2_normalize_rows(model.head_W)
    return model


def _split_indices(labels, eval_fraction, n_classes):
    """Per-class deterministic split: the trailing fraction is held out."""
    train_idx, eval_idx = [], []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        k = max(1, int(round(len(idx) * eval_fraction)))
        train_idx.extend(idx[:-k])
        eval_idx.extend(idx[-k:])
    return np.array(train_idx), np.array(eval_idx)


def _verification_pairs(embeddings, labels) -> ScoredPairs:
    sims = embeddings @ embeddings.T
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(len(labels), k=1)
    return ScoredPairs(genuine=sims[iu][same[iu]], impostor=sims[iu][~same[iu]])


def _embedding_eer(model, x, labels) -> float:
    emb, _ = forward(model, x)
    return eer(_verification_pairs(emb, labels))[0]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def train_loop(
    spec: SynthSpec,
    loss_name: str,
    cfg: LossConfig = LossConfig(),
    steps: int = 500,
    lr: float = 0.1,
    seed: int = 0,
    hidden=(32, 32),
    embed_dim: int = 32,
    eval_fraction: float = 0.25,
    batch_size: int = 32,
    pure_batch_size: int = 16,
) -> tuple[MlpModel, TrainReport]:
    """Train a model on a synthetic spec and report curve plus metrics.

    Embedding task: full-batch angular training with any registry loss;
    metrics are held-out verification EER before and after.  Binary tasks:
    each step draws a mixed batch (margin_sigmoid_ce on raw scores) and one
    pure batch per label; "margin-ce+double" adds the double_loss term over
    the sigmoid scores of the pure batches (unweighted sum).  The pure
    batches are drawn either way so both variants consume the identical
    random stream; metrics are held-out AUC before and after.

    A non-finite loss aborts with TrainingDivergedError.
    """
    x, labels = synth_dataset(spec)
    train_idx, eval_idx = _split_indices(labels, eval_fraction, spec.n_classes)
    rng = np.random.default_rng(seed)
    t_start = time.perf_counter()
    curve, wall_ms = [], []

    if spec.task == "embedding":
        if loss_name not in ANGULAR_LOSSES:
            raise ValueError(f"unknown angular loss {loss_name!r}")
        loss_fn = ANGULAR_LOSSES[loss_name]
        model = init_embedding_model(spec.dim, spec.n_classes,
                                     hidden=hidden, embed_dim=embed_dim, seed=seed)
        xt, yt = x[train_idx], labels[train_idx]
        metrics_out = {"eer_initial": _embedding_eer(model, x[eval_idx], labels[eval_idx])}
        for step in range(steps):
            t0 = time.perf_counter()
            _, theta = forward(model, xt)
            out = loss_fn(AngularBatch(theta, yt), cfg, rng=rng)
            if not np.isfinite(out.value):
                raise TrainingDivergedError(f"non-finite loss {out.value!r} at step {step}")
            grads = backward(model, xt, out.grad_theta)
            sgd_step(model, grads, lr)
            curve.append(out.value)
            wall_ms.append((time.perf_counter() - t0) * 1e3)
        metrics_out["eer_final"] = _embedding_eer(model, x[eval_idx], labels[eval_idx])
    else:
        use_double = _parse_binary_loss(loss_name)
        model = init_score_model(spec.dim, hidden=hidden, seed=seed)
        pools = [train_idx[labels[train_idx] == c] for c in (0, 1)]

        def eval_pairs() -> ScoredPairs:
            return ScoredPairs(
                genuine=forward_scores(model, x[eval_idx][labels[eval_idx] == 1]),
                impostor=forward_scores(model, x[eval_idx][labels[eval_idx] == 0]),
            )

        metrics_out = {"auc_initial": auc(eval_pairs())}
        for step in range(steps):
            t0 = time.perf_counter()
            mixed = rng.choice(train_idx, size=batch_size, replace=True)
            pure0 = rng.choice(pools[0], size=pure_batch_size, replace=True)
            pure1 = rng.choice(pools[1], size=pure_batch_size, replace=True)
            ce = margin_sigmoid_ce(forward_scores(model, x[mixed]), labels[mixed], cfg.m)
            total = ce.value
            grads = backward_scores(model, x[mixed], ce.grad_scores)
            if use_double:
                raw0 = forward_scores(model, x[pure0])
                raw1 = forward_scores(model, x[pure1])
                dl = double_loss(ScorePair(low=_sigmoid(raw0), high=_sigmoid(raw1)))
                total += dl.value
                sig0, sig1 = _sigmoid(raw0), _sigmoid(raw1)
                g0 = backward_scores(model, x[pure0], dl.grad_low * sig0 * (1 - sig0))
                g1 = backward_scores(model, x[pure1], dl.grad_high * sig1 * (1 - sig1))
                _accumulate(grads, g0)
                _accumulate(grads, g1)
            if not np.isfinite(total):
                raise TrainingDivergedError(f"non-finite loss {total!r} at step {step}")
            sgd_step(model, grads, lr)
            curve.append(float(total))
            wall_ms.append((time.perf_counter() - t0) * 1e3)
        metrics_out["auc_final"] = auc(eval_pairs())

    report = TrainReport(
        loss_curve=curve,
        wall_ms=wall_ms,
        metrics=metrics_out,
        config={
            "task": spec.task, "loss": loss_name, "steps": steps, "lr": lr,
            "seed": seed, "n_classes": spec.n_classes, "dim": spec.dim,
            "per_class": spec.per_class, "intra_spread": spec.intra_spread,
            "data_seed": spec.seed, "s": cfg.s, "m": cfg.m,
            "m1": cfg.m1, "m2": cfg.m2, "m3": cfg.m3,
            "sigma1": cfg.sigma1, "sigma2": cfg.sigma2, "sigma3": cfg.sigma3,
            "alpha": cfg.alpha, "beta": cfg.beta, "log_base": cfg.log_base,
        },
        wall_time_s=time.perf_counter() - t_start,
    )
    return model, report


def _parse_binary_loss(loss_name: str) -> bool:
    """Binary-task loss selector: margin-ce alone or with the double term."""
    parts = set(loss_name.split("+"))
    if parts == {"margin-ce"}:
        return False
    if parts == {"margin-ce", "double"}:
        return True
    raise ValueError(
        f"binary tasks take 'margin-ce' or 'margin-ce+double', got {loss_name!r}")


def _accumulate(into: Grads, other: Grads):
    for (dw, db), (ow, ob) in zip(into.layers, other.layers):
        dw += ow
        db += ob


# --- finite-difference gradient checking -----------------------------------

@dataclass
class GradcheckReport:
    loss_name: str
    trials: int
    max_rel_err: float
    worst: dict

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def _fd_setup(loss_name, cfg_rng, data_rng, trial_seed):
    """Random non-singular configuration for one trial.

    Returns (params, value_fn, grad_fn) where value_fn(params) is the scalar
    loss and grad_fn(params) its analytic gradient w.r.t. params.  Elastic
    margins are re-drawn from the same trial seed on every call, so the loss
    is a deterministic function of params.
    """
    if loss_name in ANGULAR_LOSSES:
        n_samples = int(cfg_rng.integers(2, 5))
        n_classes = int(cfg_rng.integers(2, 6))
        cfg = LossConfig(
            s=float(cfg_rng.uniform(0.5, 4.0)),
            m=float(cfg_rng.uniform(0.01, 0.3)),
            m1=float(cfg_rng.uniform(0.9, 1.1)),
            m2=float(cfg_rng.uniform(0.01, 0.2)),
            m3=float(cfg_rng.uniform(0.0, 0.2)),
            sigma1=float(cfg_rng.uniform(0.0, 0.05)),
            sigma2=float(cfg_rng.uniform(0.0, 0.05)),
            sigma3=float(cfg_rng.uniform(0.0, 0.05)),
            alpha=float(cfg_rng.uniform(0.2, 1.0)),
            beta=float(cfg_rng.uniform(0.2, 1.0)),
            log_base="ten" if cfg_rng.integers(2) else "natural",
        )
        theta = data_rng.uniform(0.15, 2.6, size=(n_samples, n_classes))
        labels = data_rng.integers(0, n_classes, size=n_samples)
        fn = ANGULAR_LOSSES[loss_name]

        def evaluate(params):
            batch = AngularBatch(params.reshape(theta.shape), labels)
            return fn(batch, cfg, rng=np.random.default_rng(trial_seed))

        return theta.ravel(), \
            lambda p: evaluate(p).value, \
            lambda p: evaluate(p).grad_theta.ravel()

    if loss_name == "softmax":
        n_samples = int(cfg_rng.integers(2, 5))
        n_classes = int(cfg_rng.integers(2, 6))
        cfg = LossConfig(log_base="ten" if cfg_rng.integers(2) else "natural")
        logits = data_rng.normal(0.0, 2.0, size=(n_samples, n_classes))
        labels = data_rng.integers(0, n_classes, size=n_samples)
        return logits.ravel(), \
            lambda p: softmax_loss(p.reshape(logits.shape), labels, cfg).value, \
            lambda p: softmax_loss(p.reshape(logits.shape), labels, cfg).grad_theta.ravel()

    if loss_name == "margin-ce":
        n = int(cfg_rng.integers(2, 9))
        m = float(cfg_rng.uniform(-1.0, 1.0))
        scores = data_rng.normal(0.0, 2.0, size=n)
        labels = data_rng.integers(0, 2, size=n)
        return scores, \
            lambda p: margin_sigmoid_ce(p, labels, m).value, \
            lambda p: margin_sigmoid_ce(p, labels, m).grad_scores

    if loss_name == "double":
        n_low = int(cfg_rng.integers(2, 6))
        n_high = int(cfg_rng.integers(2, 6))
        params = data_rng.uniform(0.1, 0.9, size=n_low + n_high)

        def out(p):
            return double_loss(ScorePair(low=p[:n_low], high=p[n_low:]))

        return params, \
            lambda p: out(p).value, \
            lambda p: np.concatenate([out(p).grad_low, out(p).grad_high])

    raise ValueError(f"unknown loss {loss_name!r}")


def gradcheck(loss_name: str, trials: int = 100, h: float = 1e-5, seed: int = 0) -> GradcheckReport:
    """Central-difference check of a loss's analytic gradient.

    Each trial samples a fresh non-singular configuration, perturbs every
    input coordinate by +-h, and compares (f(+h) - f(-h)) / 2h against the
    analytic gradient.  Relative error uses |a| + |fd| + 1e-4 in the
    denominator so near-zero gradients are judged absolutely.
    """
    cfg_rng = np.random.default_rng(seed)
    data_rng = np.random.default_rng(seed + 1)
    max_err, worst = 0.0, {}
    for trial in range(trials):
        params, value_fn, grad_fn = _fd_setup(loss_name, cfg_rng, data_rng, trial)
        analytic = grad_fn(params)
        for i in range(params.size):
            bumped = params.copy()
            bumped[i] = params[i] + h
            up = value_fn(bumped)
            bumped[i] = params[i] - h
            down = value_fn(bumped)
            fd = (up - down) / (2.0 * h)
            err = abs(analytic[i] - fd) / (abs(analytic[i]) + abs(fd) + 1e-4)
            if err > max_err:
                max_err = err
                worst = {"trial": trial, "coordinate": i,
                         "analytic": float(analytic[i]), "fd": float(fd)}
    return GradcheckReport(loss_name=loss_name, trials=trials,
                           max_rel_err=float(max_err), worst=worst)


GRADCHECK_LOSSES = tuple(ANGULAR_LOSSES) + ("softmax", "margin-ce", "double")


def save_model(model: MlpModel, path):
    """Serialize a model to .npz (weights, biases, activations, head, seed)."""
    arrays = {"seed": np.array(model.seed), "n_layers": np.array(len(model.layers))}
    acts = []
    for i, layer in enumerate(model.layers):
        arrays[f"W{i}"] = layer.W
        arrays[f"b{i}"] = layer.b
        acts.append(layer.activation)
    arrays["activations"] = np.array(acts)
    if model.head_W is not None:
        arrays["head_W"] = model.head_W
    np.savez(path, **arrays)


def load_model(path) -> MlpModel:
    with np.load(path, allow_pickle=False) as data:
        n = int(data["n_layers"])
        acts = [str(a) for a in data["activations"]]
        layers = [Layer(W=data[f"W{i}"].copy(), b=data[f"b{i}"].copy(), activation=acts[i])
                  for i in range(n)]
        head = data["head_W"].copy() if "head_W" in data else None
        return MlpModel(layers=layers, head_W=head, seed=int(data["seed"]))
