"""Command-line interface.

Subcommands: refcheck, gradcheck, train, eval, retrieval-eval, enroll, auth.
Exit codes: 0 success (auth: Accepted), 1 failed check or non-accepted
outcome, 2 usage error (argparse), 3 unreadable or malformed input/output
files.  Every subcommand is deterministic for a fixed --seed: reruns produce
byte-identical primary output files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .angular import LossConfig, l2_normalize_rows
from .metrics import (
    RankedQuery,
    RankedRetrieval,
    ScoredPairs,
    auc,
    eer,
    far_frr_sweep,
    gap,
    histogram,
    histogram_to_csv,
    map_at_100,
    sweep_to_csv,
)
from .pipeline import (
    AuthConfig,
    AuthScorers,
    GalleryFormatError,
    Gallery,
    authenticate,
    bilinear_resize,
    enroll,
    load_gallery,
    read_pgm,
    save_gallery,
    sharpness_gate,
)
from .reference import DEFAULT_TOLERANCE, run_reference_checks
from .train import (
    GRADCHECK_LOSSES,
    SynthSpec,
    TASKS,
    _forward_layers,
    forward_scores,
    gradcheck,
    init_embedding_model,
    init_score_model,
    load_model,
    save_model,
    train_loop,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

_TOY_SIDE = 16  # toy models consume 16x16 crops flattened to 256 features


def _add_loss_config_flags(parser):
    group = parser.add_argument_group("loss configuration")
    group.add_argument("--s", type=float, default=64.0, help="logit scale")
    group.add_argument("--m", type=float, default=0.5, help="single margin")
    group.add_argument("--m1", type=float, default=1.0)
    group.add_argument("--m2", type=float, default=0.0)
    group.add_argument("--m3", type=float, default=0.0)
    group.add_argument("--sigma1", type=float, default=0.0)
    group.add_argument("--sigma2", type=float, default=0.0)
    group.add_argument("--sigma3", type=float, default=0.0)
    group.add_argument("--alpha", type=float, default=1.0)
    group.add_argument("--beta", type=float, default=1.0)
    group.add_argument("--eps", type=float, default=1e-7)
    group.add_argument("--log-base", choices=("natural", "ten"), default="natural")


def _loss_config(args) -> LossConfig:
    return LossConfig(
        s=args.s, m=args.m, m1=args.m1, m2=args.m2, m3=args.m3,
        sigma1=args.sigma1, sigma2=args.sigma2, sigma3=args.sigma3,
        alpha=args.alpha, beta=args.beta, eps=args.eps, log_base=args.log_base,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cotface",
        description="Angular margin losses, desk-scale training, and face authentication.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refcheck", help="replay the frozen reference-batch loss values")
    p.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    p.add_argument("--loss", choices=GRADCHECK_LOSSES + ("all",), default="all")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("train", help="train a toy model on a synthetic set")
    p.add_argument("--task", choices=TASKS, default="embedding")
    p.add_argument("--loss", required=True,
                   help="angular loss name, or margin-ce[+double] for binary tasks")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--hidden", type=int, nargs="*", default=[32, 32])
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--save-model", default=None, help="optional .npz model path")
    _add_loss_config_flags(p)

    p = sub.add_parser("eval", help="EER/AUC/histograms from a label,score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=20)

    p = sub.add_parser("retrieval-eval", help="mAP@100 and GAP from a ranked file")
    p.add_argument("--ranked", required=True,
                   help="lines query,rank,correct,confidence")
    p.add_argument("--out", required=True)
    p.add_argument("--gallery-queries", type=int, default=None,
                   help="M normalizer for GAP (default: distinct queries)")

    p = sub.add_parser("enroll", help="enroll face images into a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("images", nargs="+", help="PGM face images")
    p.add_argument("--model", default=None, help="embedder .npz (default: seed-fixed toy)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pixel-threshold", type=float, default=30.0)
    p.add_argument("--count-threshold", type=int, default=None)

    p = sub.add_parser("auth", help="authenticate one frame against a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("frame", help="PGM frame")
    p.add_argument("--model", default=None, help="embedder .npz (default: seed-fixed toy)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sim-threshold", type=float, default=0.5)
    p.add_argument("--spoof-threshold", type=float, default=0.65)
    p.add_argument("--eye-threshold", type=float, default=0.5)

    return parser


# --- toy scorers -------------------------------------------------------------

def _image_features(img) -> np.ndarray:
    small = bilinear_resize(img, _TOY_SIDE, _TOY_SIDE)
    return (small.pixels / 255.0).reshape(1, -1)


def _toy_embedder(seed: int, model=None):
    """Face crop -> unit embedding via a seed-fixed (or loaded) MLP."""
    if model is None:
        model = init_embedding_model(_TOY_SIDE * _TOY_SIDE, n_classes=2,
                                     hidden=(64,), embed_dim=32, seed=seed)
    in_dim = model.layers[0].W.shape[1]
    if in_dim != _TOY_SIDE * _TOY_SIDE:
        raise ValueError(
            f"embedder expects {_TOY_SIDE * _TOY_SIDE} inputs, model has {in_dim}")

    def embed(crop):
        a_list, _ = _forward_layers(model, _image_features(crop))
        return l2_normalize_rows(a_list[-1])[0]

    return embed


def _toy_spoof(seed: int):
    """Frame -> spoof score in [0, 1] via a seed-fixed toy score model."""
    model = init_score_model(_TOY_SIDE * _TOY_SIDE, hidden=(16,), seed=seed + 1)

    def score(frame):
        raw = forward_scores(model, _image_features(frame))[0]
        return 1.0 / (1.0 + np.exp(-raw))

    return score


class _BrightnessScorer:
    """Cascade stand-in: confidence = mean crop brightness / 255.

    Stage 3 reports canonical landmark positions (eyes level at 35% height).
    """

    _LANDMARKS = np.array([
        [0.30, 0.35], [0.70, 0.35],  # eyes
        [0.50, 0.55],                # nose
        [0.35, 0.75], [0.65, 0.75],  # mouth corners
    ])

    def stage1(self, crop, box):
        return float(crop.pixels.mean() / 255.0)

    def stage2(self, crop, box):
        return float(crop.pixels.mean() / 255.0)

    def stage3(self, crop, box):
        return float(crop.pixels.mean() / 255.0), self._LANDMARKS.copy()


def _default_scorers(seed: int, model_path=None) -> AuthScorers:
    model = load_model(model_path) if model_path else None
    return AuthScorers(
        detector=_BrightnessScorer(),
        spoof=_toy_spoof(seed),
        embedder=_toy_embedder(seed, model),
        eye_closed=lambda crop: 0.0,  # stand-in: treat eyes as open
    )


# --- subcommands -------------------------------------------------------------

def _cmd_refcheck(args) -> int:
    results = run_reference_checks(args.tol)
    failed = False
    for r in results:
        delta = abs(r.computed - r.expected)
        status = "PASS" if r.passed else "FAIL"
        failed |= not r.passed
        print(f"{r.name:<12} expected {r.expected:<8.4f} computed {r.computed:<12.6f} "
              f"|delta| {delta:.2e}  {status}")
    print("all reference checks passed" if not failed else "reference check FAILED")
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_gradcheck(args) -> int:
    names = GRADCHECK_LOSSES if args.loss == "all" else (args.loss,)
    failed = False
    for name in names:
        report = gradcheck(name, trials=args.trials, h=args.h, seed=args.seed)
        ok = report.passed(args.tol)
        failed |= not ok
        status = "PASS" if ok else "FAIL"
        print(f"{name:<18} max_rel_err {report.max_rel_err:.3e}  {status}")
        if not ok:
            print(f"  worst: {report.worst}")
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_train(args) -> int:
    spec = SynthSpec(task=args.task, n_classes=args.classes, dim=args.dim,
                     per_class=args.per_class, intra_spread=args.spread,
                     seed=args.seed)
    cfg = _loss_config(args)
    model, report = train_loop(
        spec, args.loss, cfg, steps=args.steps, lr=args.lr, seed=args.seed,
        hidden=tuple(args.hidden), embed_dim=args.embed_dim,
        batch_size=args.batch_size,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["step,loss"]
    lines += [f"{i},{v:.17g}" for i, v in enumerate(report.loss_curve)]
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    mlines = ["metric,value"]
    mlines += [f"{k},{v:.17g}" for k, v in sorted(report.metrics.items())]
    (out / "metrics.csv").write_text("\n".join(mlines) + "\n")
    (out / "steps.log").write_text(report.to_records())
    if args.save_model:
        save_model(model, args.save_model)
    for k, v in sorted(report.metrics.items()):
        print(f"{k} {v:.6f}")
    print(f"loss {report.loss_curve[0]:.6f} -> {report.loss_curve[-1]:.6f} "
          f"({args.steps} steps, {report.wall_time_s:.2f}s)")
    return EXIT_OK


def _read_scores_file(path) -> ScoredPairs:
    genuine, impostor = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'label,score'")
            label, score = parts[0].strip().lower(), float(parts[1])
            if label in ("1", "genuine"):
                genuine.append(score)
            elif label in ("0", "impostor"):
                impostor.append(score)
            else:
                raise ValueError(f"{path}:{lineno}: unknown label {label!r}")
    if not genuine or not impostor:
        raise ValueError(f"{path}: need at least one genuine and one impostor score")
    return ScoredPairs(genuine=np.array(genuine), impostor=np.array(impostor))


def _cmd_eval(args) -> int:
    pairs = _read_scores_file(args.scores)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eer_value, eer_threshold = eer(pairs)
    auc_value = auc(pairs)
    grid = np.unique(np.concatenate([pairs.genuine, pairs.impostor]))
    (out / "far_frr.csv").write_text(sweep_to_csv(far_frr_sweep(pairs, grid)))
    lo = float(min(pairs.genuine.min(), pairs.impostor.min()))
    hi = float(max(pairs.genuine.max(), pairs.impostor.max()))
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    gen_counts, edges = histogram(pairs.genuine, args.bins, (lo, hi))
    imp_counts, _ = histogram(pairs.impostor, args.bins, (lo, hi))
    (out / "histogram.csv").write_text(
        histogram_to_csv({"genuine": gen_counts, "impostor": imp_counts}, edges))
    (out / "summary.csv").write_text(
        "metric,value\n"
        f"eer,{eer_value:.17g}\n"
        f"eer_threshold,{eer_threshold:.17g}\n"
        f"auc,{auc_value:.17g}\n")
    print(f"eer {eer_value:.6f} at threshold {eer_threshold:.6f}")
    print(f"auc {auc_value:.6f}")
    return EXIT_OK


def _read_ranked_file(path):
    """Parse query,rank,correct,confidence lines (file order preserved)."""
    per_query: dict = {}
    flat_conf, flat_correct = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'query,rank,correct,confidence'")
            query, rank, correct, conf = parts[0], int(parts[1]), int(parts[2]), float(parts[3])
            if correct not in (0, 1):
                raise ValueError(f"{path}:{lineno}: correct must be 0 or 1")
            per_query.setdefault(query, []).append((rank, correct))
            flat_conf.append(conf)
            flat_correct.append(correct)
    if not per_query:
        raise ValueError(f"{path}: no predictions")
    queries = []
    for query, entries in per_query.items():
        entries.sort(key=lambda e: e[0])
        rel = np.array([c for _, c in entries])
        # the file carries no relevant-item counts; use the correct count
        queries.append(RankedQuery(rel=rel, num_relevant=int(rel.sum())))
    return per_query, RankedRetrieval(
        queries=queries,
        confidences=np.array(flat_conf),
        correct=np.array(flat_correct),
    )


def _cmd_retrieval_eval(args) -> int:
    per_query, retrieval = _read_ranked_file(args.ranked)
    retrieval.num_in_gallery = (
        args.gallery_queries if args.gallery_queries is not None else len(per_query))
    if retrieval.num_in_gallery < 1:
        raise ValueError("--gallery-queries must be >= 1")
    map_value = map_at_100(retrieval)
    gap_value = gap(retrieval)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "retrieval_metrics.csv").write_text(
        "metric,value\n"
        f"map_at_100,{map_value:.17g}\n"
        f"gap,{gap_value:.17g}\n")
    print(f"map_at_100 {map_value:.6f}")
    print(f"gap {gap_value:.6f}")
    return EXIT_OK


def _cmd_enroll(args) -> int:
    gallery_path = Path(args.gallery)
    gallery = load_gallery(gallery_path) if gallery_path.exists() else Gallery()
    embed = _toy_embedder(args.seed, load_model(args.model) if args.model else None)
    any_rejected = False
    for image_path in args.images:
        img = read_pgm(image_path)
        ok, edges = sharpness_gate(img, args.pixel_threshold, args.count_threshold)
        result = enroll(gallery, args.name, embed(img), sharpness_ok=ok)
        if result.accepted:
            print(f"enrolled {args.name} from {image_path} "
                  f"({result.count}/5, edges {edges})")
        else:
            any_rejected = True
            print(f"rejected {image_path}: {result.reason} (edges {edges})")
    save_gallery(gallery, gallery_path)
    return EXIT_FAILED if any_rejected else EXIT_OK


def _cmd_auth(args) -> int:
    gallery = load_gallery(args.gallery)
    frame = read_pgm(args.frame)
    scorers = _default_scorers(args.seed, args.model)
    config = AuthConfig(
        sim_threshold=args.sim_threshold,
        spoof_threshold=args.spoof_threshold,
        eye_closed_threshold=args.eye_threshold,
    )
    outcome = authenticate(frame, gallery, scorers, config)
    if outcome.kind == "accepted":
        print(f"accepted identity={outcome.identity} similarity={outcome.similarity:.6f}")
        return EXIT_OK
    if outcome.kind == "stranger":
        print(f"stranger best_similarity={outcome.similarity:.6f}")
    elif outcome.kind == "invalid_face":
        print(f"invalid_face spoof_score={outcome.spoof_score:.6f}")
    elif outcome.kind == "eyes_closed":
        print(f"eyes_closed identity={outcome.identity}")
    else:
        print("no_face")
    return EXIT_FAILED


_COMMANDS = {
    "refcheck": _cmd_refcheck,
    "gradcheck": _cmd_gradcheck,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "retrieval-eval": _cmd_retrieval_eval,
    "enroll": _cmd_enroll,
    "auth": _cmd_auth,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, GalleryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
