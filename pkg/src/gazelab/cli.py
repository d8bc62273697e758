"""Command-line drivers for the fusion, agreement, and evaluation pipeline.

Subcommands: ``fuse``, ``gamma``, ``stats``, ``cav``, ``pcbm``,
``eval``, ``error``. Exit codes: 2 for parse errors (including missing
files), 3 for invariant violations, 4 for precondition failures, 5 for
numerical divergence. Stochastic subcommands require a seed, either
via ``--seed`` or the ``OBY_SEED`` environment variable; every run is
fully reproducible and every output embeds its resolved configuration
in a header comment or sidecar JSON, never a timestamp.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import cbm as cbm_mod
from . import fusion as fusion_mod
from .agreement import GammaConfig, gamma_per_film_and_average
from .core import (
    ClipLabel,
    Concept,
    ObjLevel,
    load_embeddings,
    parse_annotations,
    parse_clip_index,
)
from .errors import (
    InvariantError,
    MalformedRecord,
    NumericError,
    ParseError,
    PreconditionError,
)
from .harness import (
    FACTOR_NAMES,
    ModelKind,
    TaskConfig,
    error_factor_analysis,
    run_task,
)
from .models import model_to_json
from .stats import summarize, summary_rows, task_class_fractions

SEED_ENV_VAR = "OBY_SEED"


def _config_line(cfg: dict) -> str:
    return "# config: " + json.dumps(cfg, sort_keys=True)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _read_path(path: str, binary: bool = False):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p.read_bytes() if binary else p.read_text(encoding="utf-8")


def _resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise PreconditionError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    raise PreconditionError(f"a seed is required (--seed or {SEED_ENV_VAR})")


def _parse_levels(text: str) -> frozenset[ObjLevel]:
    return frozenset(ObjLevel.from_name(part.strip()) for part in text.split(",") if part.strip())


def _label_to_obj(film: str, label: ClipLabel) -> dict:
    return {
        "film": film,
        "clip": label.clip_id,
        "level": label.level.name,
        "concepts": [c.label for c in sorted(label.concepts)],
        "annotators": sorted(label.annotators),
    }


def _read_merged_labels(text: str) -> list[tuple[str, ClipLabel]]:
    out: list[tuple[str, ClipLabel]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise MalformedRecord(lineno, f"invalid JSON ({e.msg})") from None
        try:
            label = ClipLabel(
                clip_id=obj["clip"],
                level=ObjLevel.from_name(obj["level"]),
                concepts=frozenset(Concept.from_label(c) for c in obj.get("concepts", [])),
                annotators=frozenset(obj.get("annotators", [])),
            )
        except KeyError as e:
            raise MalformedRecord(lineno, f"missing field {e.args[0]!r}") from None
        out.append((obj.get("film", ""), label))
    return out


# --- fuse -------------------------------------------------------------------


def cmd_fuse(args: argparse.Namespace) -> int:
    spans = parse_annotations(_read_path(args.annotations))
    clips = parse_clip_index(_read_path(args.clips))
    basis = (
        fusion_mod.OverlapBasis.CLIP_DURATION
        if args.basis == "clip"
        else fusion_mod.OverlapBasis.SPAN_DURATION
    )
    cfg = fusion_mod.ProjectionConfig(overlap_threshold=args.threshold, overlap_basis=basis)
    projections, merged = fusion_mod.fuse(spans, clips, cfg)

    out = Path(args.out)
    resolved = {
        "command": "fuse",
        "annotations": args.annotations,
        "clips": args.clips,
        "threshold": args.threshold,
        "basis": args.basis,
    }

    merged_lines = []
    for film in sorted(merged):
        for label in merged[film]:
            merged_lines.append(json.dumps(_label_to_obj(film, label)))
    _write_text(out / "merged.jsonl", "".join(line + "\n" for line in merged_lines))
    _write_text(
        out / "merged.config.json", json.dumps(resolved, sort_keys=True, indent=2) + "\n"
    )

    proj_lines = []
    for film in sorted(projections):
        for annotator in sorted(projections[film]):
            for label in projections[film][annotator]:
                obj = {
                    "film": film,
                    "annotator": annotator,
                    "clip": label.clip_id,
                    "level": label.level.name,
                    "concepts": [c.label for c in sorted(label.concepts)],
                }
                proj_lines.append(json.dumps(obj))
    _write_text(out / "projections.jsonl", "".join(line + "\n" for line in proj_lines))

    if args.sweep:
        thresholds = [float(t) for t in args.sweep.split(",") if t.strip()]
        spans_by_annotator: dict[str, list] = {}
        for s in spans:
            spans_by_annotator.setdefault(s.annotator_id, []).append(s)
        rows = fusion_mod.sweep_thresholds(spans_by_annotator, clips, thresholds, basis)
        lines = [_config_line({**resolved, "sweep": thresholds})]
        lines.append("threshold,en,hn,ns,s,delta_en,delta_hn,delta_ns,delta_s")
        for row in rows:
            counts = ",".join(str(row.counts[lv]) for lv in ObjLevel)
            deltas = ",".join(str(row.deltas[lv]) for lv in ObjLevel)
            lines.append(f"{row.threshold},{counts},{deltas}")
        _write_text(out / "sweep.csv", "".join(line + "\n" for line in lines))
    return 0


# --- gamma ------------------------------------------------------------------


def cmd_gamma(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    films: dict[str, dict[str, list[ObjLevel]]] = {}
    for lineno, raw in enumerate(_read_path(args.projections).splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            film, annotator = obj["film"], obj["annotator"]
            level = ObjLevel.from_name(obj["level"])
        except json.JSONDecodeError as e:
            raise MalformedRecord(lineno, f"invalid JSON ({e.msg})") from None
        except KeyError as e:
            raise MalformedRecord(lineno, f"missing field {e.args[0]!r}") from None
        films.setdefault(film, {}).setdefault(annotator, []).append(level)

    excluded = _parse_levels(args.exclude) if args.exclude else frozenset()
    cfg = GammaConfig(n_null=args.n_null, seed=seed, excluded_levels=excluded)
    summary = gamma_per_film_and_average(films, cfg)

    resolved = {
        "command": "gamma",
        "projections": args.projections,
        "n_null": args.n_null,
        "seed": seed,
        "exclude": sorted(lv.name for lv in excluded),
    }
    lines = [_config_line(resolved), "film,pair,gamma,delta_a,delta_c,n_pairs"]
    for row in summary.per_pair:
        r = row.result
        lines.append(
            f"{row.film_id},{row.annotator_a}|{row.annotator_b},"
            f"{r.gamma:.6f},{r.observed_disorder:.6f},{r.expected_disorder:.6f},{r.n_pairs}"
        )
    lines.append(f"__average__,,{summary.average:.6f},,,")
    _write_text(Path(args.out) / "gamma.csv", "".join(line + "\n" for line in lines))
    return 0


# --- stats ------------------------------------------------------------------


def cmd_stats(args: argparse.Namespace) -> int:
    labels = [label for _, label in _read_merged_labels(_read_path(args.labels))]
    if not labels:
        raise PreconditionError(f"no labels found in {args.labels}")
    summary = summarize(labels)
    resolved = {"command": "stats", "labels": args.labels}
    lines = [_config_line(resolved), "level,concept,count,fraction"]
    for level, concept, count, fraction in summary_rows(summary):
        lines.append(f"{level},{concept},{count},{fraction:.6f}")
    _write_text(Path(args.out) / "stats.csv", "".join(line + "\n" for line in lines))

    doc = {
        "config": resolved,
        "level_fractions": {lv.name: summary.level_fractions[lv] for lv in ObjLevel},
        "mean_concepts_per_level": {
            lv.name: v for lv, v in summary.mean_concepts_per_level.items()
        },
        "fractions_without_ns": {
            lv.name: v
            for lv, v in task_class_fractions(labels, drop={ObjLevel.NS}).items()
        }
        if any(lbl.level is not ObjLevel.NS for lbl in labels)
        else {},
    }
    _write_text(Path(args.out) / "summary.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


# --- cav --------------------------------------------------------------------


def _load_task_inputs(args: argparse.Namespace):
    emb = load_embeddings(_read_path(args.embeddings, binary=True))
    labels = [label for _, label in _read_merged_labels(_read_path(args.labels))]
    kept = [lbl for lbl in labels if lbl.level is not ObjLevel.NS]
    if not kept:
        raise PreconditionError("no non-NS labels to work with")
    return emb, kept


def cmd_cav(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    emb, labels = _load_task_inputs(args)
    modes = {
        "en-only": [cbm_mod.NegativeMode.EN_ONLY],
        "en-plus-without": [cbm_mod.NegativeMode.EN_PLUS_WITHOUT],
        "both": [cbm_mod.NegativeMode.EN_ONLY, cbm_mod.NegativeMode.EN_PLUS_WITHOUT],
    }[args.mode]
    resolved = {
        "command": "cav",
        "embeddings": args.embeddings,
        "labels": args.labels,
        "mode": args.mode,
        "seed": seed,
    }
    out = Path(args.out)
    csv_lines = [_config_line(resolved), "concept,mode,f1"]
    for mode in modes:
        cavs = cbm_mod.fit_all_cavs(emb, labels, mode=mode, seed=seed)
        doc = {"config": resolved, "cavs": [cav.to_json() for cav in cavs]}
        _write_text(
            out / f"cavs_{mode.value}.json", json.dumps(doc, sort_keys=True, indent=2) + "\n"
        )
        for cav in cavs:
            csv_lines.append(f"{cav.concept.label},{mode.value},{cav.cv_f1:.6f}")
    _write_text(out / "concept_f1.csv", "".join(line + "\n" for line in csv_lines))
    return 0


# --- pcbm ---------------------------------------------------------------------


def cmd_pcbm(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    emb, labels = _load_task_inputs(args)
    kind = ModelKind.PCBM_DT if args.kind == "dt" else ModelKind.PCBM_LR
    if args.cavs:
        doc = json.loads(_read_path(args.cavs))
        cavs = [cbm_mod.ConceptVector.from_json(d) for d in doc["cavs"]]
    else:
        cavs = cbm_mod.fit_all_cavs(emb, labels, mode=cbm_mod.NegativeMode.EN_ONLY, seed=seed)
    scores = cbm_mod.score_table(emb, cavs)
    result = cbm_mod.train_pcbm(
        scores,
        labels,
        kind,
        train_negatives=ObjLevel.from_name(args.train_neg),
        test_negatives=_parse_levels(args.test_neg),
        seed=seed,
    )
    resolved = {
        "command": "pcbm",
        "embeddings": args.embeddings,
        "labels": args.labels,
        "kind": args.kind,
        "train_neg": args.train_neg,
        "test_neg": args.test_neg,
        "cavs": args.cavs,
        "seed": seed,
    }
    out = Path(args.out)
    doc = {
        "config": resolved,
        "report": result.report.to_json(),
        "model": model_to_json(result.model),
    }
    _write_text(out / "pcbm_report.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if kind is ModelKind.PCBM_DT:
        _write_text(out / "tree.txt", cbm_mod.export_tree_report(result.model))
    return 0


# --- eval -----------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    emb, labels = _load_task_inputs(args)
    model = ModelKind(args.model)
    if model in (ModelKind.PCBM_DT, ModelKind.PCBM_LR):
        cavs = cbm_mod.fit_all_cavs(emb, labels, mode=cbm_mod.NegativeMode.EN_ONLY, seed=seed)
        features = cbm_mod.score_table(emb, cavs)
    else:
        features = {cid: emb[cid] for cid in emb.clip_ids()}

    grid = [
        (ObjLevel.EN, frozenset({ObjLevel.EN})),
        (ObjLevel.HN, frozenset({ObjLevel.EN})),
        (ObjLevel.EN, frozenset({ObjLevel.EN, ObjLevel.HN})),
        (ObjLevel.HN, frozenset({ObjLevel.EN, ObjLevel.HN})),
    ]
    reports = []
    for train_neg, test_neg in grid:
        cfg = TaskConfig(
            train_negatives=train_neg,
            test_negatives=test_neg,
            model=model,
            seed=seed,
            mlp_epochs=args.epochs,
            mlp_lr=args.lr,
            mlp_batch=args.batch,
        )
        reports.append(run_task(cfg, labels, features))

    resolved = {
        "command": "eval",
        "embeddings": args.embeddings,
        "labels": args.labels,
        "model": args.model,
        "seed": seed,
        "epochs": args.epochs,
        "lr": args.lr,
        "batch": args.batch,
    }
    out = Path(args.out)
    doc = {"config": resolved, "reports": [r.to_json() for r in reports]}
    _write_text(out / "eval_report.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")

    def cell(train_neg: ObjLevel, test_neg: frozenset) -> str:
        for r in reports:
            if r.config.train_negatives is train_neg and r.config.test_negatives == test_neg:
                return f"{r.mean_f1:.4f} ({r.std_f1:.4f})"
        return ""

    lines = [
        _config_line(resolved),
        "model,train_negatives,test_EN_vs_S,test_EN+HN_vs_S",
    ]
    for train_neg in (ObjLevel.EN, ObjLevel.HN):
        lines.append(
            f"{args.model},{train_neg.name},"
            f'"{cell(train_neg, frozenset({ObjLevel.EN}))}",'
            f'"{cell(train_neg, frozenset({ObjLevel.EN, ObjLevel.HN}))}"'
        )
    r_en = next(r for r in reports if r.config.test_negatives == frozenset({ObjLevel.EN}))
    r_all = next(
        r for r in reports if r.config.test_negatives == frozenset({ObjLevel.EN, ObjLevel.HN})
    )
    for name in ("random", "all_positive"):
        lines.append(f'{name},,"{r_en.baselines[name]:.4f}","{r_all.baselines[name]:.4f}"')
    _write_text(out / "eval_table.csv", "".join(line + "\n" for line in lines))
    return 0


# --- error ------------------------------------------------------------------


def cmd_error(args: argparse.Namespace) -> int:
    labeled = _read_merged_labels(_read_path(args.labels))
    labels = [label for _, label in labeled]
    by_clip = {label.clip_id: label for label in labels}

    preds: dict[str, int] = {}
    truths: dict[str, int] = {}
    for lineno, raw in enumerate(_read_path(args.predictions).splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) not in (2, 3):
            raise MalformedRecord(lineno, "expected clip_id,prediction[,truth]")
        clip_id = parts[0]
        try:
            preds[clip_id] = int(parts[1])
            if len(parts) == 3:
                truths[clip_id] = int(parts[2])
        except ValueError:
            raise MalformedRecord(lineno, "prediction/truth must be 0 or 1") from None
        if clip_id not in by_clip:
            raise PreconditionError(f"prediction for unknown clip {clip_id!r}")

    ordered = [by_clip[cid] for cid in preds]
    pred_list = [preds[lbl.clip_id] for lbl in ordered]
    truth_list = (
        [truths[lbl.clip_id] for lbl in ordered] if len(truths) == len(preds) else None
    )
    weights = error_factor_analysis(
        ordered, pred_list, truth_list, l2=args.l2, seed=args.seed or 0
    )
    resolved = {
        "command": "error",
        "labels": args.labels,
        "predictions": args.predictions,
        "l2": args.l2,
        "seed": args.seed or 0,
    }
    lines = [_config_line(resolved), "factor,weight"]
    for name in FACTOR_NAMES:
        lines.append(f"{name},{weights.weights[name]:.6f}")
    lines.append(f"__bias__,{weights.bias:.6f}")
    _write_text(Path(args.out) / "error_factors.csv", "".join(line + "\n" for line in lines))
    return 0


# --- argument wiring ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazelab",
        description="Span fusion, agreement, and concept-level evaluation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, needs_seed: bool) -> None:
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--jobs",
            type=int,
            default=1,
            help="worker cap; outputs are schedule-independent (currently sequential)",
        )
        if needs_seed:
            p.add_argument(
                "--seed", type=int, default=None, help=f"seed (falls back to {SEED_ENV_VAR})"
            )

    p = sub.add_parser("fuse", help="project spans onto clips and merge annotators")
    p.add_argument("annotations", help="annotation JSONL")
    p.add_argument("clips", help="clip index CSV")
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--basis", choices=("clip", "span"), default="clip")
    p.add_argument("--sweep", default=None, help="comma-separated thresholds to tabulate")
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gamma", help="inter-annotator agreement on projections")
    p.add_argument("projections", help="projection JSONL from fuse")
    p.add_argument("--n-null", type=int, default=62, dest="n_null")
    p.add_argument("--exclude", default=None, help="levels to exclude, e.g. NS")
    add_common(p, needs_seed=True)
    p.set_defaults(func=cmd_gamma)

    p = sub.add_parser("stats", help="dataset statistics of merged labels")
    p.add_argument("labels", help="merged JSONL")
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cav", help="fit one concept vector per concept")
    p.add_argument("embeddings", help="embedding table (binary or CSV)")
    p.add_argument("labels", help="merged JSONL")
    p.add_argument("--mode", choices=("en-only", "en-plus-without", "both"), default="both")
    add_common(p, needs_seed=True)
    p.set_defaults(func=cmd_cav)

    p = sub.add_parser("pcbm", help="interpretable classifier on concept coordinates")
    p.add_argument("embeddings")
    p.add_argument("labels")
    p.add_argument("--kind", choices=("dt", "lr"), required=True)
    p.add_argument("--cavs", default=None, help="reuse a cavs_*.json instead of refitting")
    p.add_argument("--train-neg", default="EN", dest="train_neg")
    p.add_argument("--test-neg", default="EN", dest="test_neg")
    add_common(p, needs_seed=True)
    p.set_defaults(func=cmd_pcbm)

    p = sub.add_parser("eval", help="full train/test negative-composition grid")
    p.add_argument("embeddings")
    p.add_argument("labels")
    p.add_argument(
        "--model",
        choices=tuple(m.value for m in ModelKind),
        default="mlp",
    )
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)
    add_common(p, needs_seed=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("error", help="regress classification success on clip factors")
    p.add_argument("labels", help="merged JSONL")
    p.add_argument("predictions", help="CSV clip_id,prediction[,truth]")
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_error)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 4
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InvariantError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except PreconditionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 5


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
