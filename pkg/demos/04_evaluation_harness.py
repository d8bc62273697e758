#!/usr/bin/env python3
"""End-to-end evaluation: the task grid, an interpretable head, errors.

On synthetic embeddings where a single direction decides the rating,
the demo runs the four train/test negative-composition cells with the
MLP head, trains a concept-coordinate decision tree and renders it,
and closes with the error-factor regression on predictions that fail
exactly on the hard negatives.
"""

import sys
from pathlib import Path

from gazelab import (
    ModelKind,
    NegativeMode,
    ObjLevel,
    TaskConfig,
    error_factor_analysis,
    export_tree_report,
    fit_all_cavs,
    run_task,
    score_table,
    train_pcbm,
)

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from synthfix import make_compositional, make_error_fixture, make_linear_task  # noqa: E402


def main():
    labels, feats = make_linear_task(0, n=600)

    print("== task grid, MLP head (mean F1 over balanced draws) ==")
    corner = "train \\ test"
    print(f"  {corner:14s} {'EN vs S':>10s} {'EN+HN vs S':>12s}")
    for train_neg in (ObjLevel.EN, ObjLevel.HN):
        cells = []
        for test_neg in (frozenset({ObjLevel.EN}), frozenset({ObjLevel.EN, ObjLevel.HN})):
            cfg = TaskConfig(
                train_negatives=train_neg,
                test_negatives=test_neg,
                model=ModelKind.MLP,
                seed=3,
                mlp_epochs=120,
                mlp_lr=2e-2,
            )
            report = run_task(cfg, labels, feats)
            cells.append(f"{report.mean_f1:.3f}({report.std_f1:.3f})")
        print(f"  {train_neg.name + ' vs S':14s} {cells[0]:>10s} {cells[1]:>12s}")
    cfg = TaskConfig(
        train_negatives=ObjLevel.EN,
        test_negatives=frozenset({ObjLevel.EN}),
        model=ModelKind.MLP,
        seed=3,
    )
    report = run_task(cfg, labels, feats)
    print(f"  baselines for the EN test: {report.baselines}")
    print()

    print("== interpretable head on concept coordinates ==")
    comp_labels, comp_emb = make_compositional(seed=1, n=240, dim=16)
    cavs = fit_all_cavs(
        comp_emb, comp_labels, mode=NegativeMode.EN_ONLY, seed=7, c_grid=(0.1, 1.0, 10.0)
    )
    scores = score_table(comp_emb, cavs)
    result = train_pcbm(scores, comp_labels, ModelKind.PCBM_DT, seed=9, tree_max_depth=4)
    print(f"  tree F1 on the held-out fold: {result.report.mean_f1:.3f}")
    print("  first levels of the fitted tree:")
    for line in export_tree_report(result.model).splitlines()[:8]:
        print("   ", line)
    print()

    print("== error factors when the model fails exactly on hard negatives ==")
    err_labels, err_preds = make_error_fixture(0)
    weights = error_factor_analysis(err_labels, err_preds, l2=1.0).weights
    for name in ("S", "HN", "EN"):
        sign = "helps" if weights[name] > 0 else "hurts"
        print(f"  {name:2s}: {weights[name]:+.3f}  ({sign} classification)")


if __name__ == "__main__":
    main()
