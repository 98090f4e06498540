"""``distress-bench <command> --manifest <path> [--threads N] [--out DIR]``

Commands write plot-ready CSV tables (and PNG figures) under the output
directory.  Errors go to standard error as ``distress-bench: error[<kind>]:
<message>`` with exit codes 2 (manifest), 3 (data) and 4 (numerical).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import plotting
from .credit import MarketConfig, load_k_by_year, simulate_competition, write_market
from .errors import DistressBenchError, ManifestError
from .evaluation import (build_report, expanding_window_plan, subset_report,
                         tune_and_forecast, walk_forward, write_forecasts, write_report,
                         write_tuning)
from .insight import permutation_importance, rank_heatmap, reduced_predictor_set
from .io import write_table
from .manifest import RunManifest, Stage
from .models import DISPLAY_NAMES
from .models.dataset import panel_matrix
from .panel import DataManifest, correlation_with_default, impute_last_observation, load_panel
from .panel import summarize, winsorize, write_panel
from .parallel import set_threads
from .raw import build_panel, synthesize_bundle
from .synthetic import synthesize_panel

log = logging.getLogger("distress_bench")

OUT_ENV = "DISTRESS_BENCH_OUT"
COMMANDS = ("synth", "features", "benchmark", "importance", "reduce", "credit-sim", "report")


class Run:
    def __init__(self, manifest: RunManifest, out: str):
        self.m = manifest
        self.out = out
        self._panel = None

    def path(self, *parts) -> str:
        return os.path.join(self.out, *parts)

    # inputs

    def raw_root(self) -> str:
        raw = self.m.raw
        if "synthesize" in raw:
            opts = dict(raw["synthesize"])
            if "years" in opts:
                opts["years"] = tuple(opts["years"])
            return synthesize_bundle(self.path("features", "raw"), **opts).root
        return self.m.path(raw["path"])

    def panel(self):
        if self._panel is None:
            m = self.m
            m.require_panel_source()
            if m.panel_manifest:
                panel = load_panel(DataManifest.load(m.path(m.panel_manifest)))
            elif m.synthetic is not None:
                panel = synthesize_panel(m.synthetic)
            else:
                panel, dropped = build_panel(self.raw_root(), m.raw.get("floor_drift", True),
                                             m.raw.get("naive_dd", False))
                log.info("%d firm-years dropped while joining raw inputs", dropped)
            if m.impute:
                panel = impute_last_observation(panel)
            self._panel = panel
        return self._panel

    def plans(self):
        self.m.require_years()
        return expanding_window_plan(self.m.first_data_year, self.m.first_test_year,
                                     self.m.last_test_year)

    def forecasts(self, stage, transform=None, algorithms=None):
        panel = self.panel()
        out = {}
        for fam in algorithms or self.m.algorithms:
            out[(fam, stage.name)] = walk_forward(
                panel, fam, self.m.grid(fam), self.plans(), stage.groups, stage.features,
                self.m.seed, transform, self.m.reduce.get("pca_threshold", 0.95))
        return out


# ---------------------------------------------------------------------------
# commands


def cmd_synth(run: Run) -> None:
    if run.m.synthetic is None:
        raise ManifestError("synth needs data.synthetic")
    write_panel(synthesize_panel(run.m.synthetic), run.path("synth", "panel.csv"))


def cmd_features(run: Run) -> None:
    if run.m.raw is None:
        raise ManifestError("features needs data.raw")
    panel, dropped = build_panel(run.raw_root(), run.m.raw.get("floor_drift", True),
                                 run.m.raw.get("naive_dd", False))
    write_panel(panel, run.path("features", "panel.csv"))
    write_table(run.path("features", "build.csv"), ["records", "dropped_no_macro"],
                [[len(panel), dropped]])


def cmd_benchmark(run: Run) -> None:
    forecasts = {}
    for stage in run.m.stages:
        forecasts.update(run.forecasts(stage))
    report = build_report(forecasts, run.m.periods)
    write_report(report, run.path("benchmark", "table2.csv"))
    write_forecasts(forecasts, run.path("benchmark", "forecasts.csv"))
    write_tuning(forecasts, run.path("benchmark", "tuning.csv"))
    last = run.m.stages[-1].name
    curves, rows = {}, []
    for alg in run.m.algorithms:
        res = subset_report(forecasts[(alg, last)], ["full"])[0]
        curves[DISPLAY_NAMES[alg]] = res.roc
        rows.extend([DISPLAY_NAMES[alg], float(x), float(y)] for x, y in res.roc)
    write_table(run.path("benchmark", "roc.csv"), ["algorithm", "fpr", "tpr"], rows, digits=8)
    plotting.roc_figure(curves, run.path("benchmark", "roc.png"), f"ROC, stage {last}")


def cmd_importance(run: Run) -> None:
    opts = run.m.importance
    stage = run.m.stage(opts.get("stage"))
    panel = run.panel()
    plan = run.plans()[-1]
    repeats = int(opts.get("repeats", 10))
    seed = int(opts.get("seed", run.m.seed))
    years = [plan.test_year] if opts.get("on", "test") == "test" else list(plan.validation_years)
    sub = panel.select_years(years)
    tables = {}
    for fam in run.m.algorithms:
        fc = tune_and_forecast(panel, fam, run.m.grid(fam), plan, stage.groups, stage.features,
                               run.m.seed)
        names = fc.model.feature_names
        tables[DISPLAY_NAMES[fam]] = permutation_importance(
            fc.model, panel_matrix(sub, names), sub.label, names, repeats, seed,
            DISPLAY_NAMES[fam])
    models = list(tables)
    first = tables[models[0]]
    rows = [[f, *(tables[m].as_dict()[f] for m in models)] for f in first.feature_names]
    write_table(run.path("importance", "importance.csv"), ["feature", *models], rows, digits=8)
    grid = rank_heatmap(tables, int(opts.get("top_n", 25)))
    write_table(run.path("importance", "ranking.csv"), ["feature", *grid.models, "rank_sum"],
                [[f, *map(int, r), int(s)] for f, r, s in
                 zip(grid.features, grid.ranks, grid.rank_sums)])
    plotting.rank_heatmap_figure(grid.features, grid.models, grid.ranks,
                                 run.path("importance", "heatmap.png"))


def cmd_reduce(run: Run) -> None:
    panel = run.panel()
    reduced = [f for f in reduced_predictor_set() if f in panel.feature_names]
    missing = sorted(set(reduced_predictor_set()) - set(reduced))
    if missing:
        log.warning("reduced predictor set: %s not in the panel", ", ".join(missing))
    stage = run.m.stage(run.m.reduce.get("stage"))
    rows = []
    for label, st, transform in (("reduced_predictors", Stage("reduced", features=tuple(reduced)), None),
                                 ("pca", stage, "pca")):
        fc = run.forecasts(st, transform)
        rows.append([label, *(subset_report(fc[(a, st.name)], ["full"])[0].auc
                              for a in run.m.algorithms)])
    write_table(run.path("reduce", "table4.csv"),
                ["method", *(DISPLAY_NAMES[a] for a in run.m.algorithms)], rows)


def cmd_credit(run: Run) -> None:
    opts = run.m.credit
    stage = run.m.stage(opts.get("stage"))
    forecasts = run.forecasts(stage)
    years = range(run.m.first_test_year, run.m.last_test_year + 1)
    if "k_by_year" in opts:
        kby = opts["k_by_year"]
        k_by_year = load_k_by_year(run.m.path(kby)) if isinstance(kby, str) else {
            int(y): float(v) for y, v in kby.items()}
    else:
        k_by_year = {y: float(opts.get("k", 0.01)) for y in years}
    config = MarketConfig(k_by_year, int(round(float(opts.get("market_size", 1e8)) * 100)),
                          float(opts.get("lgd", 0.45)))
    result = simulate_competition({a: forecasts[(a, stage.name)] for a in run.m.algorithms},
                                  config)
    write_market(result, run.path("credit", "table5.csv"), opts.get("income_basis", "per_year"))


def cmd_report(run: Run) -> None:
    panel = run.panel()
    if run.m.report.get("winsorize"):
        panel = winsorize(panel)
    stats = summarize(panel)
    rows = []
    for f in panel.schema:
        s = stats[f.name]
        rows.append([f.name, f.group] + ([s.mean, s.sd, s.p25, s.median, s.p75, s.n]
                                         if s else [None] * 5 + [0]))
    write_table(run.path("report", "table1.csv"),
                ["feature", "group", "mean", "sd", "p25", "median", "p75", "n"], rows)
    corr = correlation_with_default(panel)
    write_table(run.path("report", "correlations.csv"), ["feature", "correlation"],
                [[k, v] for k, v in corr.items()], digits=8)
    plotting.correlation_figure(corr, run.path("report", "correlations.png"))
    counts = [[int(y), int((panel.year == y).sum()), int(panel.label[panel.year == y].sum())]
              for y in np.unique(panel.year)]
    write_table(run.path("report", "defaults_by_year.csv"), ["year", "firm_years", "defaults"],
                counts)


HANDLERS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "benchmark": cmd_benchmark,
    "importance": cmd_importance,
    "reduce": cmd_reduce,
    "credit-sim": cmd_credit,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distress-bench",
                                description="Bankruptcy-prediction benchmarking toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--manifest", required=True, help="run manifest (YAML)")
    p.add_argument("--threads", type=int, default=1, help="worker cap; results do not change")
    p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the manifest)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_out(args, manifest: RunManifest) -> str:
    if args.out:
        return os.path.abspath(args.out)
    if os.environ.get(OUT_ENV):
        return os.path.abspath(os.environ[OUT_ENV])
    return manifest.path(manifest.output_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="distress-bench: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ManifestError("--threads must be >= 1")
        manifest = RunManifest.load(args.manifest)
        set_threads(args.threads)
        HANDLERS[args.command](Run(manifest, resolve_out(args, manifest)))
    except DistressBenchError as exc:
        print(f"distress-bench: error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
