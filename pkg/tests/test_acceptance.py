"""The thirteen acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line (printed in the pytest terminal summary and
to stdout) and then asserts.
"""
import copy
import filecmp
import math
import os
import time

import numpy as np
import pytest
from scipy.special import expit

from conftest import ACCEPTANCE, logistic_data
from distress_bench import cli
from distress_bench.credit import MarketConfig, quote_spread, simulate_competition
from distress_bench.evaluation import (
    SplitPlan, expanding_window_plan, subset_report, tune_and_forecast, walk_forward,
)
from distress_bench.features import EquitySeries, call_value, distance_to_default, merton_dd
from distress_bench.insight import pca_fit, permutation_importance
from distress_bench.metrics import auc
from distress_bench.models import FAMILIES
from distress_bench.models.boosting import train_gbt
from distress_bench.models.dataset import panel_matrix
from distress_bench.models.forest import predict_forest, train_cart, train_random_forest
from distress_bench.models.hazard import kkt_violation, train_penalized_hazard
from distress_bench.models.mlp import NN3, NN5, init_params, loss_and_grad
from distress_bench.synthetic import (
    SyntheticSpec, _intercept, generating_probability, synthesize_panel,
)
from distress_bench.text import Document, builtin_lexicon, finbert_aggregate, gunning_fog
from distress_bench.text import lexicon_counts

HERE = os.path.dirname(__file__)
ALL_GROUPS = ["structural", "accounting", "market", "industry", "macro", "text"]


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------


def concordance_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def test_c01_auc_oracle():
    rng = np.random.default_rng(1)
    worst, spent, done = 0.0, 0.0, 0
    while done < 1000:
        n = int(rng.integers(2, 201))
        scores = rng.integers(0, max(2, n // 3), n).astype(float)  # plenty of ties
        labels = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(int)
        if labels.min() == labels.max():
            continue
        t = time.perf_counter()
        a = auc(scores, labels)
        spent += time.perf_counter() - t
        worst = max(worst, abs(a - concordance_auc(scores, labels)))
        done += 1
    record(1, worst <= 1e-12 and spent < 5,
           f"AUC vs pairwise concordance: max diff {worst:.1e} on 1000 instances, {spent:.2f}s")


# 2 ---------------------------------------------------------------------------


def newton_mle(Z, y):
    X = np.column_stack([np.ones(len(Z)), Z])
    theta = np.zeros(X.shape[1])
    for _ in range(100):
        p = 1 / (1 + np.exp(-X @ theta))
        theta += np.linalg.solve(X.T @ (X * (p * (1 - p))[:, None]), X.T @ (y - p))
    return theta


def test_c02_penalized_hazard():
    t0 = time.perf_counter()
    Z, y = logistic_data(np.random.default_rng(2), n=200, p=3)
    ref = newton_mle(Z, y)
    gaps = []
    for pen in ("l1", "l2"):
        b0, beta, _ = train_penalized_hazard(Z, y, pen, 0.0)
        gaps.append(np.max(np.abs(np.r_[b0, beta] - ref)))
    kkt = max(kkt_violation(*train_penalized_hazard(Z, y, "l1", lam)[:2], Z, y, lam, "l1")
              for lam in (0.1, 1.0, 5.0, 20.0))
    lam_max = np.max(np.abs(Z.T @ (y - y.mean())))
    killed = train_penalized_hazard(Z, y, "l1", lam_max * 1.0001)[1]
    spent = time.perf_counter() - t0
    ok = max(gaps) <= 1e-6 and kkt <= 1e-6 and np.all(killed == 0) and spent < 10
    record(2, ok, f"MLE gap {max(gaps):.1e}, l1 KKT {kkt:.1e}, kill-lambda slopes "
                  f"{np.count_nonzero(killed)} nonzero, {spent:.2f}s")


# 3 ---------------------------------------------------------------------------


def max_rel_grad_error(layers, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((10, 6))
    y = (rng.random(10) < 0.5).astype(float)
    params = init_params(6, layers, rng)
    _, grads = loss_and_grad(params, X, y)
    h, worst = 1e-5, 0.0
    for k in range(len(params)):
        for m in range(2):
            for i in range(params[k][m].size):
                plus, minus = copy.deepcopy(params), copy.deepcopy(params)
                plus[k][m].reshape(-1)[i] += h
                minus[k][m].reshape(-1)[i] -= h
                num = (loss_and_grad(plus, X, y)[0] - loss_and_grad(minus, X, y)[0]) / (2 * h)
                ana = grads[k][m].reshape(-1)[i]
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-7))
    return worst


def test_c03_mlp_gradients():
    errs = {name: max_rel_grad_error(layers, 3) for name, layers in (("NN3", NN3), ("NN5", NN5))}
    ok = NN3 == (32, 16, 8) and NN5 == (64, 32, 16, 8, 4) and max(errs.values()) < 1e-4
    record(3, ok, "max relative gradient error " +
           ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


# 4 ---------------------------------------------------------------------------


def exhaustive_stump(Z, y):
    def g(v):
        return 0.0 if len(v) == 0 else 2 * v.mean() * (1 - v.mean())
    best = None
    for j in range(Z.shape[1]):
        for thr in np.unique(Z[:, j])[:-1]:
            left = Z[:, j] <= thr
            gain = g(y) - (left.sum() * g(y[left]) + (~left).sum() * g(y[~left])) / len(y)
            if best is None or gain > best[0] + 1e-12 * max(1.0, abs(best[0])):
                best = (gain, j, thr)
    return best


def test_c04_forest_collapse_and_stump():
    rng = np.random.default_rng(4)
    collapse_ok = True
    for seed in range(5):
        Z = rng.standard_normal((200, 6))
        y = (Z[:, 0] - Z[:, 2] + rng.standard_normal(200) > 1).astype(float)
        cart = train_cart(Z, y)
        forest = train_random_forest(Z, y, n_trees=1, mtry=6, bootstrap=False, seed=seed)
        probe = rng.standard_normal((100, 6))
        collapse_ok &= np.array_equal(predict_forest(forest, probe), cart.predict(probe))
    stump_ok, cases = True, 0
    while cases < 200:
        n = int(rng.integers(4, 33))
        Z = rng.integers(0, 5, (n, 3)).astype(float)
        y = (rng.random(n) < 0.5).astype(float)
        best = exhaustive_stump(Z, y)
        if best is None or y.min() == y.max():
            continue
        tree = train_cart(Z, y, max_depth=1)
        stump_ok &= tree.feature[0] == best[1] and tree.threshold[0] == best[2]
        cases += 1
    record(4, collapse_ok and stump_ok,
           f"B=1 forest equals CART on 5 datasets: {collapse_ok}; stump equals exhaustive "
           f"oracle on {cases} datasets (n<=32): {stump_ok}")


# 5 ---------------------------------------------------------------------------


def test_c05_boosting_monotone_loss():
    results = []
    for seed in range(3):
        rng = np.random.default_rng(50 + seed)
        Z = rng.standard_normal((400, 5))
        y = (rng.random(400) < expit(Z[:, 0] * Z[:, 1] - Z[:, 2])).astype(float)
        for variant in ("level_wise", "leaf_wise"):
            m = train_gbt(Z, y, variant=variant, rounds=120, learning_rate=0.3, max_depth=4,
                          max_leaves=12)
            loss = np.asarray(m.train_loss)
            results.append(len(loss) - 1 >= 100 and bool(np.all(np.diff(loss) <= 0)))
    record(5, all(results), f"loss non-increasing over 120 rounds: {sum(results)}/6 "
                            "(3 datasets x level-wise, leaf-wise)")


# 6 ---------------------------------------------------------------------------


def test_c06_merton():
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100):
        n = 252
        m = rng.normal(0.0004, 0.01, n)
        r = np.clip(rng.uniform(0.5, 1.5) * m + rng.normal(0, rng.uniform(0.005, 0.04), n),
                    -0.5, 0.5)
        E = float(np.exp(rng.uniform(1, 9)))
        s = EquitySeries(f"F{i}", r, m, E, E * float(np.exp(rng.uniform(-2.5, 2.5))),
                         float(rng.uniform(0, 0.08)), n)
        res = merton_dd(s)
        if not res.converged:
            worst = math.inf
            break
        e_model = float(call_value(res.V, s.face_value, s.rate, res.sigma_V))
        worst = max(worst, abs(e_model - E) / E)
    sweep = [distance_to_default(ratio * 100.0, 100.0, 0.04, 0.25) for ratio in (1.1, 1.5, 2, 4)]
    increasing = all(a < b for a, b in zip(sweep, sweep[1:]))
    record(6, worst <= 1e-8 and increasing,
           f"repricing max |E_model - E|/E = {worst:.1e} on 100 firms; DD over V/F sweep "
           f"{[round(v, 3) for v in sweep]}")


# 7 ---------------------------------------------------------------------------


def test_c07_no_leakage(small_panel):
    plans = expanding_window_plan(1990, 1993, 1999)
    shape_ok = all(max(p.train_years) <= p.test_year - 3
                   and p.validation_years == (p.test_year - 2, p.test_year - 1)
                   for p in plans)
    for bad in (((1990, 1991, 1992, 1993), (1993, 1994), 1995),
                ((1990, 1991, 1992), (1993, 1995), 1995)):
        try:
            SplitPlan(*bad)
            shape_ok = False
        except ValueError:
            pass
    from test_evaluation import shuffle_outcomes
    grids = {"lasso": {"lam": [0.001, 0.1]}, "ridge": {"lam": [0.001, 0.1]},
             "random_forest": {"n_trees": [5], "max_depth": [3, 6]},
             "xgb_like": {"rounds": [10], "max_depth": [2, 4]},
             "lgbm_like": {"rounds": [10], "max_leaves": [4, 8]},
             "survival_forest": {"n_trees": [5], "max_depth": [3, 6]},
             "nn3": {"epochs": [2, 4]}, "nn5": {"epochs": [2, 4]}}
    plan = expanding_window_plan(1990, 1997, 1997)[0]
    groups = ["structural", "accounting", "market"]
    same = 0
    for fam in FAMILIES:
        base = tune_and_forecast(small_panel, fam, grids[fam], plan, groups)
        ok = True
        for seed in range(2):
            probe = shuffle_outcomes(small_panel, 1997, seed)
            other = tune_and_forecast(probe, fam, grids[fam], plan, groups)
            ok &= other.spec == base.spec and np.array_equal(other.scores, base.scores)
        same += ok
    record(7, shape_ok and same == len(FAMILIES),
           f"{len(plans)} plans respect train<=t-3, validation={{t-2,t-1}}, test=t: {shape_ok}; "
           f"tuned spec unchanged by shuffled test labels for {same}/8 families")


# 8 ---------------------------------------------------------------------------


def population_bayes_auc(weight_norm, base_hazard):
    b = _intercept(weight_norm, base_hazard)
    z = np.linspace(-12, 12, 60001)
    phi = np.exp(-z * z / 2)
    p = expit(b + weight_norm * z)
    f1 = phi * p / (phi * p).sum()
    f0 = phi * (1 - p) / (phi * (1 - p)).sum()
    return float(f1 @ (np.cumsum(f0) - f0 / 2))


NULL_GRIDS = {
    "lasso": {"lam": [0.001]}, "ridge": {"lam": [0.001]},
    "random_forest": {"n_trees": [50]},
    "survival_forest": {"n_trees": [30], "max_depth": [8]},
    "xgb_like": {"rounds": [50]}, "lgbm_like": {"rounds": [50]},
    "nn3": {"epochs": [10]}, "nn5": {"epochs": [10]},
}


@pytest.mark.slow
def test_c08_end_to_end_benchmark():
    t0 = time.perf_counter()
    plans = expanding_window_plan(1990, 2000, 2009)
    spec = SyntheticSpec(seed=0, n_firms=500, years=(1990, 2009), noise_features=1)
    planted = synthesize_panel(spec)
    test_rows = planted.year >= 2000
    w = np.array(list(spec.signal_weights.values()))
    pop = population_bayes_auc(float(np.linalg.norm(w)), spec.base_hazard)
    bayes = auc(generating_probability(planted, spec)[test_rows], planted.label[test_rows])
    gbt = {}
    for fam, grid in (("xgb_like", {"rounds": [100], "max_depth": [2, 3]}),
                      ("lgbm_like", {"rounds": [100], "max_leaves": [4, 8]})):
        fs = walk_forward(planted, fam, grid, plans, ALL_GROUPS)
        gbt[fam] = subset_report(fs, ["full"])[0].auc
    null_spec = SyntheticSpec(seed=12, n_firms=500, years=(1990, 2009), base_hazard=0.1,
                              signal_weights={})
    null = synthesize_panel(null_spec)
    null_auc = {}
    for fam in FAMILIES:
        fs = walk_forward(null, fam, NULL_GRIDS[fam], plans, ALL_GROUPS)
        null_auc[fam] = subset_report(fs, ["full"])[0].auc
    spent = time.perf_counter() - t0
    ok = (abs(pop - 0.95) <= 0.01 and abs(bayes - 0.95) <= 0.02
          and min(gbt.values()) >= 0.85
          and all(0.45 <= a <= 0.55 for a in null_auc.values()) and spent < 600)
    record(8, ok,
           f"{len(planted)} firm-years x 10 test years; Bayes AUC population {pop:.3f}, "
           f"test-years {bayes:.3f}; GBT " + ", ".join(f"{k} {v:.3f}" for k, v in gbt.items())
           + f"; null range [{min(null_auc.values()):.3f}, {max(null_auc.values()):.3f}]"
           f"; {spent:.0f}s")


# 9 ---------------------------------------------------------------------------


def test_c09_permutation_importance():
    weights = {"sigma": 2.0}
    spec = SyntheticSpec(seed=21, n_firms=1000, years=(1990, 1999), base_hazard=0.05,
                         signal_weights=weights, noise_features=1)
    panel = synthesize_panel(spec)
    plan = expanding_window_plan(1990, 1999, 1999)[0]
    fc = tune_and_forecast(panel, "xgb_like", {"rounds": [100], "max_depth": [2, 3]}, plan,
                           ["structural", "accounting", "market"])
    holdout = synthesize_panel(SyntheticSpec(seed=22, n_firms=2000, years=(2000, 2002),
                                             base_hazard=0.05, signal_weights=weights,
                                             noise_features=1))
    names = list(fc.model.feature_names)
    imp = permutation_importance(fc.model, panel_matrix(holdout, names), holdout.label, names,
                                 repeats=10, seed=0).as_dict()
    ok = abs(imp["noise_1"]) < 0.01 and imp["sigma"] > 0.1
    record(9, ok, f"XG Boost, 10 repeats: planted sigma dAUC {imp['sigma']:.4f}, "
                  f"noise dAUC {imp['noise_1']:.4f}")


# 10 --------------------------------------------------------------------------


class _FS:
    def __init__(self, year, firms, scores, labels):
        self.test_year, self.firm_ids = year, firms
        self.scores, self.labels = np.asarray(scores, float), np.asarray(labels, int)


def test_c10_credit_simulation():
    cfg = MarketConfig({2000: 0.01, 2001: 0.01})
    spreads_ok = quote_spread(0.0, cfg, 2000) == 0.01 and quote_spread(0.1, cfg, 2000) == 0.06
    firms = [f"L{i:02d}" for i in range(20)]
    truth = np.array([1 if i in (2, 7, 11, 19) else 0 for i in range(20)])
    perfect = _FS(2000, firms, truth * 0.9, truth)
    rival = _FS(2000, firms, np.full(20, 0.05), truth)
    res = simulate_competition({"perfect": [perfect], "rival": [rival]}, cfg)
    foresight_ok = res.rows["perfect"].losses_cents == 0 and res.rows["perfect"].loans_funded == 16
    rng = np.random.default_rng(10)
    ident_ok = True
    for _ in range(50):
        n = int(rng.integers(5, 60))
        ids = [f"F{i}" for i in range(n)]
        lab = (rng.random(n) < 0.1).astype(int)
        fc = {a: [_FS(y, ids, rng.random(n) * 0.5, lab) for y in (2000, 2001)]
              for a in ("a", "b", "c")}
        r = simulate_competition(fc, cfg)
        rows = list(r.rows.values())
        ident_ok &= all(x.profit_cents == x.income_cents - x.losses_cents for x in rows)
        ident_ok &= sum(x.funded_cents for x in rows) == 2 * cfg.market_size_cents
        ident_ok &= abs(sum(r.market_share(a) for a in fc) - 100.0) < 1e-9
    record(10, spreads_ok and foresight_ok and ident_ok,
           f"spreads p=0 -> {quote_spread(0.0, cfg, 2000)}, p=0.1 -> "
           f"{quote_spread(0.1, cfg, 2000)}; perfect foresight losses "
           f"{res.rows['perfect'].losses_cents} cents; identities and 100% shares on 50 markets: "
           f"{ident_ok}")


# 11 --------------------------------------------------------------------------


def test_c11_text_measures():
    lex = builtin_lexicon()
    eq1_all = finbert_aggregate(["positive"] * 5)
    eq1_mix = finbert_aggregate(["positive"] * 3 + ["negative"] + ["neutral"] * 6)
    rate = lexicon_counts(Document("F", 2000, (("loss",) + ("x",) * 999,)), lex)["negative"]
    fog = gunning_fog(Document("F", 2000, (("cat",) * 10,)))
    ok = eq1_all == 1.0 and eq1_mix == 0.2 and rate == 1.0 and fog == 4.0
    record(11, ok, f"sentiment all-positive {eq1_all}, 3/1/10 {eq1_mix}; 1 hit in 1000 words "
                   f"-> {rate}; Gunning-Fog {fog}")


# 12 --------------------------------------------------------------------------


def test_c12_pca():
    rng = np.random.default_rng(12)
    A = rng.standard_normal((300, 3))
    A -= A.mean(axis=0)
    Q = np.linalg.qr(A)[0] * np.sqrt(299)
    X = np.column_stack([Q[:, 0], 0.9 * Q[:, 0] + math.sqrt(0.19) * Q[:, 1], Q[:, 2]])
    closed = pca_fit(X, 0.95)
    minimal, ortho = True, 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        p = int(r.integers(2, 9))
        Y = r.standard_normal((100, p)) @ r.standard_normal((p, p))
        m = pca_fit(Y, 0.95)
        cum = np.cumsum(m.explained_ratio)
        minimal &= cum[m.k - 1] >= 0.95 - 1e-12 and (m.k == 1 or cum[m.k - 2] < 0.95)
        ortho = max(ortho, np.max(np.abs(m.loadings.T @ m.loadings - np.eye(p))))
    ok = closed.k == 2 and np.allclose(closed.eigenvalues, [1.9, 1.0, 0.1]) and minimal \
        and ortho <= 1e-8
    record(12, ok, f"closed-form case k={closed.k} (eigenvalues "
                   f"{np.round(closed.eigenvalues, 6).tolist()}); minimal k on 20 panels: "
                   f"{minimal}; orthonormality error {ortho:.1e}")


# 13 --------------------------------------------------------------------------


def tree_differences(a, b):
    cmp = filecmp.dircmp(a, b)
    diffs = list(cmp.left_only) + list(cmp.right_only)
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    diffs += mismatch + errors
    for sub in cmp.common_dirs:
        diffs += [os.path.join(sub, d) for d in tree_differences(os.path.join(a, sub),
                                                                  os.path.join(b, sub))]
    return diffs


@pytest.mark.slow
def test_c13_determinism(tmp_path):
    manifest = os.path.join(HERE, "..", "configs", "synthetic.yaml")
    runs = {"a": "1", "b": "1", "c": "4"}
    for name, threads in runs.items():
        for cmd in cli.COMMANDS:
            assert cli.main([cmd, "--manifest", manifest, "--threads", threads,
                             "--out", str(tmp_path / name)]) == 0
    n_files = sum(len(f) for _, _, f in os.walk(tmp_path / "a"))
    repeat = tree_differences(tmp_path / "a", tmp_path / "b")
    threads = tree_differences(tmp_path / "a", tmp_path / "c")
    record(13, not repeat and not threads,
           f"bundled manifest, 7 commands, {n_files} files: repeat run differs in {len(repeat)}, "
           f"--threads 4 differs in {len(threads)}")
