"""One train/predict contract over the eight model families."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.special import expit

from ..errors import DataError, ManifestError, SchemaMismatchError
from . import boosting, forest, hazard, mlp
from .dataset import Dataset, fingerprint
from .tree import FrozenTree

FAMILIES = ("lasso", "ridge", "random_forest", "xgb_like", "lgbm_like",
            "survival_forest", "nn3", "nn5")

DISPLAY_NAMES = {
    "lasso": "LASSO",
    "ridge": "Ridge",
    "random_forest": "Random Forest",
    "xgb_like": "XG Boost",
    "lgbm_like": "Light GBM",
    "survival_forest": "RF Survival",
    "nn3": "NN3",
    "nn5": "NN5",
}

TREE_FAMILIES = {"random_forest", "xgb_like", "lgbm_like", "survival_forest"}

_FOREST = {"n_trees": 100, "mtry": "sqrt", "max_depth": None, "min_leaf": 1,
           "bootstrap": True, "max_bins": 64}

DEFAULTS: dict[str, dict[str, Any]] = {
    # lam is the penalty per training observation; the fitted objective uses lam * n
    "lasso": {"lam": 1e-3},
    "ridge": {"lam": 1e-3},
    "random_forest": dict(_FOREST),
    "survival_forest": {**_FOREST, "min_leaf": 5, "horizon": 1.0},
    "xgb_like": {"rounds": 100, "learning_rate": 0.1, "max_depth": 6, "l2_reg": 1.0,
                 "min_leaf": 1, "min_child_weight": 1.0, "max_bins": 64},
    "lgbm_like": {"rounds": 100, "learning_rate": 0.1, "max_leaves": 31, "max_depth": -1,
                  "l2_reg": 0.0, "min_leaf": 20, "min_child_weight": 1e-3, "max_bins": 64},
    "nn3": {"epochs": 30, "learning_rate": 0.01, "batch_size": 128, "final_init": "normal",
            "momentum": 0.9},
    "nn5": {"epochs": 30, "learning_rate": 0.01, "batch_size": 128, "final_init": "normal",
            "momentum": 0.9},
}

_LAMBDAS = [float(v) for v in np.logspace(-4, 0, 7)]
_FOREST_GRID = {"n_trees": [100, 300], "mtry": ["sqrt", "third"], "max_depth": [6, 12, None]}
DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "lasso": {"lam": _LAMBDAS},
    "ridge": {"lam": _LAMBDAS},
    "random_forest": dict(_FOREST_GRID),
    "survival_forest": dict(_FOREST_GRID),
    "xgb_like": {"rounds": [100, 300], "learning_rate": [0.05, 0.1], "max_depth": [3, 6],
                 "l2_reg": [0.0, 1.0]},
    "lgbm_like": {"rounds": [100, 300], "learning_rate": [0.05, 0.1], "max_leaves": [15, 31],
                  "l2_reg": [0.0, 1.0]},
    "nn3": {"epochs": [30, 100], "learning_rate": [0.01, 0.001]},
    "nn5": {"epochs": [30, 100], "learning_rate": [0.01, 0.001]},
}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ManifestError(f"unknown model family {self.family!r}")
        bad = set(self.hyperparameters) - set(DEFAULTS[self.family])
        if bad:
            raise ManifestError(f"invalid hyperparameters for {self.family}: {sorted(bad)}")

    @property
    def params(self) -> dict[str, Any]:
        return {**DEFAULTS[self.family], **self.hyperparameters}

    def label(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.hyperparameters.items()))
        return f"{self.family}({inner})"


def expand_grid(family: str, grid: Mapping[str, list] | None = None, seed: int = 0) -> list[ModelSpec]:
    """Cartesian product of a grid in key order; ``None`` uses the default grid."""
    grid = DEFAULT_GRIDS[family] if grid is None else grid
    keys = list(grid)
    specs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        specs.append(ModelSpec(family, dict(zip(keys, combo)), seed))
    if not specs:
        raise ManifestError(f"empty grid for {family}")
    return specs


@dataclass
class TrainedModel:
    family: str
    hyperparameters: dict
    seed: int
    feature_names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    params: Any
    info: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.feature_names)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.family, {k: v for k, v in self.hyperparameters.items()
                                       if DEFAULTS[self.family].get(k, object()) != v}, self.seed)


def train(spec: ModelSpec, data: Dataset) -> TrainedModel:
    """Fit ``spec`` on ``data`` (features standardized with the data's own stats)."""
    hp = spec.params
    fam = spec.family
    Z = data.Z
    y = data.y
    if fam not in TREE_FAMILIES and np.isnan(Z).any():
        raise DataError(f"{fam} requires fully imputed inputs; residual missing values found")
    info = {}
    if fam in ("lasso", "ridge"):
        penalty = "l1" if fam == "lasso" else "l2"
        b0, beta, obj = hazard.train_penalized_hazard(Z, y, penalty, hp["lam"] * data.n)
        params = {"intercept": float(b0), "coef": np.asarray(beta, dtype=float)}
        info["objective"] = obj
    elif fam == "random_forest":
        params = forest.train_random_forest(
            Z, y, n_trees=hp["n_trees"], mtry=hp["mtry"], max_depth=hp["max_depth"],
            min_leaf=hp["min_leaf"], seed=spec.seed, bootstrap=hp["bootstrap"],
            max_bins=hp["max_bins"])
    elif fam == "survival_forest":
        if data.time is None:
            raise DataError("survival forest needs survival pairs")
        params = forest.train_survival_forest(
            Z, data.time, data.status, n_trees=hp["n_trees"], mtry=hp["mtry"],
            min_leaf=hp["min_leaf"], max_depth=hp["max_depth"], seed=spec.seed,
            bootstrap=hp["bootstrap"], max_bins=hp["max_bins"])
    elif fam in ("xgb_like", "lgbm_like"):
        params = boosting.train_gbt(
            Z, y, variant="level_wise" if fam == "xgb_like" else "leaf_wise",
            rounds=hp["rounds"], learning_rate=hp["learning_rate"], max_depth=hp["max_depth"],
            max_leaves=hp.get("max_leaves", 31), l2_reg=hp["l2_reg"], min_leaf=hp["min_leaf"],
            min_child_weight=hp["min_child_weight"], seed=spec.seed, max_bins=hp["max_bins"])
    else:
        layers = mlp.NN3 if fam == "nn3" else mlp.NN5
        params, history = mlp.train_mlp(
            Z, y, layers=layers, epochs=hp["epochs"], learning_rate=hp["learning_rate"],
            batch_size=hp["batch_size"], seed=spec.seed, final_init=hp["final_init"],
            momentum=hp["momentum"])
        info["loss_history"] = history
    return TrainedModel(fam, hp, spec.seed, data.feature_names, data.mean, data.sd, params, info)


def _raw_matrix(X, feature_names, model):
    if isinstance(X, Dataset):
        feature_names = X.feature_names
        X = X.X
    if feature_names is None:
        raise SchemaMismatchError("predict needs the feature names of its input")
    if fingerprint(tuple(feature_names)) != model.fingerprint:
        raise SchemaMismatchError(
            f"input schema fingerprint {fingerprint(tuple(feature_names))} does not match "
            f"model fingerprint {model.fingerprint}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if np.isinf(X).any():
        raise DataError("non-finite feature values")
    if model.family not in TREE_FAMILIES and np.isnan(X).any():
        raise DataError(f"{model.family} cannot score rows with missing values")
    return X


def predict(model: TrainedModel, X, feature_names=None) -> np.ndarray:
    """Risk score per row; higher means riskier.

    All families except ``survival_forest`` return probabilities in (0, 1);
    the survival forest returns the one-year cumulative hazard.
    """
    X = _raw_matrix(X, feature_names, model)
    Z = (X - model.mean) / model.sd
    fam = model.family
    p = model.params
    if fam in ("lasso", "ridge"):
        return expit(p["intercept"] + Z @ p["coef"])
    if fam == "random_forest":
        return forest.predict_forest(p, Z)
    if fam == "survival_forest":
        return forest.predict_survival_forest(p, Z, model.hyperparameters["horizon"])
    if fam in ("xgb_like", "lgbm_like"):
        return p.predict(Z)
    return mlp.predict_proba(p, Z)


# ---------------------------------------------------------------------------
# serialization

FORMAT = "distress-bench-model"
FORMAT_VERSION = 1


def _params_to_json(fam, p):
    if fam in ("lasso", "ridge"):
        return {"intercept": p["intercept"], "coef": p["coef"].tolist()}
    if fam == "random_forest":
        return {"trees": [t.to_dict() for t in p]}
    if fam == "survival_forest":
        return {"trees": [t.to_dict() for t in p]}
    if fam in ("xgb_like", "lgbm_like"):
        return {"base_margin": p.base_margin, "trees": [t.to_dict() for t in p.trees],
                "train_loss": p.train_loss}
    return {"layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in p]}


def _params_from_json(fam, d):
    if fam in ("lasso", "ridge"):
        return {"intercept": float(d["intercept"]), "coef": np.array(d["coef"], dtype=float)}
    if fam == "random_forest":
        return [FrozenTree.from_dict(t) for t in d["trees"]]
    if fam == "survival_forest":
        return [forest.SurvivalTree.from_dict(t) for t in d["trees"]]
    if fam in ("xgb_like", "lgbm_like"):
        return boosting.BoostedEnsemble(float(d["base_margin"]),
                                        [FrozenTree.from_dict(t) for t in d["trees"]],
                                        list(d["train_loss"]))
    return [[np.array(layer["W"], dtype=float).reshape(len(layer["W"]), -1),
             np.array(layer["b"], dtype=float)] for layer in d["layers"]]


def dumps(model: TrainedModel) -> str:
    """Self-describing JSON text; floats round-trip exactly."""
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "family": model.family,
        "hyperparameters": model.hyperparameters,
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "fingerprint": model.fingerprint,
        "mean": model.mean.tolist(),
        "sd": model.sd.tolist(),
        "params": _params_to_json(model.family, model.params),
    }
    return json.dumps(doc, sort_keys=True)


def loads(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise DataError("not a distress-bench model file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {doc.get('version')}")
    names = tuple(doc["feature_names"])
    if fingerprint(names) != doc["fingerprint"]:
        raise DataError("model file fingerprint does not match its feature names")
    fam = doc["family"]
    return TrainedModel(fam, doc["hyperparameters"], doc["seed"], names,
                        np.array(doc["mean"], dtype=float), np.array(doc["sd"], dtype=float),
                        _params_from_json(fam, doc["params"]))


def save(model: TrainedModel, path: str) -> None:
    from ..io import atomic_write
    atomic_write(path, dumps(model))


def load(path: str) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
