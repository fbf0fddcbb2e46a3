"""Two-stage model: a neural-network price estimate used as an OLS regressor.

Stage 1 trains the network on the training split and predicts log prices
for everything else; stage 2 regresses log price on that prediction (plus
listing attributes when configured) using only the OLS split. Evaluation
rows never touch either stage's fitting.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audit
from .core_types import DesignMatrix, EncoderCombo, ModelSpec
from .feature_store import Dataset, assemble_design_matrix
from .linear_models import LinearFit, fit_ols, predict
from .mlp import Network, TrainConfig, TrainHistory, forward, init_network, train

log = logging.getLogger(__name__)

PREDICTION_COLUMN = "nn_prediction"
DEFAULT_FRACTIONS = (0.476, 0.262, 0.262)  # targets a ~1,803-home eval half at n=6,887


@dataclass(frozen=True)
class Splits:
    """Disjoint id sets: NN training, stage-2 OLS fitting, final evaluation."""

    train_ids: tuple[str, ...]
    ols_ids: tuple[str, ...]
    eval_ids: tuple[str, ...]

    def __post_init__(self):
        a, b, c = map(set, (self.train_ids, self.ols_ids, self.eval_ids))
        if (a & b) or (a & c) or (b & c):
            raise ValueError("split id sets overlap")

    def to_dict(self) -> dict:
        return {
            "train_ids": list(self.train_ids),
            "ols_ids": list(self.ols_ids),
            "eval_ids": list(self.eval_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Splits":
        return cls(tuple(d["train_ids"]), tuple(d["ols_ids"]), tuple(d["eval_ids"]))


def split_dataset(
    dataset: Dataset,
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
    stratify_tol: float = 0.05,
    max_redraws: int = 100,
) -> Splits:
    """Seeded three-way split with light stratification on mean log price.

    Redraws (up to max_redraws) until every pair of parts has mean log price
    within stratify_tol standard deviations; warns and keeps the last draw
    otherwise.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    n = dataset.n
    n_train = int(round(fractions[0] * n))
    n_ols = int(round(fractions[1] * n))
    n_eval = n - n_train - n_ols
    if min(n_train, n_ols, n_eval) < 2:
        raise ValueError(f"dataset too small to split {n} rows as {fractions}")

    y = dataset.y
    ids = dataset.ids
    sd = float(y.std(ddof=1))
    rng = np.random.default_rng(seed)
    for _attempt in range(max(1, max_redraws)):
        perm = rng.permutation(n)
        parts = (perm[:n_train], perm[n_train : n_train + n_ols], perm[n_train + n_ols :])
        means = [y[p].mean() for p in parts]
        spread = max(means) - min(means)
        if sd == 0.0 or spread < stratify_tol * sd:
            break
    else:
        log.warning(
            "split not stratified after %d redraws (spread %.4f sd)",
            max_redraws,
            spread / sd,
        )
    return Splits(
        tuple(sorted(ids[i] for i in parts[0])),
        tuple(sorted(ids[i] for i in parts[1])),
        tuple(sorted(ids[i] for i in parts[2])),
    )


@dataclass
class Stage1Model:
    """Trained network plus the recipe to rebuild its input rows."""

    network: Network
    combo: EncoderCombo | None
    attributes_in_nn: bool
    column_names: tuple[str, ...]
    input_means: np.ndarray
    input_scales: np.ndarray
    history: TrainHistory | None = None

    def _input_rows(self, dataset: Dataset, ids) -> np.ndarray:
        dm = assemble_design_matrix(dataset, self.combo, self.attributes_in_nn)
        pos = {name: i for i, name in enumerate(dm.column_names)}
        try:
            cols = [pos[name] for name in self.column_names]
        except KeyError as exc:
            raise ValueError(f"dataset is missing stage-1 column {exc.args[0]!r}") from None
        rows = dm.X[dataset.index_of(ids)][:, cols]
        return (rows - self.input_means) / self.input_scales

    def predict(self, dataset: Dataset, ids) -> np.ndarray:
        """Log-price predictions for the given property ids."""
        return forward(self.network, self._input_rows(dataset, ids))

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "combo": None if self.combo is None else self.combo.to_dict(),
            "attributes_in_nn": self.attributes_in_nn,
            "column_names": list(self.column_names),
            "input_means": self.input_means.tolist(),
            "input_scales": self.input_scales.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Stage1Model":
        return cls(
            network=Network.from_dict(d["network"]),
            combo=None if d["combo"] is None else EncoderCombo.from_dict(d["combo"]),
            attributes_in_nn=d["attributes_in_nn"],
            column_names=tuple(d["column_names"]),
            input_means=np.asarray(d["input_means"], dtype=np.float64),
            input_scales=np.asarray(d["input_scales"], dtype=np.float64),
        )


def fit_stage1(
    dataset: Dataset,
    combo: EncoderCombo | None,
    attributes_in_nn: bool,
    train_ids,
    cfg: TrainConfig,
) -> Stage1Model:
    """Train the price network on the given ids only.

    Columns constant within the training rows are dropped here (they can
    still vary on held-out rows, where untrained weights would inject noise).
    """
    audit.record("stage1_nn", train_ids)
    dm_full = assemble_design_matrix(dataset, combo, attributes_in_nn)
    dm_train = dm_full.take(dataset.index_of(train_ids))
    keep = np.ptp(dm_train.X, axis=0) > 0.0
    names = tuple(n for n, k in zip(dm_train.column_names, keep) if k)
    if not names:
        raise ValueError("stage 1 has no varying input columns")
    dm_train = DesignMatrix(
        dm_train.X[:, keep], names, dm_train.y, dm_train.ids, dm_train.clusters
    ).standardized()
    net = init_network(dm_train.p, seed=cfg.seed)
    net, history = train(net, dm_train, cfg)
    means, scales = dm_train.standardization
    return Stage1Model(net, combo, attributes_in_nn, names, means, scales, history)


@dataclass
class ConvolutedModel:
    stage1: Stage1Model
    stage2: LinearFit
    splits: Splits
    attributes_in_ols: bool

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "network.json").write_text(json.dumps(self.stage1.to_dict(), indent=2))
        (directory / "stage2.json").write_text(
            json.dumps(
                {"fit": self.stage2.to_dict(), "attributes_in_ols": self.attributes_in_ols},
                indent=2,
            )
        )
        (directory / "splits.json").write_text(json.dumps(self.splits.to_dict(), indent=2))

    @classmethod
    def load(cls, directory) -> "ConvolutedModel":
        directory = Path(directory)
        stage1 = Stage1Model.from_dict(json.loads((directory / "network.json").read_text()))
        s2 = json.loads((directory / "stage2.json").read_text())
        splits = Splits.from_dict(json.loads((directory / "splits.json").read_text()))
        return cls(stage1, LinearFit.from_dict(s2["fit"]), splits, s2["attributes_in_ols"])


def _stage2_matrix(dataset: Dataset, ids, prediction: np.ndarray, include_attributes: bool) -> DesignMatrix:
    idx = dataset.index_of(ids)
    names = [PREDICTION_COLUMN]
    parts = [prediction[:, None]]
    if include_attributes:
        parts.append(dataset.attribute_matrix()[idx])
        names.extend(dataset.manifest.attributes)
    return DesignMatrix(
        np.hstack(parts),
        tuple(names),
        dataset.y[idx],
        tuple(ids),
        tuple(dataset.clusters[i] for i in idx),
    )


def fit_convoluted(
    dataset: Dataset,
    spec: ModelSpec,
    splits: Splits,
    cfg: TrainConfig | None = None,
) -> ConvolutedModel:
    """Train stage 1 on `train_ids`, then stage 2 OLS on `ols_ids` only."""
    if spec.method != "convoluted":
        raise ValueError(f"spec method is {spec.method!r}, not convoluted")
    cfg = cfg if cfg is not None else TrainConfig(seed=spec.seed)
    stage1 = fit_stage1(dataset, spec.combo, spec.attributes_in_nn, splits.train_ids, cfg)
    prediction = stage1.predict(dataset, splits.ols_ids)
    audit.record("stage2_ols", splits.ols_ids)
    dm2 = _stage2_matrix(dataset, splits.ols_ids, prediction, spec.attributes_in_ols)
    stage2 = fit_ols(dm2)
    return ConvolutedModel(stage1, stage2, splits, spec.attributes_in_ols)


def predict_convoluted(model: ConvolutedModel, dataset: Dataset, ids) -> np.ndarray:
    """Final prediction: stage2(intercept + slope * stage1(rows) + attributes)."""
    prediction = model.stage1.predict(dataset, ids)
    dm = _stage2_matrix(dataset, ids, prediction, model.attributes_in_ols)
    return predict(model.stage2, dm.X)
