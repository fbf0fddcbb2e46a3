"""Domain data model shared by every pipeline stage.

Everything here is immutable after construction and JSON-serializable, so
fits, reports and splits can be written to disk and reloaded bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

# The six encoders the pipeline ships with. The set is not hard-coded
# anywhere downstream: any encoder named in a schema manifest works.
DEFAULT_ENCODERS = (
    "ade20k_panoptic",
    "coco_panoptic",
    "inception",
    "mobilenet",
    "resnet50",
    "vgg16",
)

COLUMN_KINDS = ("confidence", "count", "proportion")

# Separator between encoder name and feature name in assembled matrices.
# Encoder names must not contain it.
PREFIX_SEP = ":"

METHODS = ("penalized_ols", "neural_network", "convoluted")

# Realistic log sale prices (~$163k to ~$24M). The synthetic generator stays
# inside this band; the ingester only warns outside it.
LOG_PRICE_RANGE = (12.0, 17.0)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PropertyRecord:
    """One home: id, log sale price, listing attributes, cluster label."""

    id: str
    log_price: float
    attributes: tuple[float, ...]
    cluster: str

    def __post_init__(self):
        if not np.isfinite(self.log_price):
            raise ValueError(f"property {self.id!r}: log_price not finite")
        if not self.cluster:
            raise ValueError(f"property {self.id!r}: empty cluster label")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "log_price": self.log_price,
            "attributes": list(self.attributes),
            "cluster": self.cluster,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PropertyRecord":
        return cls(d["id"], d["log_price"], tuple(d["attributes"]), d["cluster"])


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    """One encoder's feature matrix for all properties, rows keyed by id."""

    encoder_name: str
    columns: tuple[str, ...]
    kinds: tuple[str, ...]
    ids: tuple[str, ...]
    values: np.ndarray  # (n_properties, n_columns), read-only

    def __post_init__(self):
        if PREFIX_SEP in self.encoder_name:
            raise ValueError(
                f"encoder name {self.encoder_name!r} contains {PREFIX_SEP!r}"
            )
        if len(self.columns) != len(self.kinds):
            raise ValueError("columns and kinds must be parallel")
        bad = [k for k in self.kinds if k not in COLUMN_KINDS]
        if bad:
            raise ValueError(f"unknown column kinds {sorted(set(bad))}")
        if self.values.shape != (len(self.ids), len(self.columns)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.ids)} ids x {len(self.columns)} columns"
            )
        object.__setattr__(self, "values", _freeze(self.values))

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureBlock):
            return NotImplemented
        return (
            self.encoder_name == other.encoder_name
            and self.columns == other.columns
            and self.kinds == other.kinds
            and self.ids == other.ids
            and np.array_equal(self.values, other.values)
        )

    def to_dict(self) -> dict:
        return {
            "encoder_name": self.encoder_name,
            "columns": list(self.columns),
            "kinds": list(self.kinds),
            "ids": list(self.ids),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureBlock":
        return cls(
            d["encoder_name"],
            tuple(d["columns"]),
            tuple(d["kinds"]),
            tuple(d["ids"]),
            np.asarray(d["values"], dtype=np.float64),
        )


@dataclass(frozen=True)
class EncoderCombo:
    """A selection of encoders defining one model variant.

    Members are kept sorted, so a pair built from (a, b) and (b, a) is the
    same combo.
    """

    members: tuple[str, ...]
    kind: str  # single | pair | tout_ensemble

    def __post_init__(self):
        if tuple(sorted(self.members)) != self.members:
            raise ValueError("combo members must be sorted")
        if len(set(self.members)) != len(self.members):
            raise ValueError("duplicate combo members")
        expected = {"single": 1, "pair": 2}.get(self.kind)
        if self.kind == "tout_ensemble":
            if len(self.members) < 1:
                raise ValueError("tout_ensemble needs members")
        elif expected is None:
            raise ValueError(f"unknown combo kind {self.kind!r}")
        elif len(self.members) != expected:
            raise ValueError(f"{self.kind} combo needs {expected} members")

    @classmethod
    def single(cls, name: str) -> "EncoderCombo":
        return cls((name,), "single")

    @classmethod
    def pair(cls, a: str, b: str) -> "EncoderCombo":
        return cls(tuple(sorted((a, b))), "pair")

    @classmethod
    def tout(cls, names) -> "EncoderCombo":
        return cls(tuple(sorted(names)), "tout_ensemble")

    @property
    def label(self) -> str:
        """Stable identity string, used in report keys and file names."""
        return "+".join(self.members)

    @property
    def display(self) -> str:
        """Short human-readable name for rendered tables."""
        if self.kind == "tout_ensemble":
            return "tout"
        return self.label

    def to_dict(self) -> dict:
        return {"members": list(self.members), "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderCombo":
        return cls(tuple(d["members"]), d["kind"])


def enumerate_combos(encoders) -> list[EncoderCombo]:
    """All singles, all unordered pairs, and one tout ensemble.

    Degenerate sets (one or two encoders) deduplicate the tout ensemble
    against the identical single/pair by member-set identity.
    """
    names = sorted(set(encoders))
    if not names:
        raise ValueError("need at least one encoder")
    combos = [EncoderCombo.single(n) for n in names]
    combos += [EncoderCombo.pair(a, b) for a, b in combinations(names, 2)]
    combos.append(EncoderCombo.tout(names))
    seen: set[tuple[str, ...]] = set()
    out = []
    for c in combos:
        if c.members in seen:
            continue
        seen.add(c.members)
        out.append(c)
    return out


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Assembled regressor matrix plus aligned metadata for one model input.

    `standardization` is None for raw matrices, or (means, scales) after
    `standardized()`; test rows are always transformed with the training
    parameters stored on the fit, never refit.
    """

    X: np.ndarray
    column_names: tuple[str, ...]
    y: np.ndarray
    ids: tuple[str, ...]
    clusters: tuple[str, ...]
    standardization: tuple[np.ndarray, np.ndarray] | None = None
    dropped_columns: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.ids)
        if self.X.shape != (n, len(self.column_names)):
            raise ValueError(
                f"X shape {self.X.shape} does not match {n} rows x "
                f"{len(self.column_names)} columns"
            )
        if self.y.shape != (n,) or len(self.clusters) != n:
            raise ValueError("y/clusters not aligned with ids")
        object.__setattr__(self, "X", _freeze(self.X))
        object.__setattr__(self, "y", _freeze(self.y))
        if self.standardization is not None:
            means, scales = self.standardization
            object.__setattr__(
                self, "standardization", (_freeze(means), _freeze(scales))
            )

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return len(self.column_names)

    def take(self, indices) -> "DesignMatrix":
        """Row subset (e.g. one CV fold); keeps column metadata."""
        idx = np.asarray(indices, dtype=np.intp)
        return DesignMatrix(
            self.X[idx],
            self.column_names,
            self.y[idx],
            tuple(self.ids[i] for i in idx),
            tuple(self.clusters[i] for i in idx),
            self.standardization,
            self.dropped_columns,
        )

    def standardized(self) -> "DesignMatrix":
        """Scale every column to mean 0, sample sd 1, retaining (mean, scale).

        A column that is constant within these rows (possible after row
        subsetting) gets scale 1 so it maps to all zeros instead of dividing
        by zero; column count never changes here.
        """
        if self.standardization is not None:
            raise ValueError("design matrix already standardized")
        means = self.X.mean(axis=0)
        scales = self.X.std(axis=0, ddof=1)
        scales = np.where(scales == 0.0, 1.0, scales)
        return DesignMatrix(
            (self.X - means) / scales,
            self.column_names,
            self.y,
            self.ids,
            self.clusters,
            (means, scales),
            self.dropped_columns,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, DesignMatrix):
            return NotImplemented
        if self.standardization is None or other.standardization is None:
            std_eq = self.standardization is None and other.standardization is None
        else:
            std_eq = np.array_equal(
                self.standardization[0], other.standardization[0]
            ) and np.array_equal(self.standardization[1], other.standardization[1])
        return (
            std_eq
            and self.column_names == other.column_names
            and self.ids == other.ids
            and self.clusters == other.clusters
            and self.dropped_columns == other.dropped_columns
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def to_dict(self) -> dict:
        return {
            "X": self.X.tolist(),
            "column_names": list(self.column_names),
            "y": self.y.tolist(),
            "ids": list(self.ids),
            "clusters": list(self.clusters),
            "standardization": None
            if self.standardization is None
            else [self.standardization[0].tolist(), self.standardization[1].tolist()],
            "dropped_columns": list(self.dropped_columns),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignMatrix":
        std = d["standardization"]
        return cls(
            np.asarray(d["X"], dtype=np.float64),
            tuple(d["column_names"]),
            np.asarray(d["y"], dtype=np.float64),
            tuple(d["ids"]),
            tuple(d["clusters"]),
            None if std is None else (np.asarray(std[0]), np.asarray(std[1])),
            tuple(d["dropped_columns"]),
        )


@dataclass(frozen=True)
class ModelSpec:
    """One (method, encoder combo, attribute usage) cell of the model grid.

    attributes_in_nn: listing attributes fed to the neural-network stage
    (NN method inputs, or the convoluted prediction stage).
    attributes_in_ols: listing attributes in the OLS stage (the penalized-OLS
    design, or the convoluted regression stage).
    """

    method: str
    combo: EncoderCombo | None
    attributes_in_nn: bool = False
    attributes_in_ols: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "penalized_ols" and self.attributes_in_nn:
            raise ValueError("penalized_ols has no NN stage; attributes_in_nn must be False")
        if self.method == "convoluted" and self.combo is None and not self.attributes_in_nn:
            raise ValueError("convoluted spec needs a combo or attributes_in_nn (empty NN input)")
        if self.combo is None and not (self.attributes_in_nn or self.attributes_in_ols):
            raise ValueError("spec with no combo must use attributes somewhere")

    def key(self) -> str:
        combo = self.combo.label if self.combo is not None else "none"
        return (
            f"{self.method}|{combo}|nn_att={int(self.attributes_in_nn)}"
            f"|ols_att={int(self.attributes_in_ols)}|seed={self.seed}"
        )

    @classmethod
    def from_key(cls, key: str, combos_by_label: dict[str, EncoderCombo]) -> "ModelSpec":
        method, combo, nn_att, ols_att, seed = key.split("|")
        return cls(
            method=method,
            combo=None if combo == "none" else combos_by_label[combo],
            attributes_in_nn=bool(int(nn_att.split("=")[1])),
            attributes_in_ols=bool(int(ols_att.split("=")[1])),
            seed=int(seed.split("=")[1]),
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "combo": None if self.combo is None else self.combo.to_dict(),
            "attributes_in_nn": self.attributes_in_nn,
            "attributes_in_ols": self.attributes_in_ols,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            d["method"],
            None if d["combo"] is None else EncoderCombo.from_dict(d["combo"]),
            d["attributes_in_nn"],
            d["attributes_in_ols"],
            d["seed"],
        )


@dataclass(frozen=True)
class SpecResult:
    """Out-of-sample MSE for one spec: fold-wise values plus their mean."""

    mse: float | None
    fold_mses: tuple[float, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {"mse": self.mse, "fold_mses": list(self.fold_mses), "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "SpecResult":
        return cls(d["mse"], tuple(d["fold_mses"]), d["error"])


@dataclass(frozen=True)
class AggregateCell:
    """min/mean/max over combos for one (method column, input row) cell."""

    min: float
    mean: float
    max: float
    tout_mse: float | None
    n_combos: int

    def __post_init__(self):
        if not (self.min <= self.mean <= self.max):
            raise ValueError("aggregate ordering violated: min <= mean <= max")

    def to_dict(self) -> dict:
        return {
            "min": self.min,
            "mean": self.mean,
            "max": self.max,
            "tout_mse": self.tout_mse,
            "n_combos": self.n_combos,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateCell":
        return cls(d["min"], d["mean"], d["max"], d["tout_mse"], d["n_combos"])


@dataclass(frozen=True)
class PanelResult:
    """One Table-1-style cell: slope on the NN prediction with clustered SE."""

    beta: float
    se_clustered: float
    r_squared: float
    n: int

    def __post_init__(self):
        if not (-1e-9 <= self.r_squared <= 1.0 + 1e-9):
            raise ValueError(f"r_squared {self.r_squared} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "se_clustered": self.se_clustered,
            "r_squared": self.r_squared,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PanelResult":
        return cls(d["beta"], d["se_clustered"], d["r_squared"], d["n"])


@dataclass
class EvaluationReport:
    """Everything the two assessment protocols produce.

    per_spec is keyed by ModelSpec.key(); aggregates by method column then
    input row; panels by panel number then combo label.
    """

    per_spec: dict[str, SpecResult] = field(default_factory=dict)
    aggregates: dict[str, dict[str, AggregateCell]] = field(default_factory=dict)
    panels: dict[str, dict[str, PanelResult]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_spec": {k: v.to_dict() for k, v in sorted(self.per_spec.items())},
            "aggregates": {
                col: {row: cell.to_dict() for row, cell in sorted(rows.items())}
                for col, rows in sorted(self.aggregates.items())
            },
            "panels": {
                panel: {combo: r.to_dict() for combo, r in sorted(rows.items())}
                for panel, rows in sorted(self.panels.items())
            },
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            per_spec={k: SpecResult.from_dict(v) for k, v in d["per_spec"].items()},
            aggregates={
                col: {row: AggregateCell.from_dict(cell) for row, cell in rows.items()}
                for col, rows in d["aggregates"].items()
            },
            panels={
                panel: {combo: PanelResult.from_dict(r) for combo, r in rows.items()}
                for panel, rows in d["panels"].items()
            },
        )

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        return cls.from_dict(json.loads(text))
