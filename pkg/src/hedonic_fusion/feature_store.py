"""Ingest feature/attribute tables and assemble design matrices.

File contract (all UTF-8 CSV with a header row):
  - attributes.csv: id, <price column>, <cluster column>, then attributes.
  - {encoder}.csv:  id, then the encoder's feature columns.
  - manifest JSON:  {"encoders": {name: {"columns": [...], "kinds": [...]}},
                     "attributes": [...],
                     "price_column": "log_price", "cluster_column": "cluster"}

Prices are ingested already in logs and already inflation-adjusted; the
pipeline never touches raw dollars.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core_types import (
    COLUMN_KINDS,
    LOG_PRICE_RANGE,
    PREFIX_SEP,
    DesignMatrix,
    EncoderCombo,
    FeatureBlock,
    PropertyRecord,
    enumerate_combos,  # re-exported; combo enumeration lives with the types
)

__all__ = [
    "SchemaManifest",
    "Dataset",
    "IngestError",
    "load_dataset",
    "assemble_design_matrix",
    "enumerate_combos",
]

log = logging.getLogger(__name__)

ATTRIBUTES_FILENAME = "attributes.csv"


class IngestError(ValueError):
    """Fatal dataset-loading problem (missing file, invariant violation, ...)."""


@dataclass(frozen=True)
class SchemaManifest:
    """Expected columns and column kinds for every file in a dataset."""

    encoders: dict[str, tuple[tuple[str, ...], tuple[str, ...]]]  # name -> (columns, kinds)
    attributes: tuple[str, ...]
    price_column: str = "log_price"
    cluster_column: str = "cluster"

    def __post_init__(self):
        for name, (columns, kinds) in self.encoders.items():
            if PREFIX_SEP in name:
                raise IngestError(f"encoder name {name!r} contains {PREFIX_SEP!r}")
            if len(columns) != len(set(columns)):
                raise IngestError(f"duplicate columns in encoder {name!r}")
            if len(columns) != len(kinds):
                raise IngestError(f"encoder {name!r}: columns/kinds length mismatch")
            bad = sorted(set(kinds) - set(COLUMN_KINDS))
            if bad:
                raise IngestError(f"encoder {name!r}: unknown column kinds {bad}")
        if len(self.attributes) != len(set(self.attributes)):
            raise IngestError("duplicate attribute columns")

    @property
    def encoder_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.encoders))

    def to_dict(self) -> dict:
        return {
            "encoders": {
                name: {"columns": list(cols), "kinds": list(kinds)}
                for name, (cols, kinds) in sorted(self.encoders.items())
            },
            "attributes": list(self.attributes),
            "price_column": self.price_column,
            "cluster_column": self.cluster_column,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaManifest":
        return cls(
            encoders={
                name: (tuple(spec["columns"]), tuple(spec["kinds"]))
                for name, spec in d["encoders"].items()
            },
            attributes=tuple(d["attributes"]),
            price_column=d.get("price_column", "log_price"),
            cluster_column=d.get("cluster_column", "cluster"),
        )

    @classmethod
    def load(cls, path) -> "SchemaManifest":
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except FileNotFoundError:
            raise IngestError(f"manifest not found: {path}") from None
        except (json.JSONDecodeError, KeyError) as exc:
            raise IngestError(f"manifest {path} does not parse: {exc}") from exc


@dataclass
class Dataset:
    """Ingested dataset: records sorted by id, one block per encoder."""

    records: list[PropertyRecord]
    blocks: dict[str, FeatureBlock]
    manifest: SchemaManifest
    warnings: list[str] = field(default_factory=list)
    n_dropped_join: int = 0

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.log_price for r in self.records])

    @property
    def clusters(self) -> tuple[str, ...]:
        return tuple(r.cluster for r in self.records)

    def attribute_matrix(self) -> np.ndarray:
        return np.array([r.attributes for r in self.records])

    def index_of(self, ids) -> np.ndarray:
        """Row positions of the given ids, in the given order."""
        pos = {pid: i for i, pid in enumerate(self.ids)}
        return np.array([pos[i] for i in ids], dtype=np.intp)


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise IngestError(f"missing file: {path}")
    df = pd.read_csv(path, dtype={"id": str})
    if "id" not in df.columns:
        raise IngestError(f"{path.name}: no id column")
    dupes = df["id"][df["id"].duplicated()]
    if not dupes.empty:
        raise IngestError(f"{path.name}: duplicate id {dupes.iloc[0]!r}")
    return df


def _check_block_invariants(name: str, df: pd.DataFrame, columns, kinds) -> None:
    """Fatal on the first violated row, naming the id and column."""
    values = df[list(columns)].to_numpy(dtype=np.float64)
    ids = df["id"].to_numpy()
    nan_rows, nan_cols = np.nonzero(~np.isfinite(values))
    if nan_rows.size:
        r, c = nan_rows[0], nan_cols[0]
        raise IngestError(
            f"{name}: missing or non-finite value at id {ids[r]!r}, column {columns[c]!r}"
        )
    kinds = np.asarray(kinds)
    conf = kinds == "confidence"
    if conf.any():
        block = values[:, conf]
        bad = np.nonzero((block < 0.0) | (block > 1.0))
        if bad[0].size:
            r, c = bad[0][0], np.nonzero(conf)[0][bad[1][0]]
            raise IngestError(
                f"{name}: confidence outside [0,1] at id {ids[r]!r}, column {columns[c]!r}"
            )
        sums = block.sum(axis=1)
        off = np.nonzero(np.abs(sums - 1.0) > 1e-3)[0]
        if off.size:
            raise IngestError(
                f"{name}: confidence row for id {ids[off[0]]!r} sums to "
                f"{sums[off[0]]:.6f}, expected 1"
            )
    cnt = kinds == "count"
    if cnt.any():
        block = values[:, cnt]
        bad = np.nonzero((block < 0) | (block != np.floor(block)))
        if bad[0].size:
            r, c = bad[0][0], np.nonzero(cnt)[0][bad[1][0]]
            raise IngestError(
                f"{name}: count not a non-negative integer at id {ids[r]!r}, "
                f"column {columns[c]!r}"
            )
    prop = kinds == "proportion"
    if prop.any():
        block = values[:, prop]
        bad = np.nonzero((block < 0.0) | (block > 1.0))
        if bad[0].size:
            r, c = bad[0][0], np.nonzero(prop)[0][bad[1][0]]
            raise IngestError(
                f"{name}: proportion outside [0,1] at id {ids[r]!r}, column {columns[c]!r}"
            )
        sums = block.sum(axis=1)
        off = np.nonzero(sums > 1.0 + 1e-6)[0]
        if off.size:
            raise IngestError(
                f"{name}: proportions for id {ids[off[0]]!r} sum to {sums[off[0]]:.6f} > 1"
            )


def load_dataset(manifest_path, data_dir) -> Dataset:
    """Load attributes + every manifest encoder file, inner-joined on id.

    Properties must appear in the attributes file and in every feature file;
    ids dropped by the join produce a warning with the count. Any invariant
    violation inside a file is fatal. Row order is canonical by id.
    """
    manifest = SchemaManifest.load(manifest_path)
    data_dir = Path(data_dir)
    warnings: list[str] = []

    attr_df = _read_csv(data_dir / ATTRIBUTES_FILENAME)
    needed = [manifest.price_column, manifest.cluster_column, *manifest.attributes]
    missing = [c for c in needed if c not in attr_df.columns]
    if missing:
        raise IngestError(f"attributes.csv: missing columns {missing}")

    frames: dict[str, pd.DataFrame] = {}
    id_sets = [set(attr_df["id"])]
    for name in manifest.encoder_names:
        columns, kinds = manifest.encoders[name]
        df = _read_csv(data_dir / f"{name}.csv")
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise IngestError(f"{name}.csv: missing columns {missing[:5]}")
        _check_block_invariants(f"{name}.csv", df, columns, kinds)
        frames[name] = df
        id_sets.append(set(df["id"]))

    shared = set.intersection(*id_sets)
    total = set.union(*id_sets)
    dropped = len(total) - len(shared)
    if dropped:
        warnings.append(f"{dropped} id(s) dropped by the inner join")
    if not shared:
        raise IngestError("inner join is empty: no id present in every file")
    order = sorted(shared)
    log.info(
        "join: %d shared ids of %d seen across %d files",
        len(shared),
        len(total),
        1 + len(frames),
    )

    attr_df = attr_df.set_index("id").loc[order]
    prices = attr_df[manifest.price_column].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(prices)):
        bad = order[int(np.nonzero(~np.isfinite(prices))[0][0])]
        raise IngestError(f"attributes.csv: non-finite {manifest.price_column} at id {bad!r}")
    lo, hi = LOG_PRICE_RANGE
    outside = int(np.count_nonzero((prices < lo) | (prices > hi)))
    if outside:
        warnings.append(
            f"{outside} log price(s) outside the realistic range [{lo}, {hi}]"
        )
    attrs = attr_df[list(manifest.attributes)].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(attrs)):
        r, c = np.argwhere(~np.isfinite(attrs))[0]
        raise IngestError(
            f"attributes.csv: missing value at id {order[r]!r}, "
            f"column {manifest.attributes[c]!r}"
        )
    clusters = attr_df[manifest.cluster_column].astype(str).tolist()

    records = [
        PropertyRecord(pid, float(prices[i]), tuple(attrs[i]), clusters[i])
        for i, pid in enumerate(order)
    ]

    blocks = {}
    for name in manifest.encoder_names:
        columns, kinds = manifest.encoders[name]
        df = frames[name].set_index("id").loc[order]
        blocks[name] = FeatureBlock(
            encoder_name=name,
            columns=columns,
            kinds=kinds,
            ids=tuple(order),
            values=df[list(columns)].to_numpy(dtype=np.float64),
        )

    for w in warnings:
        log.warning("%s", w)
    return Dataset(records, blocks, manifest, warnings, n_dropped_join=dropped)


def assemble_design_matrix(
    dataset: Dataset,
    combo: EncoderCombo | None,
    include_attributes: bool,
    standardize: bool = False,
) -> DesignMatrix:
    """Concatenate the combo's feature blocks (prefixed) plus attributes.

    Zero-variance columns (exactly constant) are dropped and recorded on the
    result. With standardize=True the surviving columns are scaled to mean 0,
    sample sd 1, with (mean, scale) retained for transforming test rows.
    """
    if combo is None and not include_attributes:
        raise ValueError("empty design: no combo and no attributes")
    parts: list[np.ndarray] = []
    names: list[str] = []
    if combo is not None:
        for member in combo.members:
            if member not in dataset.blocks:
                raise ValueError(f"encoder {member!r} not in dataset")
            block = dataset.blocks[member]
            parts.append(block.values)
            names.extend(f"{member}{PREFIX_SEP}{c}" for c in block.columns)
    if include_attributes:
        parts.append(dataset.attribute_matrix())
        names.extend(dataset.manifest.attributes)

    X = np.hstack(parts)
    constant = np.ptp(X, axis=0) == 0.0
    dropped = tuple(n for n, c in zip(names, constant) if c)
    if dropped:
        X = X[:, ~constant]
        names = [n for n, c in zip(names, constant) if not c]

    dm = DesignMatrix(
        X=X,
        column_names=tuple(names),
        y=dataset.y,
        ids=dataset.ids,
        clusters=dataset.clusters,
        dropped_columns=dropped,
    )
    return dm.standardized() if standardize else dm
