import json

import numpy as np
import pandas as pd
import pytest

from hedonic_fusion.core_types import EncoderCombo, PREFIX_SEP
from hedonic_fusion.feature_store import (
    IngestError,
    SchemaManifest,
    assemble_design_matrix,
    load_dataset,
)


def _write_fixture(tmp_path, attr_ids, feat_ids, bad_row_sum=None):
    manifest = {
        "encoders": {
            "resnet50": {"columns": ["c0", "c1"], "kinds": ["confidence", "confidence"]}
        },
        "attributes": ["beds"],
        "price_column": "log_price",
        "cluster_column": "cluster",
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    pd.DataFrame(
        {
            "id": attr_ids,
            "log_price": [14.0 + 0.1 * i for i in range(len(attr_ids))],
            "cluster": ["P1"] * len(attr_ids),
            "beds": [3.0] * len(attr_ids),
        }
    ).to_csv(tmp_path / "attributes.csv", index=False)
    rows = {"id": feat_ids, "c0": [0.4] * len(feat_ids), "c1": [0.6] * len(feat_ids)}
    if bad_row_sum is not None:
        rows["c0"][0], rows["c1"][0] = bad_row_sum, 0.0
    pd.DataFrame(rows).to_csv(tmp_path / "resnet50.csv", index=False)
    return tmp_path / "manifest.json"


def test_inner_join_drops_with_warning(tmp_path):
    manifest = _write_fixture(tmp_path, ["a", "b", "c"], ["a", "b"])
    ds = load_dataset(manifest, tmp_path)
    assert ds.n == 2
    assert ds.ids == ("a", "b")
    assert ds.n_dropped_join == 1
    assert any("1 id(s) dropped" in w for w in ds.warnings)


def test_confidence_sum_violation_is_fatal(tmp_path):
    manifest = _write_fixture(tmp_path, ["a", "b"], ["a", "b"], bad_row_sum=0.5)
    with pytest.raises(IngestError, match=r"sums to 0.5"):
        load_dataset(manifest, tmp_path)


def test_duplicate_id_fatal(tmp_path):
    manifest = _write_fixture(tmp_path, ["a", "a"], ["a", "b"])
    with pytest.raises(IngestError, match="duplicate id"):
        load_dataset(manifest, tmp_path)


def test_missing_file_fatal(tmp_path):
    manifest = _write_fixture(tmp_path, ["a"], ["a"])
    (tmp_path / "resnet50.csv").unlink()
    with pytest.raises(IngestError, match="missing file"):
        load_dataset(manifest, tmp_path)


def test_missing_cell_fatal(tmp_path):
    manifest = _write_fixture(tmp_path, ["a", "b"], ["a", "b"])
    df = pd.read_csv(tmp_path / "resnet50.csv")
    df.loc[0, "c0"] = np.nan
    df.to_csv(tmp_path / "resnet50.csv", index=False)
    with pytest.raises(IngestError, match="missing or non-finite"):
        load_dataset(manifest, tmp_path)


def test_count_and_proportion_invariants(tmp_path):
    manifest = {
        "encoders": {
            "coco_panoptic": {
                "columns": ["tree_count", "tree_prop"],
                "kinds": ["count", "proportion"],
            }
        },
        "attributes": ["beds"],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    pd.DataFrame(
        {"id": ["a"], "log_price": [14.0], "cluster": ["P1"], "beds": [3.0]}
    ).to_csv(tmp_path / "attributes.csv", index=False)
    pd.DataFrame({"id": ["a"], "tree_count": [1.5], "tree_prop": [0.2]}).to_csv(
        tmp_path / "coco_panoptic.csv", index=False
    )
    with pytest.raises(IngestError, match="non-negative integer"):
        load_dataset(tmp_path / "manifest.json", tmp_path)
    pd.DataFrame({"id": ["a"], "tree_count": [2], "tree_prop": [1.2]}).to_csv(
        tmp_path / "coco_panoptic.csv", index=False
    )
    with pytest.raises(IngestError, match="proportion outside"):
        load_dataset(tmp_path / "manifest.json", tmp_path)


def test_synthetic_fixture_loads_clean(small_dataset):
    assert small_dataset.n == 240
    assert len(small_dataset.blocks) == 6
    assert small_dataset.warnings == []


def test_log_price_range_warning(tmp_path):
    manifest = _write_fixture(tmp_path, ["a", "b"], ["a", "b"])
    df = pd.read_csv(tmp_path / "attributes.csv")
    df.loc[0, "log_price"] = 9.0
    df.to_csv(tmp_path / "attributes.csv", index=False)
    ds = load_dataset(manifest, tmp_path)
    assert any("outside the realistic range" in w for w in ds.warnings)


def test_assemble_column_layout(small_dataset):
    combo = EncoderCombo.pair("resnet50", "vgg16")
    dm = assemble_design_matrix(small_dataset, combo, include_attributes=True)
    r_cols = small_dataset.blocks["resnet50"].columns
    assert dm.column_names[0] == f"resnet50{PREFIX_SEP}{r_cols[0]}"
    assert dm.column_names[-1] == small_dataset.manifest.attributes[-1]
    # pair columns = union of the singles' columns (no drops in this fixture)
    single_r = assemble_design_matrix(small_dataset, EncoderCombo.single("resnet50"), False)
    single_v = assemble_design_matrix(small_dataset, EncoderCombo.single("vgg16"), False)
    pair = assemble_design_matrix(small_dataset, combo, False)
    assert set(pair.column_names) == set(single_r.column_names) | set(single_v.column_names)


def test_assemble_zero_variance_drop_arithmetic(tmp_path, rng):
    # 1000 confidence columns of which 3 are constant, plus 10 attributes
    n, p = 50, 1000
    logits = rng.normal(size=(n, p - 3))
    conf = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True) * 0.8
    block = np.column_stack([np.full(n, 0.10), np.full(n, 0.05), np.full(n, 0.05), conf])
    cols = [f"c{i:04d}" for i in range(p)]
    manifest = {
        "encoders": {"resnet50": {"columns": cols, "kinds": ["confidence"] * p}},
        "attributes": [f"a{i}" for i in range(10)],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    ids = [f"h{i:03d}" for i in range(n)]
    attr = pd.DataFrame({"id": ids, "log_price": rng.normal(14, 0.3, n), "cluster": ["P1"] * n})
    for i in range(10):
        attr[f"a{i}"] = rng.normal(size=n)
    attr.to_csv(tmp_path / "attributes.csv", index=False)
    feat = pd.DataFrame({"id": ids, **{c: block[:, j] for j, c in enumerate(cols)}})
    feat.to_csv(tmp_path / "resnet50.csv", index=False)

    ds = load_dataset(tmp_path / "manifest.json", tmp_path)
    dm = assemble_design_matrix(ds, EncoderCombo.single("resnet50"), include_attributes=True)
    assert dm.p == 1000 + 10 - 3
    assert len(dm.dropped_columns) == 3
    assert all(name.startswith("resnet50:") for name in dm.dropped_columns)


def test_assemble_empty_design_error(small_dataset):
    with pytest.raises(ValueError, match="empty design"):
        assemble_design_matrix(small_dataset, None, include_attributes=False)


def test_assemble_unknown_encoder(small_dataset):
    with pytest.raises(ValueError, match="not in dataset"):
        assemble_design_matrix(
            small_dataset, EncoderCombo.single("alexnet"), include_attributes=True
        )


def test_assemble_deterministic(small_dataset):
    combo = EncoderCombo.tout(small_dataset.manifest.encoder_names)
    a = assemble_design_matrix(small_dataset, combo, True, standardize=True)
    b = assemble_design_matrix(small_dataset, combo, True, standardize=True)
    assert a == b


def test_standardize_training_transform_is_exact(small_dataset):
    dm = assemble_design_matrix(small_dataset, EncoderCombo.single("resnet50"), True)
    std = dm.standardized()
    means, scales = std.standardization
    assert np.array_equal((dm.X - means) / scales, std.X)


def test_manifest_roundtrip_and_validation(small_dir):
    manifest = SchemaManifest.load(small_dir / "manifest.json")
    again = SchemaManifest.from_dict(json.loads(manifest.to_json()))
    assert again == manifest
    with pytest.raises(IngestError, match="duplicate columns"):
        SchemaManifest({"e": (("a", "a"), ("count", "count"))}, ("x",))
    with pytest.raises(IngestError, match="kinds"):
        SchemaManifest({"e": (("a",), ("weird",))}, ("x",))
