import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from hedonic_fusion.core_types import EncoderCombo, ModelSpec
from hedonic_fusion.evaluation import EvalConfig, kfold_evaluate
from hedonic_fusion.feature_store import assemble_design_matrix, load_dataset
from hedonic_fusion.linear_models import fit_ols, predict
from hedonic_fusion.mlp import TrainConfig
from hedonic_fusion.synthetic import GenConfig, generate

QUICK = EvalConfig(lasso_grid_size=10, lasso_inner_k=2, lasso_min_ratio=1e-2)


def test_generated_files_ingest_with_zero_warnings(small_dir, small_dataset):
    assert small_dataset.warnings == []
    assert small_dataset.n_dropped_join == 0
    assert set(small_dataset.blocks) == {
        "ade20k_panoptic",
        "coco_panoptic",
        "inception",
        "mobilenet",
        "resnet50",
        "vgg16",
    }


def test_regeneration_is_byte_identical(tmp_path):
    cfg = GenConfig(n=80, cnn_categories=6, panoptic_categories=5, n_clusters=4, seed=13)
    generate(cfg, tmp_path / "a")
    generate(cfg, tmp_path / "b")
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_validation():
    with pytest.raises(ValueError, match="signal_strength"):
        GenConfig(signal_strength=1.0)
    with pytest.raises(ValueError, match="n_clusters"):
        GenConfig(n_clusters=1)
    with pytest.raises(ValueError, match="noise_sd"):
        GenConfig(noise_sd=-0.1)


def test_truth_records_floor_and_coefficients(small_dir, small_dataset):
    truth = json.loads((small_dir / "truth.json").read_text())
    cfg = truth["config"]
    assert truth["noise_floor_mse"] == cfg["noise_sd"] ** 2
    assert set(truth["gamma"]) == set(small_dataset.manifest.attributes)
    assert len(truth["delta"]) == truth["latent_dim"] == 8
    covered = set()
    for dims in truth["coverage"].values():
        assert len(dims) == 3
        covered.update(dims)
    assert covered == set(range(8))  # only the full ensemble sees every factor


def test_confidence_rows_sum_to_one(small_dir):
    df = pd.read_csv(small_dir / "resnet50.csv")
    sums = df.drop(columns="id").to_numpy().sum(axis=1)
    assert np.abs(sums - 1.0).max() < 1e-3


def test_panoptic_schema_on_disk(small_dir):
    df = pd.read_csv(small_dir / "coco_panoptic.csv")
    counts = df[[c for c in df.columns if c.endswith("_count")]].to_numpy()
    props = df[[c for c in df.columns if c.endswith("_prop")]].to_numpy()
    assert np.all(counts >= 0) and np.all(counts == np.floor(counts))
    assert np.all((props >= 0) & (props <= 1))
    assert props.sum(axis=1).max() <= 1 + 1e-6


def test_full_scale_calibration_anchors(full_dir_seed0):
    attr = pd.read_csv(full_dir_seed0 / "attributes.csv")
    assert abs(attr["log_price"].mean() - 14.07) < 0.02
    assert abs(attr["bedrooms"].mean() - 3.34) < 0.15
    assert abs(attr["bathrooms"].mean() - 3.06) < 0.15
    assert attr["cluster"].nunique() == 30


def test_attributes_only_ols_recovers_gamma(full_dir_seed0):
    ds = load_dataset(full_dir_seed0 / "manifest.json", full_dir_seed0)
    truth = json.loads((full_dir_seed0 / "truth.json").read_text())
    dm = assemble_design_matrix(ds, None, include_attributes=True)
    fit = fit_ols(dm)
    A = np.column_stack([np.ones(dm.n), dm.X])
    resid = dm.y - A @ np.concatenate([[fit.intercept], fit.coefficients])
    s2 = resid @ resid / (dm.n - A.shape[1])
    se = np.sqrt(np.diag(s2 * np.linalg.inv(A.T @ A)))[1:]
    for name, coef, s in zip(dm.column_names, fit.coefficients, se):
        assert abs(coef - truth["gamma"][name]) < 3 * s, name


def test_no_model_beats_the_noise_floor(full_dir_seed0):
    ds = load_dataset(full_dir_seed0 / "manifest.json", full_dir_seed0)
    truth = json.loads((full_dir_seed0 / "truth.json").read_text())
    tout = EncoderCombo.tout(ds.manifest.encoder_names)
    spec = ModelSpec("penalized_ols", tout, False, True, 0)
    report = kfold_evaluate(ds, [spec], k=2, seed=0, config=QUICK)
    assert report.per_spec[spec.key()].mse >= 0.9 * truth["noise_floor_mse"]


def test_zero_signal_images_cannot_beat_variance(tmp_path):
    generate(
        GenConfig(n=400, cnn_categories=10, panoptic_categories=6, signal_strength=0.0, seed=21),
        tmp_path,
    )
    ds = load_dataset(tmp_path / "manifest.json", tmp_path)
    tout = EncoderCombo.tout(ds.manifest.encoder_names)
    spec = ModelSpec("penalized_ols", tout, False, False, 0)  # images only
    report = kfold_evaluate(ds, [spec], k=3, seed=0, config=QUICK)
    assert report.per_spec[spec.key()].mse >= 0.9 * ds.y.var()


def test_zero_noise_zero_signal_is_exactly_linear(tmp_path):
    generate(
        GenConfig(
            n=240, cnn_categories=6, panoptic_categories=5,
            signal_strength=0.0, noise_sd=0.0, seed=3,
        ),
        tmp_path,
    )
    ds = load_dataset(tmp_path / "manifest.json", tmp_path)
    dm = assemble_design_matrix(ds, None, include_attributes=True)
    half = dm.n // 2
    fit = fit_ols(dm.take(np.arange(half)))
    oos = predict(fit, dm.X[half:])
    assert np.mean((oos - dm.y[half:]) ** 2) < 1e-6


def test_stronger_signal_strictly_lowers_best_image_mse(tmp_path):
    # total price variance is a fixed pie, so a bigger image share must make
    # image-only predictions strictly better on the paired seed
    mses = {}
    for s in (0.0, 0.3):
        out = tmp_path / f"s{s}"
        generate(
            GenConfig(n=600, cnn_categories=12, panoptic_categories=8, signal_strength=s, seed=17),
            out,
        )
        ds = load_dataset(out / "manifest.json", out)
        tout = EncoderCombo.tout(ds.manifest.encoder_names)
        spec = ModelSpec("penalized_ols", tout, False, False, 0)  # images only
        report = kfold_evaluate(ds, [spec], k=3, seed=17, config=QUICK)
        mses[s] = report.per_spec[spec.key()].mse
    assert mses[0.3] < mses[0.0]


def test_width_overrides(tmp_path):
    cfg = GenConfig(
        n=60, cnn_categories=6, panoptic_categories=4,
        widths={"resnet50": 9}, n_clusters=3, seed=1,
    )
    generate(cfg, tmp_path)
    ds = load_dataset(tmp_path / "manifest.json", tmp_path)
    assert ds.blocks["resnet50"].n_columns == 9
    assert ds.blocks["vgg16"].n_columns == 6
    assert ds.blocks["coco_panoptic"].n_columns == 8  # count + proportion per category
