"""Synthetic datasets with a known hedonic price process and a planted,
nonlinearly-encoded image signal.

Price model: log_price = 14.07 + gamma'(attributes - mean) + delta'z + eps,
where z are latent visual factors. Each encoder observes a 3-dim window of
z (windows overlap; only the full ensemble covers every dimension, which is
what makes multi-encoder combos genuinely better). Encoder features are
softmax/count/proportion transforms of tanh-mixed windows plus
encoder-specific distractor categories driven by independent noise, so image
features are informative but not linearly trivial.

truth.json records the coefficients, loadings and the attainable MSE floor
(noise_sd^2); the pipeline never reads it, tests do.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .core_types import DEFAULT_ENCODERS
from .feature_store import ATTRIBUTES_FILENAME, SchemaManifest

MEAN_LOG_PRICE = 14.07  # average Toronto detached sale, in logs
LOG_PRICE_CLIP = (12.0, 17.0)

CNN_ENCODERS = ("inception", "mobilenet", "resnet50", "vgg16")
PANOPTIC_ENCODERS = ("ade20k_panoptic", "coco_panoptic")

# (name, gamma) in draw order; gamma is rescaled to hit attribute_variance
ATTRIBUTE_PLAN = (
    ("bedrooms", 0.055),
    ("bathrooms", 0.060),
    ("storeys", 0.050),
    ("finished_basement", 0.060),
    ("walkout_basement", 0.040),
    ("attached_garage", 0.050),
    ("central_air", 0.045),
    ("basement_apartment", 0.030),
    ("garage_spaces", 0.035),
    ("lot_frontage", 0.004),
    ("lot_depth", 0.0015),
    ("building_age", -0.0018),
)

ADE20K_WORDS = (
    "tree", "sky", "grass", "road", "fence", "window", "door", "roof",
    "driveway", "bush", "lawn", "sidewalk", "porch", "chimney", "hedge",
    "wall", "snow", "path", "flower_bed", "gate", "railing", "awning",
    "shutter", "eaves",
)
COCO_WORDS = (
    "car", "truck", "person", "bicycle", "bench", "potted_plant", "dog",
    "stop_sign", "fire_hydrant", "umbrella", "motorcycle", "bird", "chair",
    "mailbox_box", "traffic_light", "boat", "bus", "kite", "skateboard",
    "backpack", "suitcase", "frisbee", "bottle", "cat",
)


@dataclass
class GenConfig:
    n: int = 6887
    n_attributes: int = 12
    cnn_categories: int = 40
    panoptic_categories: int = 24
    widths: dict | None = None  # per-encoder category-count overrides
    signal_strength: float = 0.15  # share of total price variance carved out for z
    noise_sd: float = 0.18
    total_variance: float = 0.19  # log-price variance; attributes get the rest
    n_clusters: int = 30
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.signal_strength < 1.0):
            raise ValueError("signal_strength must be in [0, 1)")
        if self.n_clusters < 2:
            raise ValueError("need n_clusters >= 2")
        if self.n < 20:
            raise ValueError("need n >= 20")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.n_attributes < 1:
            raise ValueError("need at least one attribute")
        if self.attribute_share() <= 0.005:
            raise ValueError("noise_sd^2 + signal share leave no variance for attributes")

    def attribute_share(self) -> float:
        return self.total_variance * (1.0 - self.signal_strength) - self.noise_sd**2

    def categories_for(self, encoder: str) -> int:
        if self.widths and encoder in self.widths:
            return int(self.widths[encoder])
        return self.cnn_categories if encoder in CNN_ENCODERS else self.panoptic_categories


def _draw_attributes(rng: np.random.Generator, n: int, n_attributes: int):
    cols = {
        "bedrooms": np.clip(np.rint(rng.normal(3.34, 0.95, n)), 1, 9),
        "bathrooms": np.clip(np.rint(rng.normal(3.06, 1.0, n)), 1, 8),
        "storeys": rng.choice([1.0, 2.0, 3.0], size=n, p=[0.33, 0.45, 0.22]),
        "finished_basement": rng.binomial(1, 0.55, n).astype(float),
        "walkout_basement": rng.binomial(1, 0.20, n).astype(float),
        "attached_garage": rng.binomial(1, 0.60, n).astype(float),
        "central_air": rng.binomial(1, 0.70, n).astype(float),
        "basement_apartment": rng.binomial(1, 0.15, n).astype(float),
        "garage_spaces": rng.choice([0.0, 1.0, 2.0, 3.0], size=n, p=[0.2, 0.35, 0.35, 0.1]),
        "lot_frontage": np.clip(rng.normal(40.0, 12.0, n), 15.0, 120.0),
        "lot_depth": np.clip(rng.normal(110.0, 25.0, n), 60.0, 250.0),
        "building_age": np.clip(np.rint(rng.exponential(35.0, n)), 0.0, 120.0),
    }
    names = [name for name, _ in ATTRIBUTE_PLAN]
    gamma = [g for _, g in ATTRIBUTE_PLAN]
    for extra in range(12, n_attributes):
        name = f"extra_{extra - 11:02d}"
        cols[name] = rng.normal(0.0, 1.0, n)
        names.append(name)
        gamma.append(0.02)
    names = names[:n_attributes]
    A = np.column_stack([cols[name] for name in names])
    return names, A, np.array(gamma[:n_attributes])


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cnn_block(rng, h, u, n_categories):
    n_signal = max(1, int(round(0.55 * n_categories)))
    n_distract = n_categories - n_signal
    W = rng.normal(0.0, 0.8, (h.shape[1], n_signal))
    logits = [h @ W]
    if n_distract:
        D = rng.normal(0.0, 0.6, (u.shape[1], n_distract))
        logits.append(u @ D)
    return _softmax(np.hstack(logits))


def _panoptic_block(rng, h, u, n_categories):
    n_signal = max(1, int(round(0.55 * n_categories)))
    n_distract = n_categories - n_signal
    Wc = rng.normal(0.0, 0.5, (h.shape[1], n_signal))
    Wp = rng.normal(0.0, 0.5, (h.shape[1], n_signal))
    log_rate = [h @ Wc]
    log_alpha = [h @ Wp]
    if n_distract:
        Dc = rng.normal(0.0, 0.4, (u.shape[1], n_distract))
        Dp = rng.normal(0.0, 0.4, (u.shape[1], n_distract))
        log_rate.append(u @ Dc)
        log_alpha.append(u @ Dp)
    rates = np.exp(np.clip(np.log(0.9) + np.hstack(log_rate), None, np.log(15.0)))
    counts = rng.poisson(rates).astype(float)
    alphas = np.clip(np.exp(np.hstack(log_alpha)), 0.05, 20.0)
    gammas = rng.standard_gamma(alphas)
    sums = gammas.sum(axis=1, keepdims=True)
    sums[sums == 0.0] = 1.0
    proportions = 0.9 * gammas / sums
    return counts, proportions


def _category_names(encoder: str, count: int) -> list[str]:
    if encoder == "ade20k_panoptic":
        base = list(ADE20K_WORDS)
    elif encoder == "coco_panoptic":
        base = list(COCO_WORDS)
    else:
        return [f"{encoder[:3]}_{i:03d}" for i in range(count)]
    while len(base) < count:
        base.append(f"region_{len(base):02d}")
    return base[:count]


def generate(cfg: GenConfig, out_dir) -> dict:
    """Write attributes.csv, one CSV per encoder, manifest.json, truth.json.

    Deterministic per config: rerunning with the same GenConfig reproduces
    every file byte for byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    encoders = tuple(sorted(DEFAULT_ENCODERS))
    latent_dim = len(encoders) + 2  # 3-wide overlapping windows cover all dims

    ids = [f"h{i:06d}" for i in range(n)]
    clusters = [f"P{int(j):03d}" for j in rng.integers(0, cfg.n_clusters, n)]
    attr_names, A, gamma = _draw_attributes(rng, n, cfg.n_attributes)

    # fixed-pie calibration: signal_strength carves the image share out of
    # total_variance, the noise floor is noise_sd^2, attributes get the rest
    attr_part = (A - A.mean(axis=0)) @ gamma
    var_attr = float(np.var(attr_part))
    if var_attr > 0:
        gamma = gamma * np.sqrt(cfg.attribute_share() / var_attr)
        attr_part = (A - A.mean(axis=0)) @ gamma
        var_attr = float(np.var(attr_part))

    z = rng.normal(0.0, 1.0, (n, latent_dim))
    noise_var = cfg.noise_sd**2
    s = cfg.signal_strength
    target_vz = s * cfg.total_variance
    delta = np.full(latent_dim, 1.0 / np.sqrt(latent_dim))
    image_part = z @ delta
    realized = float(np.var(image_part))
    delta = delta * (np.sqrt(target_vz / realized) if realized > 0 else 0.0)
    image_part = z @ delta

    eps = rng.normal(0.0, cfg.noise_sd, n) if cfg.noise_sd > 0 else np.zeros(n)
    log_price = np.clip(
        MEAN_LOG_PRICE + attr_part + image_part + eps, *LOG_PRICE_CLIP
    )

    manifest_encoders: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {}
    coverage: dict[str, list[int]] = {}
    mixing: dict[str, list] = {}
    frames: dict[str, pd.DataFrame] = {}
    for idx, encoder in enumerate(encoders):
        dims = [idx, idx + 1, idx + 2]
        coverage[encoder] = dims
        G = rng.normal(0.0, 1.0, (3, 5))
        mixing[encoder] = G.tolist()
        h = np.tanh(z[:, dims] @ G)
        u = rng.normal(0.0, 1.0, (n, 4))
        count = cfg.categories_for(encoder)
        names = _category_names(encoder, count)
        if encoder in PANOPTIC_ENCODERS:
            counts, proportions = _panoptic_block(rng, h, u, count)
            columns, kinds, data = [], [], {}
            for c, name in enumerate(names):
                columns += [f"{name}_count", f"{name}_prop"]
                kinds += ["count", "proportion"]
                data[f"{name}_count"] = counts[:, c].astype(int)
                data[f"{name}_prop"] = proportions[:, c]
        else:
            conf = _cnn_block(rng, h, u, count)
            columns = list(names)
            kinds = ["confidence"] * count
            data = {name: conf[:, c] for c, name in enumerate(names)}
        manifest_encoders[encoder] = (tuple(columns), tuple(kinds))
        frames[encoder] = pd.DataFrame({"id": ids, **{c: data[c] for c in columns}})

    manifest = SchemaManifest(
        encoders=manifest_encoders,
        attributes=tuple(attr_names),
        price_column="log_price",
        cluster_column="cluster",
    )
    (out_dir / "manifest.json").write_text(manifest.to_json())

    attr_df = pd.DataFrame({"id": ids, "log_price": log_price, "cluster": clusters})
    for j, name in enumerate(attr_names):
        attr_df[name] = A[:, j]
    attr_df.to_csv(out_dir / ATTRIBUTES_FILENAME, index=False)
    for encoder in encoders:
        frames[encoder].to_csv(out_dir / f"{encoder}.csv", index=False)

    truth = {
        "gamma": {name: float(g) for name, g in zip(attr_names, gamma)},
        "delta": delta.tolist(),
        "latent_dim": latent_dim,
        "coverage": coverage,
        "mixing": mixing,
        "noise_floor_mse": noise_var,
        "signal_strength": s,
        "attribute_variance": var_attr,
        "image_variance": float(np.var(image_part)),
        "config": asdict(cfg),
    }
    (out_dir / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True))

    return {
        "n": n,
        "mean_log_price": float(log_price.mean()),
        "var_log_price": float(np.var(log_price)),
        "out_dir": str(out_dir),
        "encoders": list(encoders),
    }
