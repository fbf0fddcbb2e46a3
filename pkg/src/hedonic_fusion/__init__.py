"""Multi-encoder image-feature fusion for hedonic house-price prediction."""

__version__ = "0.1.0"

from .core_types import (  # noqa: F401
    DEFAULT_ENCODERS,
    DesignMatrix,
    EncoderCombo,
    EvaluationReport,
    FeatureBlock,
    ModelSpec,
    PropertyRecord,
    enumerate_combos,
)
from .feature_store import (  # noqa: F401
    Dataset,
    IngestError,
    SchemaManifest,
    assemble_design_matrix,
    load_dataset,
)
