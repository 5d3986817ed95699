"""Self-training with hardness sampling for transductive zero-shot learning."""

__version__ = "0.1.0"

from sths.dataset import (  # noqa: E402
    ClassSplit,
    DatasetError,
    Oracle,
    SampleSet,
    ZslDataset,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from sths.sampling import SamplingPolicy, select_subset  # noqa: E402
from sths.synthetic import SyntheticConfig, generate_synthetic  # noqa: E402
from sths.training import (  # noqa: E402
    GzslStrictConfig,
    RunTrace,
    SthsConfig,
    run_baseline_rs,
    run_sths,
    run_sths_gzsl_strict,
)

__all__ = [
    "ClassSplit",
    "DatasetError",
    "GzslStrictConfig",
    "Oracle",
    "RunTrace",
    "SampleSet",
    "SamplingPolicy",
    "SthsConfig",
    "SyntheticConfig",
    "ZslDataset",
    "generate_synthetic",
    "load_dataset",
    "run_baseline_rs",
    "run_sths",
    "run_sths_gzsl_strict",
    "save_dataset",
    "select_subset",
    "validate_dataset",
    "__version__",
]
