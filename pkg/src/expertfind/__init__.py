"""Topic-aware expert finding over a multi-layer user graph."""
from .evaluation import EvalReport, RunResult, compare_runs, compute_metrics, paired_ttest
from .pipeline import PipelineConfig, run_ablation, run_pipeline
from .synth import SyntheticSpec, generate_synthetic

__all__ = ["EvalReport", "PipelineConfig", "RunResult", "SyntheticSpec", "compare_runs",
           "compute_metrics", "generate_synthetic", "paired_ttest", "run_ablation", "run_pipeline"]
__version__ = "0.1.0"
