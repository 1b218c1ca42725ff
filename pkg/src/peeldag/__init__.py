"""Structure learning and edge inference for Gaussian DAGs with unspecified interventions."""
from .graph import HypothesisMode, HypothesisSpec, SuperGraph
from .inference import DpConfig, DpTestReport, dp_edge_test, dp_pathway_test, lr_test
from .peeling import TuningGrid, learn_structure
from .refit import WeightedDag, refit_dag
from .simulate import SimDesign, generate_truth, sample_data

__version__ = "0.1.0"

__all__ = [
    "DpConfig", "DpTestReport", "HypothesisMode", "HypothesisSpec", "SimDesign", "SuperGraph",
    "TuningGrid", "WeightedDag", "dp_edge_test", "dp_pathway_test", "generate_truth",
    "learn_structure", "lr_test", "refit_dag", "sample_data",
]
