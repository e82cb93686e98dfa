"""Graph-regularised low-rank matrix completion by preconditioned gradient descent."""

from .diagnostics import AlignmentResult, aligned_distance, graph_incoherence_mu, psi_smoothness, regularizer_values
from .errors import ConfigError, GSGDError, NumericalError
from .factors import FactorPair
from .graphs import GraphOperator, SimilarityGraph, build_operator, identity_operator, knn_graph, perturb_edges
from .initialization import ProjectionConfig, graph_spectral_init, project_B, standard_spectral_init
from .observation import ObservationSet, bernoulli_sample, rmse_complement, rmse_on
from .solvers import SolverConfig, SolverFailure, SolverTrace, gsgd_step_bound, run
from .synthetic import SynthConfig, make_instance

__version__ = "0.1.0"
