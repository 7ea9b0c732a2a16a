"""Subspace-constrained black-box adversarial attacks and exact minimum-perturbation oracles."""

from .attack import AttackResult
from .hard import BoundaryConfig, SignOptConfig, boundary_attack, signopt_attack, signopt_g_eval
from .linalg import OrthonormalSet, gram_schmidt_orthonormalize, project_onto_span, thin_svd
from .minperturb import (QpProblem, QpSolution, knn_min_perturbation, solve_qp, span_membership,
                         svm_min_perturbation)
from .models import (KNNModel, LabeledInstance, LinearSVM, MLPModel, QueryCounter, QueryOracle, load_dataset,
                     load_model, query_hard, query_soft)
from .soft import AttackConfig, margin_loss, rgf_estimate, soft_label_attack, spsa_estimate
from .subspace import (IsometricSampler, SubspaceBasis, build_basis, sample_in_subspace,
                       select_singular_vectors, unit_direction_in_subspace)

__version__ = "0.1.0"
