"""Exact Fischer decompositions for CR-singular model quadrics and normal forms of formal embeddings."""
from .polyring import Poly, Scalar, parse_poly, render, substitute
from .model import (ModelManifold, PerturbedManifold, make_model, make_perturbed, model_automorphism_check,
                    quadric, reality_split, trace_op, unperturbed)
from .fischer import (fischer_decompose_joint, fischer_decompose_single, harmonic_part, kernel_basis,
                      nested_chain, project_normalization_space)
from .normalize import (FormalMap, check_theorem_A, check_theorem_B, normalize_embedding,
                        normalize_linear_part, normalize_to_degree, standard_linear_embedding,
                        verify_embedding_equation)

__version__ = "0.1.0"
