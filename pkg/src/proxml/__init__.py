"""Sparse one-vs-rest extreme multi-label classification with L1-regularized squared hinge loss."""
from proxml.ccd import CcdConfig, CcdResult, certify, coordinate_violation, solve_ccd
from proxml.data import Dataset, LabelView, SparseVector, label_counts, label_view, parse_xmc, read_xmc, write_xmc
from proxml.labelgraph import LabelGraph, SpectralResult, algebraic_connectivity, build_graph
from proxml.metrics import EvalReport, PropensityTable, evaluate, propensities
from proxml.predictor import TopK, predict, score_all, top_k
from proxml.prox import ProxConfig, SolveResult, objective, soft_threshold, solve_prox
from proxml.trainer import Model, load_model, save_model, train_all

__version__ = "0.1.0"
