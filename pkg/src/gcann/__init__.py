"""Gaussian constitutive networks for stochastic hyperelastic model discovery."""
from .data_pipeline import BiaxialDataset, Curve, DataError, Experiment, Protocol, load_csv, standard_split, synthesize
from .energy_terms import LIBRARY, TERM_NAMES, TermSpec
from .kinematics import DeformationState, Orientation, invariants
from .modeldoc import load_model, save_model
from .objective import extra_nll, ideal_nll, loss_and_grad, nll
from .stress_model import CovarianceMode, CovarianceParam, GaussianModel, StressDistribution, predict, sample_weights
from .trainer import FitResult, TrainConfig, TrainingDivergence, fit, select, sweep

__version__ = "0.1.0"
