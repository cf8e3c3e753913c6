"""Contrast-weighted dictionary learning for salient object detection."""

from .coding import SparseCode, kkt_residual, lasso_solve, lasso_solve_many
from .config import RunConfig, parse_config, render_config
from .dictlearn import Dictionary, TrainerState, init_dictionary, train
from .errors import (CDLError, ConfigError, ConvergenceError, DatasetError, DimensionError,
                     FormatError, InputError, SamplingExhaustedError)
from .fusion import fuse, fuse_equal_weights
from .saliency import SaliencyMap, generate_maps

__version__ = "0.1.0"
