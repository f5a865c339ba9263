from lattice_regression.services.logger import get_logger, setup_logging
from lattice_regression.services.settings import Settings, get_settings
from lattice_regression.services.errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateSignalError,
    DimensionMismatchError,
    LatticeRegressionError,
    NonFiniteInputError,
    NotPositiveSemidefiniteError,
)
from lattice_regression.services.experiment_config import ExperimentConfig, load_config
from lattice_regression.services.file_processor import FileProcessorService
from lattice_regression.services.report_service import ReportAggregator
from lattice_regression.services.experiment_service import ExperimentService, RunResult, SweepResult

__all__ = [
  'get_logger',
  'setup_logging',
  'Settings',
  'get_settings',
  'LatticeRegressionError',
  'DimensionMismatchError',
  'NonFiniteInputError',
  'ConfigurationError',
  'DegenerateSignalError',
  'NotPositiveSemidefiniteError',
  'ConvergenceError',
  'ExperimentConfig',
  'load_config',
  'FileProcessorService',
  'ReportAggregator',
  'ExperimentService',
  'RunResult',
  'SweepResult',
]
