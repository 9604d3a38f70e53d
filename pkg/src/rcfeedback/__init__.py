"""Simulator and experiment harness for a sine ring reservoir with output feedback."""
from rcfeedback._backend import BACKEND, numba_enabled
from rcfeedback.hardware import (FixedPointWeights, HardwareModel, HighPassFilter,
                                 add_state_noise, apply_state_gain, highpass, quantize,
                                 quantize_weights)
from rcfeedback.reservoir import (AutonomousRun, ConfigurationError, NoiseSource,
                                  ReservoirConfig, ReservoirState, StateTrajectory,
                                  autonomous_run, drive, effective_weights, make_mask,
                                  readout, step)
from rcfeedback.tasks import (FrequencyTask, PatternTask, TaskOutcome, estimate_frequency,
                              evaluate_frequency_run, evaluate_pattern_run,
                              periodic_teacher, physical_frequency, random_pattern,
                              sine_teacher, windowed_nmse)
from rcfeedback.trainer import (RidgeSolution, TrainingError, TrainingSet, harvest, nmse,
                                ridge_solve, train)

__version__ = "0.1.0"
