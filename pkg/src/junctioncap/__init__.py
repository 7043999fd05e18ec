"""Queueing-based capacity analysis of railway junctions.

Junctions are modelled as continuous-time Markov chains over per-route queue
lengths and service flags, restricted by a conflict matrix.  The stationary
distribution yields expected queue lengths and loss probabilities, which are
compared against quality thresholds to dimension the infrastructure.
"""

__version__ = "0.1.0"

from .analysis import (AnalysisParams, BUNDLED_LINE_PROGRAMS, CapacityVerdict,
                       LineProgram, SweepResult, combination_grid,
                       combine_line_programs, compare_layouts,
                       min_service_rate, sweep)
from .approx import (CorrectionParams, corrected_queue_length,
                     gi_correction_factor, mm1_inf_queue_length,
                     model_threshold, waiting_threshold)
from .ctmc import (Generator, StateSpace, build_generator, build_state_space,
                   closure)
from .model import (Demand, Junction, OperatingProgram, RateSet, Route,
                    arrival_rates, make_junction, occupancy, passenger_ratio,
                    service_rates, validate_junction)
from .simulate import SimConfig, SimulationResult, aggregate, simulate
from .solver import (QueueSizing, StationaryDistribution, WarmStartSolver,
                     expected_queue_length, expected_queue_lengths,
                     loss_probabilities, loss_probability, min_waiting_slots,
                     stationary_distribution)
