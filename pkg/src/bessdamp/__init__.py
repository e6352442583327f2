"""Storage placement and controller-gain design for power-system damping.

The toolkit couples a classical multi-machine time-domain simulator with a
subspace modal estimator inside a mixed-integer particle swarm, then prices
the resulting fleet. Study cases and ready-made run descriptions ship with
the package; see the ``bessdamp`` command.
"""

from .bess import (BessParams, BessState, bess_step, controller_reference,
                   initial_state, pcs_step, soc_change_report, soc_update)
from .cost import CostConfig, CostReport, fleet_cost, recommend
from .dynamics import (ChannelError, Disturbance, SimConfig, SimulationError,
                       TraceSet, bus_frequency, default_channels,
                       network_solve, simulate, wrap_angle)
from .grid import (Branch, Bus, CaseError, Generator, Load, OperatingPoint,
                   PowerFlowError, PowerSystemCase, Scenario, UNIT_SCENARIO,
                   apply_scenario, build_ybus, case_from_dict, load_case,
                   solve_power_flow)
from .modal import (EspritConfig, ModalError, Mode, OrderError,
                    TargetModeMissing, damping_ratio, estimate_modes,
                    match_modes, select_target_mode)
from .optimizer import (Fitness, OptimizationResult, ProblemSpec, PsoConfig,
                        ScenarioContext, evaluate_placement, optimize,
                        placement_similarity, pso_velocity,
                        reduce_candidates, repair_locations,
                        ringdown_analysis, scenario_contexts)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
