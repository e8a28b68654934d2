"""Deterministic 2D grid-world navigation benchmark with three-stage grounding."""

from .bench import (ARMS, EpisodeResult, EpisodeSpec, SuiteReport, load_scenario,
                    run_episode, run_suite)
from .controller import ControllerConfig, World, run_controller
from .gridworld import (Action, AgentPose, Detection, Observation,
                        OccupancyGrid, SceneObject, observe, raycast_los,
                        step_agent)
from .grounding import (GroundingOracle, GroundingQuery, GroundingResult,
                        Instruction, PerfectOracle, QualityDependentOracle,
                        RemoteOracle, ScriptedOracle, parse_instruction)
from .memory import MemoryStore, associate_and_update, sample_keyframes
from .nav import detect_frontiers, dijkstra_field, fmm_field, greedy_action
from .viewplan import (GAConfig, ViewplanConfig, ViewpointScore, objective,
                       optimize_exhaustive, optimize_ga)

__version__ = "0.1.0"
