"""crossflow: a deterministic single-intersection traffic simulator with a
dueling double DQN signal controller trained on connected-vehicle detections.

The package is organised around a handful of small modules:

- ``rng``         seeded counter-based random streams
- ``geometry``    approaches, lanes, connections, phase programs
- ``signals``     the green/change/clearance phase timer
- ``demand``      demand sampling and pre-generated arrival schedules
- ``simulation``  car-following dynamics and the per-second step loop
- ``rewards``     delay measures and reward normalisation
- ``encoder``     the 3-channel detection grid fed to the network
- ``controllers`` fixed-time, random, Max Pressure and SOTL baselines
- ``nn``          hand-written conv net, Huber loss, Adam, Polyak, checkpoints
- ``agent``       replay buffer, exploration schedule, the training loop
- ``harness``     seeded evaluation episodes and comparison reports
- ``cli``         the ``crossflow`` command line entry point
"""

__version__ = "0.1.0"

from .geometry import build_scenario, SCENARIOS
from .demand import DemandConfig, sample_demand
from .signals import SignalTiming
from .simulation import TrafficSim
from .encoder import GridSpec, encode_state, state_shape
from .agent import TrainConfig, TrainResult, train
from .harness import (ComparisonReport, EpisodeStats, compare_fd, compare_pd,
                      run_episode, threshold_report)

__all__ = [
    "build_scenario",
    "SCENARIOS",
    "DemandConfig",
    "sample_demand",
    "SignalTiming",
    "TrafficSim",
    "GridSpec",
    "encode_state",
    "state_shape",
    "TrainConfig",
    "TrainResult",
    "train",
    "ComparisonReport",
    "EpisodeStats",
    "compare_fd",
    "compare_pd",
    "run_episode",
    "threshold_report",
    "__version__",
]
