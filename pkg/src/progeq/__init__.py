"""Program equilibria with simulating bots.

Games and minimax live in ``game_core``, random streams in ``rand_streams``,
the simulation machine in ``program_vm`` and the bot library in ``pibots``.
``repeated_game`` and ``equilibrium_analysis`` hold the checks built on them.
"""
from .game_core import (GameError, MixedStrategy, NormalFormGame, expected_utility, minimax,
                        rationality_and_feasibility)
from .rand_streams import DeltaSchedule, PrivateStream, SharedStream, derive_seed
from .program_vm import (ContractViolation, Fuel, NonHalting, Program, R, Sentinel, estimate_outcomes,
                         run_trial)
from .pibots import (build_correlated_bot, build_uncorrelated_bot, constant_bot, mixed_bot, q_mix)
from .repeated_game import RepeatedGameConfig, correspondence_check, simulate_repeated
from .equilibrium_analysis import (cor7_check, empirical_best_response, epsilon_thresholds, prop5_check,
                                   prop6_check, simulationist_check)
from .builtin_games import builtin_game

__version__ = "0.1.0"

__all__ = [
    "GameError", "MixedStrategy", "NormalFormGame", "expected_utility", "minimax", "rationality_and_feasibility",
    "DeltaSchedule", "PrivateStream", "SharedStream", "derive_seed",
    "ContractViolation", "Fuel", "NonHalting", "Program", "R", "Sentinel", "estimate_outcomes", "run_trial",
    "build_correlated_bot", "build_uncorrelated_bot", "constant_bot", "mixed_bot", "q_mix",
    "RepeatedGameConfig", "correspondence_check", "simulate_repeated",
    "cor7_check", "empirical_best_response", "epsilon_thresholds", "prop5_check", "prop6_check",
    "simulationist_check", "builtin_game",
]
