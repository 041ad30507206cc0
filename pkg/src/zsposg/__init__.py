"""Solvers for finite-horizon zero-sum partially observable stochastic games."""
from .bounds import LipschitzSchedule, SurfaceBound
from .benchmarks import resolve_model
from .doo import bidoo, doo_maximize, doo_minimize
from .hsvi import OMGHSVI, rho_max, t_max, thr, thr_closed_form
from .lc import LipschitzHSVI
from .model import ModelParseError, PosgModel, load_model, parse_model
from .occupancy import DecisionRule, OccupancyState, initial_occupancy, transition
from .sequence_form import solve_exact
from .strategies import BehavioralStrategy, best_response, evaluate_profile

__all__ = [
    "BehavioralStrategy", "DecisionRule", "LipschitzHSVI", "LipschitzSchedule", "ModelParseError",
    "OMGHSVI", "OccupancyState", "PosgModel", "SurfaceBound", "best_response", "bidoo",
    "doo_maximize", "doo_minimize", "evaluate_profile", "initial_occupancy", "load_model",
    "parse_model", "resolve_model", "rho_max", "solve_exact", "t_max", "thr", "thr_closed_form",
    "transition",
]
