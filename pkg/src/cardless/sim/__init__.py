from .datagen import gen_dataset, load_dataset, save_dataset
from .runner import RunMetrics, run_scenario
from .scenario import Scenario, ScenarioError, load_scenario
from .report import render_report

__all__ = [
    "gen_dataset",
    "save_dataset",
    "load_dataset",
    "run_scenario",
    "RunMetrics",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "render_report",
]
