"""Experiment runner, KPIs, baseline and result files."""
from .baseline import conventional_baseline
from .kpi import IncompleteTrace, InsufficientRuns, KpiReport, compute_kpis, compute_repeatability, machining_attempts
from .scenario import DEFAULT_SEEDS, RunResult, ScenarioConfig, run_agents, run_one, run_scenario
