"""Benchmark harness: the six-cell evaluation grid, dynamic-obstacle trials,
visibility ablation, throughput probe and trajectory rendering."""

from .ablation import DEFAULT_RANGES, ablate_visibility, ablation_table
from .render import load_log, render_episode
from .suite import (CSV_COLUMNS, BenchmarkSuite, EpisodeResult, PolicyDriver,
                    TrajectoryLog, crossing_scene, emit_tables,
                    make_place_scene, min_clearances, replay_log, results_csv,
                    results_table, run_dynamic, run_suite)
from .throughput import make_probe_scenes, throughput_probe

__all__ = [
    "DEFAULT_RANGES", "ablate_visibility", "ablation_table", "load_log",
    "render_episode", "CSV_COLUMNS", "BenchmarkSuite", "EpisodeResult",
    "PolicyDriver", "TrajectoryLog", "crossing_scene", "emit_tables",
    "make_place_scene", "min_clearances", "replay_log", "results_csv",
    "results_table", "run_dynamic", "run_suite", "make_probe_scenes",
    "throughput_probe",
]
