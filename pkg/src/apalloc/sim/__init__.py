"""Scenario generation, the simulation loop, and file formats."""

from .engine import (RunConfig, RunMetrics, TickStats, UnknownPolicyError, carried_traffic,
                     cluster_labels, run, write_metrics, write_timeseries)
from .scenario import (ScenarioConfig, ScenarioKind, ScenarioModel, Session, Topology,
                       generate_scenario,
                       pathloss_db, quality_matrix, radio_quality, rssi_dbm, tau_for)
