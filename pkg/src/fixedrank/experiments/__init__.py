"""Scenario runners and the command-line front end."""

from .runio import Check, ScenarioConfig, ScenarioResult, load_config

__all__ = ["Check", "ScenarioConfig", "ScenarioResult", "load_config"]
