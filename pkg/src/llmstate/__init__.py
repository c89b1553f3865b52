"""Closed-loop household task planner driven by an LLM-maintained belief state.

The package wires together a deterministic, partially observable household
simulator, an expandable object-attribute state store, a parser for the
planner's code-style command language, golden prompt builders for the three
LLM roles (attention, state estimation, policy), replayable LLM backends,
and a benchmark harness reporting success rate and average steps.
"""

__version__ = "0.1.0"
