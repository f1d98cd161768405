"""Temporal knowledge-graph completion with Allen-algebra logic rules."""
