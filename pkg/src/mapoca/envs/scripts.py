"""Plain-text action scripts for deterministic environment playthroughs.

A script is one comma-separated action tuple per line; line t gives the
actions of the agents active at step t in ascending agent-id order.  Blank
lines and ``#`` comments are skipped.
"""

from __future__ import annotations

from pathlib import Path

from .base import GroupEnv, StepResult


def load_action_script(path: str | Path) -> list[tuple[int, ...]]:
    lines = []
    for raw in Path(path).read_text().splitlines():
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        lines.append(tuple(int(tok) for tok in text.split(",")))
    return lines


def run_action_script(
    env: GroupEnv, script: list[tuple[int, ...]]
) -> list[StepResult]:
    """Apply a script to an already-reset environment, step by step."""
    results = []
    for line_no, tuple_actions in enumerate(script):
        active = env.active_ids()
        if len(tuple_actions) != len(active):
            raise ValueError(
                f"script line {line_no} has {len(tuple_actions)} actions for "
                f"{len(active)} active agents"
            )
        results.append(env.step(dict(zip(active, tuple_actions))))
        if results[-1].episode_done:
            break
    return results
