"""Opt-in instrumentation recording which property ids enter fitting steps.

Wrap a run in `capture()` and every parameter-fitting call site reports the
ids it trained on; the no-leakage acceptance test asserts that evaluation
ids never show up. Zero overhead when no capture is active.
"""

from __future__ import annotations

from contextlib import contextmanager

_EVENTS: list[tuple[str, tuple[str, ...]]] | None = None


def record(stage: str, ids) -> None:
    if _EVENTS is not None:
        _EVENTS.append((stage, tuple(ids)))


@contextmanager
def capture():
    """Collect (stage, ids) fitting events; yields the live list."""
    global _EVENTS
    if _EVENTS is not None:
        raise RuntimeError("audit capture already active")
    _EVENTS = []
    try:
        yield _EVENTS
    finally:
        _EVENTS = None
