"""Collects one PASS/FAIL line per acceptance criterion for the end-of-run summary."""
from __future__ import annotations

RESULTS: dict = {}


def record(number: int, title: str, ok: bool, detail: str = "", seconds: float | None = None) -> str:
    timing = "" if seconds is None else f" [{seconds:.1f} s]"
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}{timing}"
    RESULTS[number] = line
    print(line)
    return line
