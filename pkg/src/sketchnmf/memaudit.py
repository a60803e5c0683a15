"""Allocation audit for checking that the solver stays within factor-sized memory.

``tracemalloc`` records every Python-visible allocation, numpy buffers
included. A trace function resets the peak at every line, call and return
event, so the peak growth inside one interval bounds the largest allocation
made by that single statement from above.
"""
import sys
import threading
import tracemalloc
from dataclasses import dataclass


@dataclass
class AuditResult:
    max_statement_bytes: int
    peak_bytes: int
    where: str
    result: object = None


def audit(fn, *args, **kwargs):
    """Run ``fn`` under the audit; bytes are counted relative to the state at entry."""
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    state = {"max": 0, "where": "", "peak": 0}
    base = tracemalloc.get_traced_memory()[0]
    tracemalloc.reset_peak()
    last = [base]
    current_line = [""]

    def tracer(frame, event, arg):
        cur, peak = tracemalloc.get_traced_memory()
        grown = peak - last[0]
        if grown > state["max"]:
            state["max"] = grown
            state["where"] = current_line[0]
        state["peak"] = max(state["peak"], peak - base)
        current_line[0] = f"{frame.f_code.co_filename}:{frame.f_lineno}"
        tracemalloc.reset_peak()
        last[0] = tracemalloc.get_traced_memory()[0]
        return tracer

    old = sys.gettrace()
    threading.settrace(tracer)
    sys.settrace(tracer)
    try:
        result = fn(*args, **kwargs)
    finally:
        sys.settrace(old)
        threading.settrace(old)
        cur, peak = tracemalloc.get_traced_memory()
        state["peak"] = max(state["peak"], peak - base)
        if not was_tracing:
            tracemalloc.stop()
    return AuditResult(state["max"], state["peak"], state["where"], result)
