"""Homotopy continuation driver with an effort-based step size strategy.

The continuation parameter c runs from the auxiliary problem (c = 0, known
constant solution) to the physical problem (c = 1). Each step from (c_j, y_j)
with step dc solves three BVPs: the full step from y_j, the half step from
y_j, and the full step warm-started from the half-step result. The two-half
solution is accepted; if the pair cost more right-hand-side evaluations than
the direct solve, the step size grows by nu1 = 3/2, otherwise it shrinks by
nu2 = 2/3. A diverged solve halves the step (divisor mu_div) and retries.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields

from .bvp import CollocationSolution, solve
from .errors import ContinuationFailed, SolverError

# Hard cap on attempts; dc_min normally aborts far earlier.
MAX_ATTEMPTS = 200


@dataclass(frozen=True)
class ContinuationSettings:
    """Step size strategy constants."""

    dc0: float = 0.1
    nu1: float = 1.5
    nu2: float = 2.0 / 3.0
    mu_div: float = 2.0
    dc_min: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.dc0 <= 1.0:
            raise ValueError("initial step dc0 must lie in (0, 1]")
        if self.nu1 <= 1.0:
            raise ValueError("enlarging factor nu1 must exceed 1")
        if not 0.0 < self.nu2 < 1.0:
            raise ValueError("shrinking factor nu2 must lie in (0, 1)")
        if self.mu_div <= 1.0:
            raise ValueError("divergence divisor mu_div must exceed 1")
        if not 0.0 < self.dc_min < self.dc0:
            raise ValueError("abort threshold dc_min must lie in (0, dc0)")


@dataclass(frozen=True)
class StepRecord:
    """One attempted continuation step (accepted or diverged)."""

    c_from: float
    dc: float
    accepted: bool
    cost_full: int
    cost_half1: int
    cost_half2: int
    newton_iterations: int
    c_next: float
    dc_next: float


@dataclass
class ContinuationTrace:
    """Path trace; exportable as CSV for diagnostics."""

    steps: list

    def accepted_path(self):
        return [r.c_next for r in self.steps if r.accepted]

    def to_csv(self, path):
        names = [f.name for f in fields(StepRecord)]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(names)
            for record in self.steps:
                writer.writerow([getattr(record, name) for name in names])


def adapter(family, guess, settings: ContinuationSettings | None = None,
            solve_kwargs: dict | None = None):
    """Advance the continuation family from c = 0 to c = 1.

    ``family(c)`` returns the (rhs, bc) pair of the member problem; ``guess``
    initializes the auxiliary solve at c = 0 (a (mesh, profile) pair or a
    CollocationSolution). Returns (solution at c = 1, ContinuationTrace).
    Raises ContinuationFailed (carrying the trace) when the step size falls
    below dc_min or the attempt budget is exhausted.
    """
    settings = settings or ContinuationSettings()
    kw = solve_kwargs or {}

    rhs0, bc0 = family(0.0)
    y = solve(rhs0, bc0, guess, **kw)

    c = 0.0
    dc = settings.dc0
    steps: list[StepRecord] = []
    trace = ContinuationTrace(steps)
    for _ in range(MAX_ATTEMPTS):
        if c >= 1.0:
            return y, trace
        dc = min(dc, 1.0 - c)
        if dc < settings.dc_min:
            raise ContinuationFailed(
                f"continuation step {dc:.3e} fell below {settings.dc_min:.1e} "
                f"at c = {c:.4f}", trace=trace,
            )
        target = 1.0 if dc >= 1.0 - c else c + dc
        rhs_t, bc_t = family(target)
        rhs_h, bc_h = family(c + 0.5 * dc)
        try:
            y_full = solve(rhs_t, bc_t, y, **kw)
            y_half1 = solve(rhs_h, bc_h, y, **kw)
            y_half2 = solve(rhs_t, bc_t, y_half1, **kw)
        except SolverError:
            dc_next = dc / settings.mu_div
            steps.append(StepRecord(
                c_from=c, dc=dc, accepted=False, cost_full=-1, cost_half1=-1,
                cost_half2=-1, newton_iterations=0, c_next=c, dc_next=dc_next,
            ))
            dc = dc_next
            continue
        cost_full = y_full.diagnostics.rhs_evaluations
        cost_h1 = y_half1.diagnostics.rhs_evaluations
        cost_h2 = y_half2.diagnostics.rhs_evaluations
        enlarging = cost_h1 + cost_h2 > cost_full
        dc_next = (settings.nu1 if enlarging else settings.nu2) * dc
        steps.append(StepRecord(
            c_from=c, dc=dc, accepted=True, cost_full=cost_full,
            cost_half1=cost_h1, cost_half2=cost_h2,
            newton_iterations=(y_full.diagnostics.newton_iterations
                               + y_half1.diagnostics.newton_iterations
                               + y_half2.diagnostics.newton_iterations),
            c_next=target, dc_next=dc_next,
        ))
        y = y_half2
        c = target
        dc = dc_next
    raise ContinuationFailed(
        f"continuation attempt budget ({MAX_ATTEMPTS}) exhausted at c = {c:.4f}",
        trace=trace,
    )


def solve_with_fallback(family, guess, settings: ContinuationSettings | None = None,
                        solve_kwargs: dict | None = None):
    """Direct c = 1 solve with continuation as fallback.

    Tries the physical problem straight from ``guess`` (a warm-start solution
    or an auxiliary profile); on any solver error runs the adapter from c = 0.
    Returns (solution, trace) where trace is None for the direct path.
    """
    kw = solve_kwargs or {}
    rhs1, bc1 = family(1.0)
    try:
        return solve(rhs1, bc1, guess, **kw), None
    except SolverError:
        return adapter(family, guess, settings, solve_kwargs)
