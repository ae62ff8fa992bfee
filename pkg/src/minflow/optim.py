"""Limited-memory quasi-Newton minimization with a strong Wolfe line search.

``minimize`` drives any callable ``theta -> (value, gradient)``.  Search
directions come from the standard two-loop recursion over the last
``history_size`` curvature pairs, step lengths from a bracket-and-zoom line
search enforcing sufficient decrease and the (strong) curvature condition.
Accepted iterates therefore have monotonically non-increasing objective
values, and the whole run is deterministic given a deterministic objective.
"""

from __future__ import annotations

import csv
import json
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStartError


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    gradient_norm_tolerance: float = 1e-7
    relative_value_tolerance: float = 1e-10
    history_size: int = 10
    sufficient_decrease: float = 1e-4   # Armijo constant c1
    curvature: float = 0.9              # Wolfe constant c2
    max_line_search_evals: int = 30

    def __post_init__(self):
        if self.gradient_norm_tolerance <= 0 or self.relative_value_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.history_size < 1:
            raise ValueError("history_size must be >= 1")
        if not 0 < self.sufficient_decrease < self.curvature < 1:
            raise ValueError("need 0 < sufficient_decrease < curvature < 1")


@dataclass
class TraceRecord:
    iteration: int
    value: float
    grad_norm: float
    step_size: float
    elapsed_ms: float


@dataclass
class FitTrace:
    """Per-iteration history plus the reason the loop stopped."""

    records: list[TraceRecord] = field(default_factory=list)
    termination: str = ""
    n_evaluations: int = 0

    @property
    def final_value(self) -> float:
        return self.records[-1].value

    @property
    def final_grad_norm(self) -> float:
        return self.records[-1].grad_norm

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "value", "grad_norm", "elapsed_ms"])
            for r in self.records:
                writer.writerow(
                    [r.iteration, repr(r.value), repr(r.grad_norm), f"{r.elapsed_ms:.3f}"]
                )

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(
                    json.dumps(
                        {
                            "iter": r.iteration,
                            "value": r.value,
                            "grad_norm": r.grad_norm,
                            "step_size": r.step_size,
                            "elapsed_ms": r.elapsed_ms,
                        }
                    )
                )
                fh.write("\n")
            fh.write(json.dumps({"termination": self.termination}) + "\n")


def _cubic_step(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolant through (a, fa, da), (b, fb, db)."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


class _LineSearch:
    """Strong Wolfe bracket + zoom on phi(t) = f(x + t*d)."""

    def __init__(self, evaluate, x, direction, f0, g0, cfg: OptimizerConfig):
        self.evaluate = evaluate
        self.x = x
        self.direction = direction
        self.f0 = f0
        self.slope0 = float(g0 @ direction)
        self.cfg = cfg
        self.evals = 0

    def _phi(self, t):
        self.evals += 1
        f, g = self.evaluate(self.x + t * self.direction)
        return f, g, float(g @ self.direction)

    def _sufficient(self, t, f):
        return f <= self.f0 + self.cfg.sufficient_decrease * t * self.slope0

    def _curved(self, slope):
        return abs(slope) <= -self.cfg.curvature * self.slope0

    def run(self, t_init):
        if self.slope0 >= 0:
            return None
        prev_t, prev_f, prev_slope = 0.0, self.f0, self.slope0
        prev_g = None
        t = t_init
        for i in range(self.cfg.max_line_search_evals):
            f, g, slope = self._phi(t)
            if not np.isfinite(f):
                # back off from an overflow region rather than bracketing it
                t *= 0.5
                continue
            if not self._sufficient(t, f) or (i > 0 and f >= prev_f):
                return self._zoom(prev_t, prev_f, prev_slope, t, f, slope)
            if self._curved(slope):
                return t, f, g
            if slope >= 0:
                return self._zoom(t, f, slope, prev_t, prev_f, prev_slope)
            prev_t, prev_f, prev_slope, prev_g = t, f, slope, g
            t = min(2.0 * t, 1e12)
        return None

    def _zoom(self, lo, f_lo, slope_lo, hi, f_hi, slope_hi):
        best = None
        for _ in range(self.cfg.max_line_search_evals):
            t = _cubic_step(lo, f_lo, slope_lo, hi, f_hi, slope_hi)
            width = abs(hi - lo)
            inner_lo, inner_hi = min(lo, hi), max(lo, hi)
            if (
                t is None
                or not np.isfinite(t)
                or t <= inner_lo + 0.1 * width
                or t >= inner_hi - 0.1 * width
            ):
                t = 0.5 * (lo + hi)
            f, g, slope = self._phi(t)
            if not self._sufficient(t, f) or f >= f_lo:
                hi, f_hi, slope_hi = t, f, slope
            else:
                if self._curved(slope):
                    return t, f, g
                if slope * (hi - lo) >= 0:
                    hi, f_hi, slope_hi = lo, f_lo, slope_lo
                lo, f_lo, slope_lo = t, f, slope
                best = (t, f, g)
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        # accept a sufficient-decrease point even if the curvature condition
        # never held; the caller treats a None as a stall
        return best


def minimize(objective, theta0, cfg: OptimizerConfig | None = None):
    """Minimize ``objective(theta) -> (value, gradient)`` from ``theta0``.

    Returns ``(theta_best, FitTrace)``.  Termination reasons:
    "gradient-tolerance", "value-tolerance", "max-iterations",
    "line-search-stall".
    """
    cfg = cfg or OptimizerConfig()
    theta = np.array(theta0, dtype=np.float64)
    if theta.ndim != 1:
        raise InvalidStartError("starting point must be a flat vector")
    if not np.all(np.isfinite(theta)):
        raise InvalidStartError("starting point contains non-finite entries")

    trace = FitTrace()
    t_start = time.perf_counter()

    def evaluate(th):
        trace.n_evaluations += 1
        f, g = objective(th)
        return float(f), np.asarray(g, dtype=np.float64)

    f, g = evaluate(theta)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise InvalidStartError("objective is non-finite at the starting point")

    def record(iteration, value, grad_norm, step):
        trace.records.append(
            TraceRecord(
                iteration, value, grad_norm, step, (time.perf_counter() - t_start) * 1e3
            )
        )

    grad_norm = float(np.linalg.norm(g))
    record(0, f, grad_norm, 0.0)
    if grad_norm <= cfg.gradient_norm_tolerance:
        trace.termination = "gradient-tolerance"
        return theta, trace

    history: deque = deque(maxlen=cfg.history_size)
    for iteration in range(1, cfg.max_iterations + 1):
        direction = _lbfgs_direction(g, history)
        if float(g @ direction) >= 0:
            history.clear()
            direction = -g

        t_init = min(1.0, 1.0 / grad_norm) if not history else 1.0
        search = _LineSearch(evaluate, theta, direction, f, g, cfg)
        hit = search.run(t_init)
        if hit is None:
            trace.termination = "line-search-stall"
            return theta, trace

        step, f_new, g_new = hit
        s = step * direction
        y = g_new - g
        if float(s @ y) > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            history.append((s, y))

        theta = theta + s
        value_drop = f - f_new
        f, g = f_new, g_new
        grad_norm = float(np.linalg.norm(g))
        record(iteration, f, grad_norm, step)

        if grad_norm <= cfg.gradient_norm_tolerance:
            trace.termination = "gradient-tolerance"
            return theta, trace
        if value_drop <= cfg.relative_value_tolerance * max(1.0, abs(f)):
            trace.termination = "value-tolerance"
            return theta, trace

    trace.termination = "max-iterations"
    return theta, trace


def _lbfgs_direction(g, history) -> np.ndarray:
    q = -g.copy()
    if not history:
        return q
    alphas = []
    for s, y in reversed(history):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((a, rho, s, y))
        q -= a * y
    s_last, y_last = history[-1]
    q *= float(s_last @ y_last) / float(y_last @ y_last)
    for a, rho, s, y in reversed(alphas):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q
