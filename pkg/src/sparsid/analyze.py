"""Scoring, interpretability, and tracking diagnostics.

Errors are scored against a piecewise-constant ground-truth coefficient
trajectory; term contributions decompose a prediction into per-column
pieces that sum back to it exactly; equations render as readable strings
in dictionary column order.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .dictionary import build_matrix, build_row
from .errors import TimestampMismatch
from .posterior import PosteriorState, predict

__all__ = [
    "TruthTrajectory",
    "ErrorTrace",
    "ContributionRecord",
    "score_errors",
    "tracking_bound",
    "empirical_h",
    "contributions",
    "render_equations",
    "write_error_csv",
]


@dataclass(frozen=True)
class TruthTrajectory:
    """Piecewise-constant coefficient truth: betas[i] holds from times[i]
    (inclusive) until the next segment starts."""

    times: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        b = np.asarray(self.betas, dtype=float)
        if t.ndim != 1 or b.ndim != 2 or b.shape[0] != t.size or t.size == 0:
            raise ValueError("need matching 1-d times and 2-d betas")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("segment start times must be strictly increasing")
        object.__setattr__(self, "times", t.copy())
        object.__setattr__(self, "betas", b.copy())

    @classmethod
    def from_dict(cls, payload: dict) -> "TruthTrajectory":
        """Build from the sidecar truth format written by the simulator."""
        segments = payload["segments"]
        return cls(
            times=np.array([s["start_t"] for s in segments]),
            betas=np.array([s["coeffs"] for s in segments]),
        )

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            raise TimestampMismatch(
                f"no ground truth at t={t} (first segment starts at {self.times[0]})"
            )
        return self.betas[idx]


@dataclass(frozen=True)
class ErrorTrace:
    """Per-step estimation errors against the truth trajectory."""

    timestamps: np.ndarray
    l2_errors: np.ndarray
    per_coef_abs_errors: np.ndarray
    switch_steps: tuple


def score_errors(estimates, truth: TruthTrajectory) -> ErrorTrace:
    """Score a sequence of (timestamp, coefficient-vector) estimates.

    Estimates are sorted by timestamp before scoring, so the trace is
    invariant to input ordering. switch_steps flags the scored step indices
    at which the interpolated truth changes.
    """
    items = sorted(estimates, key=lambda e: e[0])
    if not items:
        raise ValueError("nothing to score")
    times = np.array([t for t, _ in items], dtype=float)
    est = np.vstack([np.asarray(v, dtype=float).ravel() for _, v in items])
    true = np.vstack([truth.at(t) for t in times])
    if est.shape != true.shape:
        raise ValueError(
            f"estimate dimension {est.shape[1]} does not match truth {true.shape[1]}"
        )
    abs_err = np.abs(est - true)
    switches = tuple(
        int(i)
        for i in range(1, true.shape[0])
        if not np.array_equal(true[i], true[i - 1])
    )
    return ErrorTrace(
        timestamps=times,
        l2_errors=np.linalg.norm(est - true, axis=1),
        per_coef_abs_errors=abs_err,
        switch_steps=switches,
    )


def tracking_bound(delta: float, xi: float, h: float) -> float:
    """Steady-state tracking error bound delta * h / (1 - xi).

    delta bounds the per-step drift of the true parameters, h bounds the
    posterior transfer gain, and xi is the forgetting factor, strictly
    inside (0, 1). The bound diverges as xi approaches 1 from below.
    """
    if not (0.0 < xi < 1.0):
        raise ValueError("xi must be strictly inside (0, 1)")
    if delta < 0.0 or h < 0.0:
        raise ValueError("delta and h must be nonnegative")
    return delta * h / (1.0 - xi)


def empirical_h(snapshots: list) -> float:
    """Empirical transfer gain: the largest operator norm of
    cov(t+1) @ cov(t)^-1 over consecutive posterior snapshots.

    Exploits the per-output block structure, where that product is
    S(t+1)^-1 @ S(t) blockwise.
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    worst = 0.0
    for prev, cur in zip(snapshots[:-1], snapshots[1:]):
        for i in range(cur.n_outputs):
            product = np.linalg.solve(cur.s_blocks[i], prev.s_blocks[i])
            worst = max(worst, float(np.linalg.norm(product, 2)))
    return worst


@dataclass(frozen=True)
class ContributionRecord:
    """Per-term contribution decomposition of one prediction.

    raw[j, i] is coefficient (term j, output i) times the dictionary row
    value; the raw columns sum to the predictive mean exactly. centered
    subtracts a baseline row (the mean dictionary row over the provided
    background states) before multiplying, which removes the share a term
    contributes merely by being constant over the window.
    """

    labels: tuple
    raw: np.ndarray
    centered: np.ndarray | None
    prediction: np.ndarray
    residual: np.ndarray


def contributions(
    post: PosteriorState, state, baseline_states=None
) -> ContributionRecord:
    """Decompose the predictive mean at `state` into per-term pieces."""
    row = build_row(post.spec, np.asarray(state, dtype=float))
    means = post.mean_blocks()  # (n_y, n_p)
    raw = row[:, None] * means.T  # (n_p, n_y)
    prediction, _ = predict(post, state)
    residual = prediction - raw.sum(axis=0)
    centered = None
    if baseline_states is not None and len(baseline_states) > 0:
        baseline = build_matrix(post.spec, baseline_states).mean(axis=0)
        centered = (row - baseline)[:, None] * means.T
    return ContributionRecord(
        labels=post.spec.column_labels,
        raw=raw,
        centered=centered,
        prediction=prediction,
        residual=residual,
    )


def _sig4(value: float) -> str:
    out = f"{value:#.4g}"
    return out.rstrip(".") if out.endswith(".") else out


def render_equations(
    post: PosteriorState, threshold: float, include_std: bool = True
) -> list:
    """One readable equation string per output.

    Terms with |mean| >= threshold appear in dictionary column order with
    coefficients to 4 significant digits; outputs with no surviving term
    render as zero.
    """
    if threshold < 0.0:
        raise ValueError("threshold must be nonnegative")
    means = post.mean_blocks()
    stds = post.std_blocks()
    labels = post.spec.column_labels
    lines = []
    for i in range(post.n_outputs):
        pieces = []
        for j, label in enumerate(labels):
            coef = float(means[i, j])
            if abs(coef) < threshold:
                continue
            body = f"{_sig4(abs(coef))}·{label}"
            if include_std:
                body += f" ± {_sig4(float(stds[i, j]))}"
            if not pieces:
                pieces.append(body if coef >= 0.0 else f"-{body}")
            else:
                pieces.append(f"{'+' if coef >= 0.0 else '-'} {body}")
        rhs = " ".join(pieces) if pieces else "0"
        lines.append(f"dx{i + 1}/dt = {rhs}")
    return lines


def write_error_csv(path, trace: ErrorTrace) -> None:
    """Error trace as CSV: t, l2_error, then one |error| column per
    coefficient; switch steps are marked in a final column."""
    switch_set = set(trace.switch_steps)
    d = trace.per_coef_abs_errors.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "l2_error"] + [f"abs_err_{j + 1}" for j in range(d)] + ["truth_switch"]
        )
        for i, (t, l2) in enumerate(zip(trace.timestamps, trace.l2_errors)):
            writer.writerow(
                [repr(float(t)), repr(float(l2))]
                + [repr(float(v)) for v in trace.per_coef_abs_errors[i]]
                + [int(i in switch_set)]
            )
