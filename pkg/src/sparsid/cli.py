"""Command-line front end.

Four modes: `simulate` writes a benchmark stream as CSV plus a ground-truth
sidecar; `fit` runs the online estimator over a CSV and emits one JSONL
record per step plus rendered equations; `stream` is fit for a file that is
still being appended to (stops after an idle timeout); `monitor` runs the
well-posedness and excitation diagnostics only.

Configuration comes from defaults, then an optional JSON config file, then
command-line flags (flags win). Exit codes: 0 success, 2 configuration
error, 3 input/output error, 4 well-posedness violation at initialization
under a strict policy.

Ingestion, estimation, and emission run as a three-stage pipeline over
bounded queues; the estimator state has a single writer (the middle
stage). A single-threaded run of the same stages produces byte-identical
output; select it with the `pipeline` config key.
"""

import argparse
import csv
import io
import json
import queue
import sys
import threading
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import recursion as rec
from .analyze import TruthTrajectory, render_equations, score_errors, write_error_csv
from .dictionary import DictionarySpec, Sample
from .errors import ConditionViolated, SparsidError
from .monitor import check_pe, utility
from .posterior import NoiseModel, initial_horseshoe
from .simulate import (
    LorenzConfig,
    SparseRegressionConfig,
    case1_truth_payload,
    gen_sparse_regression,
    lorenz_truth_payload,
    samples_from_arrays,
    simulate_lorenz,
    write_csv,
    write_truth_json,
)

__all__ = ["RunConfig", "run_simulate", "run_fit", "run_monitor", "main"]


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


class InputError(Exception):
    """Missing or malformed input data; maps to exit code 3."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs. Every CLI flag mirrors one key here; the
    remaining keys are config-file only."""

    mode: str = "fit"
    case: str = "case1"
    input: str | None = None
    output: str | None = None
    window: int = 200
    batch_in: int = 1
    forget: int = 0
    xi: float = 1.0
    degree: int = 2
    policy: str = "warn"
    seed: int = 0
    theta_mode: str = "adaptive"
    threshold: float = 0.1
    # simulate extras (flags exist for dt/t_end/m/n)
    dt: float = 0.01
    t_end: float = 100.0
    m: int = 50
    n: int = 600
    nonzero_fraction: float = 0.3
    noise_variance: float = 0.1
    switch_at: int | None = None
    lorenz_noise_std: float = 1.0
    observation_mode: str = "derivative"
    # fit/monitor extras (config-file only)
    include_bias: bool = True
    noise_variances: object = 1.0
    initial_scale: float = 1.0
    initial_tau: float = 1.0
    refresh_every: int | None = None
    condition_on_discounted: bool = False
    truth: str | None = None
    alpha1: float = 1e-6
    pipeline: str = "threads"
    idle_timeout: float = 5.0

    def __post_init__(self):
        if self.mode not in ("simulate", "fit", "stream", "monitor"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.case not in ("case1", "lorenz"):
            raise ConfigError(f"unknown case {self.case!r}")
        if self.pipeline not in ("threads", "single"):
            raise ConfigError("pipeline must be 'threads' or 'single'")
        if self.idle_timeout <= 0.0:
            raise ConfigError("idle_timeout must be positive")


_FLAGS = (
    ("--mode", "mode", str),
    ("--case", "case", str),
    ("--input", "input", str),
    ("--output", "output", str),
    ("--window", "window", int),
    ("--batch-in", "batch_in", int),
    ("--forget", "forget", int),
    ("--xi", "xi", float),
    ("--degree", "degree", int),
    ("--policy", "policy", str),
    ("--seed", "seed", int),
    ("--theta-mode", "theta_mode", str),
    ("--threshold", "threshold", float),
    ("--dt", "dt", float),
    ("--t-end", "t_end", float),
    ("--m", "m", int),
    ("--n", "n", int),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsid",
        description="Online sparse Bayesian identification of governing equations.",
    )
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    for flag, dest, typ in _FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None)
    return parser


def resolve_config(namespace: argparse.Namespace) -> RunConfig:
    """defaults < config file < flags."""
    known = {f.name for f in fields(RunConfig)}
    merged = {}
    if namespace.config is not None:
        try:
            with open(namespace.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for _, dest, _ in _FLAGS:
        value = getattr(namespace, dest)
        if value is not None:
            merged[dest] = value
    try:
        return RunConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- simulate


def run_simulate(cfg: RunConfig) -> None:
    if cfg.output is None:
        raise ConfigError("simulate requires --output")
    # validate the whole scenario before touching the filesystem
    if cfg.case == "case1":
        try:
            scenario = SparseRegressionConfig(
                m=cfg.m,
                n_samples=cfg.n,
                nonzero_fraction=cfg.nonzero_fraction,
                noise_variance=cfg.noise_variance,
                switch_at=cfg.switch_at,
                seed=cfg.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        x, y, beta_true = gen_sparse_regression(scenario)
        samples = samples_from_arrays(np.arange(len(x), dtype=float), x, y)
        truth = case1_truth_payload(scenario, beta_true)
    else:
        try:
            scenario = LorenzConfig(
                dt=cfg.dt,
                t_end=cfg.t_end,
                noise_std=cfg.lorenz_noise_std,
                observation_mode=cfg.observation_mode,
                seed=cfg.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        samples = simulate_lorenz(scenario)
        truth = lorenz_truth_payload(scenario)
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "data.csv", samples)
        write_truth_json(out / "truth.json", truth)
    except OSError as exc:
        raise InputError(str(exc)) from exc


# ----------------------------------------------------------------- parsing


def _parse_header(line: str) -> tuple:
    cols = next(csv.reader(io.StringIO(line)))
    if not cols or cols[0] != "t":
        raise InputError("first CSV column must be 't'")
    n_x = 0
    i = 1
    while i < len(cols) and cols[i] == f"x{n_x + 1}":
        n_x += 1
        i += 1
    n_y = 0
    while i < len(cols) and cols[i] == f"y{n_y + 1}":
        n_y += 1
        i += 1
    if i != len(cols) or n_x == 0 or n_y == 0:
        raise InputError(f"malformed CSV header: {line.strip()!r}")
    return n_x, n_y


def _parse_row(line: str, n_x: int, n_y: int, last_t: float | None) -> Sample:
    cells = next(csv.reader(io.StringIO(line)))
    if len(cells) != 1 + n_x + n_y:
        raise InputError(f"row has {len(cells)} fields, expected {1 + n_x + n_y}")
    try:
        values = [float(c) for c in cells]
    except ValueError as exc:
        raise InputError(f"non-numeric cell in row: {line.strip()!r}") from exc
    t = values[0]
    if last_t is not None and t <= last_t:
        raise InputError(f"timestamps must be strictly increasing at t={t}")
    try:
        return Sample(
            timestamp=t,
            state=np.array(values[1 : 1 + n_x]),
            observation=np.array(values[1 + n_x :]),
        )
    except SparsidError as exc:
        raise InputError(str(exc)) from exc


def _read_lines(path: str):
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    with fh:
        for line in fh:
            if line.strip():
                yield line


def _follow_lines(path: str, idle_timeout: float, poll: float = 0.05):
    """Tail a growing file; stop after idle_timeout with no new data."""
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    with fh:
        buf = ""
        idle = 0.0
        while True:
            chunk = fh.readline()
            if chunk:
                idle = 0.0
                buf += chunk
                if buf.endswith("\n"):
                    if buf.strip():
                        yield buf
                    buf = ""
                continue
            if idle >= idle_timeout:
                if buf.strip():
                    yield buf
                return
            time.sleep(poll)
            idle += poll


def _sample_source(lines, holder: dict):
    """Parse a CSV line stream into Samples; stashes (n_x, n_y) in holder."""
    header = None
    last_t = None
    for line in lines:
        if header is None:
            header = _parse_header(line)
            holder["shape"] = header
            continue
        sample = _parse_row(line, header[0], header[1], last_t)
        last_t = sample.timestamp
        yield sample
    if header is None:
        raise InputError("input has no header row")


# ---------------------------------------------------------------- pipeline

_DONE = object()


def _run_pipeline(source, transform, sink, mode: str) -> None:
    """source -> transform -> sink over bounded queues (or inline)."""
    if mode == "single":
        for item in source:
            record = transform(item)
            if record is not None:
                sink(record)
        return

    q_in: queue.Queue = queue.Queue(maxsize=256)
    q_out: queue.Queue = queue.Queue(maxsize=256)
    failures: list = []

    def ingest():
        try:
            for item in source:
                q_in.put(item)
        except BaseException as exc:  # noqa: BLE001 - forwarded to the caller
            failures.append(exc)
        finally:
            q_in.put(_DONE)

    def estimate():
        try:
            while True:
                item = q_in.get()
                if item is _DONE:
                    break
                record = transform(item)
                if record is not None:
                    q_out.put(record)
        except BaseException as exc:  # noqa: BLE001
            failures.append(exc)
            while q_in.get() is not _DONE:  # drain so ingest cannot block
                pass
        finally:
            q_out.put(_DONE)

    threads = [threading.Thread(target=ingest), threading.Thread(target=estimate)]
    for t in threads:
        t.start()
    while True:
        record = q_out.get()
        if record is _DONE:
            break
        sink(record)
    for t in threads:
        t.join()
    if failures:
        raise failures[0]


# --------------------------------------------------------------- fit modes


class _FitDriver:
    """Middle pipeline stage: warm up, then step the estimator per batch."""

    def __init__(self, cfg: RunConfig, spec: DictionarySpec, n_y: int):
        self.cfg = cfg
        self.spec = spec
        try:
            self.rconfig = rec.RecursionConfig(
                window=cfg.window,
                batch_in=cfg.batch_in,
                forget=cfg.forget,
                forgetting_factor=cfg.xi,
                policy=cfg.policy,
                theta_mode=cfg.theta_mode,
                refresh_every=cfg.refresh_every,
                condition_on_discounted=cfg.condition_on_discounted,
            )
            self.noise = NoiseModel(_broadcast_variances(cfg.noise_variances, n_y))
            self.horseshoe = initial_horseshoe(
                spec, n_y, scale=cfg.initial_scale, tau=cfg.initial_tau
            )
        except (ValueError, SparsidError) as exc:
            raise ConfigError(str(exc)) from exc
        self.warmup: list = []
        self.batch: list = []
        self.state = None
        self.estimates: list = []

    def feed(self, sample: Sample) -> dict | None:
        if self.state is None:
            self.warmup.append(sample)
            if len(self.warmup) == self.cfg.window:
                self.state = rec.init(
                    self.spec, self.rconfig, self.warmup, self.noise, self.horseshoe
                )
            return None
        self.batch.append(sample)
        if len(self.batch) < self.cfg.batch_in:
            return None
        outcome = rec.step(self.state, self.batch)
        self.batch = []
        record = rec.step_record(self.state, outcome)
        if outcome.accepted:
            self.estimates.append(
                (outcome.timestamp, rec.snapshot(self.state).mean())
            )
        return record


def _broadcast_variances(value, n_y: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n_y, float(arr[0]))
    if arr.size != n_y:
        raise ConfigError(
            f"noise_variances has {arr.size} entries but the stream has {n_y} outputs"
        )
    return arr


def _load_truth(cfg: RunConfig) -> TruthTrajectory | None:
    path = cfg.truth
    if path is None and cfg.input is not None:
        candidate = Path(cfg.input).parent / "truth.json"
        path = str(candidate) if candidate.exists() else None
    if path is None:
        return None
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read truth file: {exc}") from exc
    if "segments" not in payload:
        return None  # not a coefficient trajectory (e.g. drifting-parameter truth)
    return TruthTrajectory.from_dict(payload)


def run_fit(cfg: RunConfig) -> None:
    if cfg.input is None or cfg.output is None:
        raise ConfigError("fit requires --input and --output")
    if cfg.batch_in < 1:
        raise ConfigError("batch_in must be at least 1 for fit runs")
    out = Path(cfg.output)
    lines = (
        _follow_lines(cfg.input, cfg.idle_timeout)
        if cfg.mode == "stream"
        else _read_lines(cfg.input)
    )
    holder: dict = {}
    samples = _sample_source(lines, holder)

    # the header arrives with the first sample, so peek one sample ahead
    try:
        first = next(samples)
    except StopIteration:
        raise InputError("input holds a header but no rows") from None
    n_x, n_y = holder["shape"]
    try:
        spec = DictionarySpec(
            state_dim=n_x, poly_degree=cfg.degree, include_bias=cfg.include_bias
        )
    except (ValueError, SparsidError) as exc:
        raise ConfigError(str(exc)) from exc
    driver = _FitDriver(cfg, spec, n_y)

    def chained():
        yield first
        yield from samples

    out.mkdir(parents=True, exist_ok=True)
    try:
        with open(out / "steps.jsonl", "w") as fh:

            def sink(record: dict) -> None:
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")

            _run_pipeline(chained(), driver.feed, sink, cfg.pipeline)
    except OSError as exc:
        raise InputError(str(exc)) from exc

    if driver.state is None:
        raise InputError(
            f"input ended during warmup ({len(driver.warmup)} of {cfg.window} samples)"
        )
    final = rec.snapshot(driver.state)
    with open(out / "equations.txt", "w") as fh:
        for line in render_equations(final, cfg.threshold):
            fh.write(line)
            fh.write("\n")
    truth = _load_truth(cfg)
    if truth is not None and driver.estimates:
        write_error_csv(out / "errors.csv", score_errors(driver.estimates, truth))


# ----------------------------------------------------------------- monitor


class _MonitorDriver:
    """Diagnostics-only stage: utility of each batch, excitation of the
    sliding window after it."""

    def __init__(self, cfg: RunConfig, spec: DictionarySpec):
        if cfg.batch_in < 1:
            raise ConfigError("batch_in must be at least 1 for monitor runs")
        if cfg.forget > cfg.window:
            raise ConfigError("cannot forget more samples than the window holds")
        self.cfg = cfg
        self.spec = spec
        self.window: list = []
        self.batch: list = []
        self.step_index = 0

    def feed(self, sample: Sample) -> dict | None:
        if len(self.window) < self.cfg.window:
            self.window.append(sample)
            return None
        self.batch.append(sample)
        if len(self.batch) < self.cfg.batch_in:
            return None
        old = self.window[: self.cfg.forget]
        report = utility(
            self.spec, [s.state for s in self.batch], [s.state for s in old]
        )
        self.window = self.window[self.cfg.forget :] + self.batch
        self.window = self.window[-self.cfg.window :]
        pe = check_pe(self.spec, [s.state for s in self.window], self.cfg.alpha1)
        self.step_index += 1
        record = {
            "step": self.step_index,
            "t": float(self.batch[-1].timestamp),
            "classification": report.classification,
            "kappa_min": float(report.kappas[0]),
            "kappa_max": float(report.kappas[-1]),
            "pe_min_avg_eig": pe.min_avg_eig,
            "pe_max_avg_eig": pe.max_avg_eig,
            "pe_satisfied": pe.satisfied,
        }
        self.batch = []
        return record


def run_monitor(cfg: RunConfig) -> None:
    if cfg.input is None or cfg.output is None:
        raise ConfigError("monitor requires --input and --output")
    out = Path(cfg.output)
    holder: dict = {}
    samples = _sample_source(_read_lines(cfg.input), holder)
    try:
        first = next(samples)
    except StopIteration:
        raise InputError("input holds a header but no rows") from None
    n_x, _ = holder["shape"]
    try:
        spec = DictionarySpec(
            state_dim=n_x, poly_degree=cfg.degree, include_bias=cfg.include_bias
        )
    except (ValueError, SparsidError) as exc:
        raise ConfigError(str(exc)) from exc
    driver = _MonitorDriver(cfg, spec)

    def chained():
        yield first
        yield from samples

    out.mkdir(parents=True, exist_ok=True)
    try:
        with open(out / "monitor.jsonl", "w") as fh:

            def sink(record: dict) -> None:
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")

            _run_pipeline(chained(), driver.feed, sink, cfg.pipeline)
    except OSError as exc:
        raise InputError(str(exc)) from exc


# -------------------------------------------------------------------- main


def main(argv=None) -> int:
    parser = build_parser()
    namespace = parser.parse_args(argv)
    try:
        cfg = resolve_config(namespace)
        if cfg.mode == "simulate":
            run_simulate(cfg)
        elif cfg.mode in ("fit", "stream"):
            run_fit(cfg)
        else:
            run_monitor(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except ConditionViolated as exc:
        print(f"well-posedness violation: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
