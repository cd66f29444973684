"""Monte Carlo harness: reception overhead of finite codes and the rank-law check."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import rank_pmf_binomial
from .code import GammaCode
from .codespec import CodeSpec
from .decoder import DecodeStalled, Decoder, run_until_success
from .field import batch_rank, field_for_q


@dataclass
class TrialResult:
    N_r: int
    overhead: float
    success: bool
    iterations: int


def trial_seed(master, index):
    """Per-trial seed split off the master seed by counter."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def run_trial(spec: CodeSpec, seed, payload=4, max_factor=10):
    """Build fresh graphs from ``seed``, send random data and decode it.

    A stalled decoder is reported as ``success=False`` with the packets it
    consumed; success also requires the recovered payloads to equal the sent ones.
    """
    code = GammaCode.build(spec, seed=seed)
    info = code.random_info(payload, seed)
    dec = Decoder(code, payload)
    src = code.source(code.encode(info), seed)
    try:
        n_r, eps = run_until_success(dec, src, max_factor=max_factor)
    except DecodeStalled:
        n_r = dec.received
        return TrialResult(n_r, (n_r - dec.K_info) / dec.K_info, False, dec.rounds)
    ok = bool(np.array_equal(dec.decoded(), info))
    return TrialResult(n_r, eps, ok, dec.rounds)


@dataclass
class ExperimentConfig:
    spec: CodeSpec
    trials: int = 100
    seed: int = 0
    summary_path: Optional[str] = None
    ccdf_path: Optional[str] = None
    payload: int = 4
    workers: int = 1
    ccdf_step: float = 0.005

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @classmethod
    def from_json(cls, d, spec=None):
        d = dict(d)
        spec = spec or CodeSpec.from_json(d.pop("spec"))
        d.pop("spec", None)
        return cls(spec=spec, **d)


@dataclass
class ExperimentSummary:
    results: list
    mean_overhead: float
    std_overhead: float
    failures: int
    percentiles: dict
    ccdf: list = field(default_factory=list)

    @property
    def overheads(self):
        return np.array([r.overhead for r in self.results])

    @property
    def stderr(self):
        return self.std_overhead / np.sqrt(len(self.results))


def _one(args):
    spec, seed, payload = args
    return run_trial(spec, seed, payload)


def ccdf_table(overheads, step=0.005):
    """``Pr[overhead > x]`` on a grid from 0 past the largest observation."""
    ov = np.sort(np.asarray(overheads, dtype=float))
    top = max(float(ov[-1]), 0.0) + step
    grid = np.round(np.arange(0.0, top + step / 2, step), 6)
    tail = 1.0 - np.searchsorted(ov, grid, side="right") / len(ov)
    return list(zip(grid.tolist(), tail.tolist()))


def run_experiment(config: ExperimentConfig):
    jobs = [(config.spec, trial_seed(config.seed, i), config.payload) for i in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            results = list(ex.map(_one, jobs, chunksize=4))
    else:
        results = [_one(j) for j in jobs]
    ov = np.array([r.overhead for r in results])
    summary = ExperimentSummary(
        results=results,
        mean_overhead=float(ov.mean()),
        std_overhead=float(ov.std(ddof=1)) if len(ov) > 1 else 0.0,
        failures=sum(not r.success for r in results),
        percentiles={p: float(np.percentile(ov, p)) for p in (50, 90, 99)},
        ccdf=ccdf_table(ov, config.ccdf_step),
    )
    if config.summary_path:
        with open(config.summary_path, "w", newline="") as fh:
            write_summary(summary, fh)
    if config.ccdf_path:
        with open(config.ccdf_path, "w", newline="") as fh:
            write_ccdf(summary.ccdf, fh)
    return summary


def write_summary(summary, fh):
    w = csv.writer(fh)
    w.writerow(["trial", "N_r", "overhead", "success", "iterations"])
    for i, r in enumerate(summary.results):
        w.writerow([i, r.N_r, f"{r.overhead:.10f}", int(r.success), r.iterations])
    fh.write(f"# mean_overhead={summary.mean_overhead:.10f}\n")


def write_ccdf(rows, fh):
    w = csv.writer(fh)
    w.writerow(["overhead", "ccdf"])
    for x, p in rows:
        w.writerow([f"{x:.4f}", f"{p:.6f}"])


def summary_csv(summary):
    buf = io.StringIO()
    write_summary(summary, buf)
    return buf.getvalue()


def q_sweep(spec, trials, seed=0, qs=(2, 16, 256), payload=1):
    """Mean overhead of the same design at each field size (same seeds, same graphs)."""
    return {q: run_experiment(ExperimentConfig(spec.replace(q=q), trials, seed, payload=payload)) for q in qs}


def empirical_rank_histogram(n, g, q, r, trials, seed=0, batch=2000):
    """Rank of one random generation after ``r n`` uniformly spread SRLNC receptions.

    The generation receives ``Binomial(r n, 1/n)`` packets with i.i.d. uniform
    coefficient vectors, so its rank is that of a random matrix with that
    many rows.
    """
    ctx = field_for_q(q)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1E]))
    total = int(round(r * n))
    hist = np.zeros(g + 1, dtype=np.int64)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        k = rng.binomial(total, 1.0 / n, size=b)
        rows = max(1, int(k.max()))
        mats = ctx.random(rng, (b, rows, g))
        mats[np.arange(rows)[None, :] >= k[:, None]] = 0
        hist += np.bincount(batch_rank(ctx, mats), minlength=g + 1)
        done += b
    return hist


def validate_rank_model(n, g, q, r, trials, seed=0):
    """Total-variation distance between simulated generation ranks and the truncated binomial law."""
    hist = empirical_rank_histogram(n, g, q, r, trials, seed)
    emp = hist / hist.sum()
    return 0.5 * float(np.abs(emp - rank_pmf_binomial(r, n, g)).sum()), emp
