"""Monte Carlo verification of the run-length limit law.

For a family with entropy exponent tau, the run length over the first n
digits of a uniformly random stream grows like log_m(n) / (1 - tau); the
``monte_carlo_limit`` table records the per-trial ratios ell_n / log_m(n)
on an n grid together with the theoretical target 1/(1-tau).

``bound_event_frequency`` estimates the tail events behind the law: with

    gamma_n = ceil((1+eps)/(1-tau-eps) * log_m n)
    delta_n = floor((1-eps)/(1-tau+eps) * log_m n)

the upper event {ell_n >= gamma_n} has probability at most n^-eps, and
the lower event {ell_n < delta_n} becomes vanishingly rare; the table
reports empirical frequencies with binomial standard errors and flags an
upper frequency that exceeds its bound by more than three standard
errors.

Reproducibility contract: trial t draws its digits from
PCG64(SeedSequence(master_seed, spawn_key=(t,))).  Trials are therefore
independent of scheduling; runs with any worker count produce
bit-identical tables, and the aggregate statistics are computed from the
sorted per-trial values so accumulation order cannot leak in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .family import ConstraintFamily
from .scanner import SeededRandomStream, scan_series

# ---------------------------------------------------------------------------
# tail-event schedule


@dataclass
class BoundSchedule:
    """Integer thresholds gamma_n (upper) and delta_n (lower) for the tail
    events, at tail parameter eps in (0, 1 - tau)."""

    tau: float
    epsilon: float
    base: int = 2

    def __post_init__(self):
        if not 0 <= self.tau <= 1:
            raise InputError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0 < self.epsilon < 1 - self.tau:
            raise InputError(
                f"epsilon must satisfy 0 < epsilon < 1 - tau = {1 - self.tau:.6g}; "
                f"got {self.epsilon}"
            )

    def _logm(self, n: int) -> float:
        return math.log2(n) if self.base == 2 else math.log(n, self.base)

    def gamma(self, n: int) -> int:
        return math.ceil(
            (1 + self.epsilon) / (1 - self.tau - self.epsilon) * self._logm(n)
        )

    def delta(self, n: int) -> int:
        return math.floor(
            (1 - self.epsilon) / (1 - self.tau + self.epsilon) * self._logm(n)
        )


# ---------------------------------------------------------------------------
# per-trial seeding


def trial_rng_stream(
    master_seed: int, trial: int, base: int
) -> SeededRandomStream:
    """Digit stream for one trial: PCG64(SeedSequence(master, spawn_key=(t,)))."""
    return SeededRandomStream(master_seed, base=base, spawn_key=(trial,))


def _scan_trial_range(
    family: ConstraintFamily,
    grid: np.ndarray,
    master_seed: int,
    t_lo: int,
    t_hi: int,
) -> np.ndarray:
    out = np.empty((t_hi - t_lo, len(grid)), dtype=np.int32)
    for t in range(t_lo, t_hi):
        stream = trial_rng_stream(master_seed, t, family.base)
        series = scan_series(stream, grid, family)
        out[t - t_lo] = series.values
    return out


# ---------------------------------------------------------------------------
# trial tables


@dataclass
class TrialTable:
    """Run lengths per (trial, grid point) with full provenance."""

    family_id: str
    base: int
    n_grid: np.ndarray
    trials: int
    master_seed: int
    tau: float
    ell: np.ndarray  # shape (trials, len(n_grid)), int32
    target: float = field(init=False)

    def __post_init__(self):
        self.n_grid = np.asarray(self.n_grid, dtype=np.int64)
        self.ell = np.asarray(self.ell, dtype=np.int32)
        if self.ell.shape != (self.trials, len(self.n_grid)):
            raise InputError("ell shape does not match (trials, grid)")
        self.target = math.inf if self.tau >= 1.0 else 1.0 / (1.0 - self.tau)

    def log_n(self) -> np.ndarray:
        return np.log(self.n_grid.astype(np.float64)) / math.log(self.base)

    def ratios(self) -> np.ndarray:
        """ell_n / log_m(n), shape (trials, grid)."""
        return self.ell / self.log_n()

    def __eq__(self, other):
        return (
            isinstance(other, TrialTable)
            and self.family_id == other.family_id
            and self.base == other.base
            and self.trials == other.trials
            and self.master_seed == other.master_seed
            and self.tau == other.tau
            and np.array_equal(self.n_grid, other.n_grid)
            and np.array_equal(self.ell, other.ell)
        )


def monte_carlo_limit(
    family: ConstraintFamily,
    tau: float,
    n_grid: Sequence[int],
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> TrialTable:
    """Per-trial run lengths on the grid over independent seeded streams.

    ``tau`` is an explicit input (take it from the census or a closed
    form) so the reported target 1/(1-tau) is auditable; it is never
    recomputed behind the caller's back.  Results are bit-identical for
    any ``workers`` value.
    """
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    grid = np.asarray(list(n_grid), dtype=np.int64)
    if grid.size == 0 or grid[0] < 2 or np.any(np.diff(grid) <= 0):
        raise InputError("n grid must be strictly increasing with n >= 2")
    if workers <= 1 or trials == 1:
        ell = _scan_trial_range(family, grid, master_seed, 0, trials)
    else:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, -(-trials // (workers * 4)))
        ranges = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
        ell = np.empty((trials, len(grid)), dtype=np.int32)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (lo, pool.submit(_scan_trial_range, family, grid, master_seed, lo, hi))
                for lo, hi in ranges
            ]
            for lo, fut in futures:
                block = fut.result()
                ell[lo : lo + len(block)] = block
    return TrialTable(
        family_id=family.family_id(),
        base=family.base,
        n_grid=grid,
        trials=trials,
        master_seed=master_seed,
        tau=tau,
        ell=ell,
    )


@dataclass
class AggregateRow:
    n: int
    mean: float
    median: float
    std: float
    min: float
    max: float
    target: float


def aggregate(table: TrialTable) -> list[AggregateRow]:
    """Across-trial statistics of the ratio at each grid point.

    Statistics are taken over the sorted per-trial ratios, so they do not
    depend on trial execution order.  The standard deviation is the
    population form (ddof=0).
    """
    rows = []
    logs = table.log_n()
    for j, n in enumerate(table.n_grid):
        vals = np.sort(table.ell[:, j].astype(np.float64)) / logs[j]
        rows.append(
            AggregateRow(
                n=int(n),
                mean=float(vals.mean()),
                median=float(np.median(vals)),
                std=float(vals.std()),
                min=float(vals[0]),
                max=float(vals[-1]),
                target=table.target,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# tail-event frequencies


@dataclass
class FrequencyRow:
    n: int
    gamma_n: int
    delta_n: int
    freq_ge_gamma: float
    se_ge_gamma: float
    bound_n_eps: float
    exceeds_bound: bool
    freq_lt_delta: float
    se_lt_delta: float


@dataclass
class FrequencyTable:
    family_id: str
    base: int
    epsilon: float
    tau: float
    trials: int
    master_seed: int
    rows: list[FrequencyRow]


def bound_event_frequency(
    family: ConstraintFamily,
    tau: float,
    epsilon: float,
    n_list: Sequence[int],
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> FrequencyTable:
    """Empirical frequencies of the tail events at each n.

    The upper event is {ell_n >= gamma_n}, compared against the n^-eps
    decay with a three-standard-error allowance; the lower event is
    {ell_n < delta_n}.  Standard errors are binomial.
    """
    schedule = BoundSchedule(tau=tau, epsilon=epsilon, base=family.base)
    table = monte_carlo_limit(family, tau, n_list, trials, master_seed, workers)
    rows = []
    for j, n in enumerate(table.n_grid):
        n = int(n)
        g, d = schedule.gamma(n), schedule.delta(n)
        col = table.ell[:, j]
        p_up = int(np.count_nonzero(col >= g)) / trials
        p_lo = int(np.count_nonzero(col < d)) / trials
        se_up = math.sqrt(p_up * (1 - p_up) / trials)
        se_lo = math.sqrt(p_lo * (1 - p_lo) / trials)
        bound = n ** (-epsilon)
        rows.append(
            FrequencyRow(
                n=n,
                gamma_n=g,
                delta_n=d,
                freq_ge_gamma=p_up,
                se_ge_gamma=se_up,
                bound_n_eps=bound,
                exceeds_bound=bool(p_up > bound + 3 * se_up),
                freq_lt_delta=p_lo,
                se_lt_delta=se_lo,
            )
        )
    return FrequencyTable(
        family_id=family.family_id(),
        base=family.base,
        epsilon=epsilon,
        tau=tau,
        trials=trials,
        master_seed=master_seed,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# emission

TRIALS_CSV_COLUMNS = ("family", "n", "trial", "ell_n", "ratio")
AGGREGATE_CSV_COLUMNS = ("family", "n", "mean", "median", "std", "target")
FREQUENCY_CSV_COLUMNS = (
    "family",
    "n",
    "gamma_n",
    "delta_n",
    "freq_ge_gamma",
    "se_ge_gamma",
    "bound_n_eps",
    "exceeds_bound",
    "freq_lt_delta",
    "se_lt_delta",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_trials_csv(table: TrialTable, path) -> None:
    """Rows ordered by n then trial; floats as shortest round-trip repr."""
    logs = table.log_n()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIALS_CSV_COLUMNS)
        for j, n in enumerate(table.n_grid):
            col = table.ell[:, j]
            for t in range(table.trials):
                ell = int(col[t])
                writer.writerow(
                    [table.family_id, int(n), t, ell, repr(ell / logs[j])]
                )


def emit_aggregate_csv(table: TrialTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_CSV_COLUMNS)
        for row in aggregate(table):
            writer.writerow(
                [table.family_id, row.n]
                + [_fmt(v) for v in (row.mean, row.median, row.std, row.target)]
            )


def emit_frequency_csv(freq: FrequencyTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FREQUENCY_CSV_COLUMNS)
        for r in freq.rows:
            writer.writerow(
                [
                    freq.family_id,
                    r.n,
                    r.gamma_n,
                    r.delta_n,
                    _fmt(r.freq_ge_gamma),
                    _fmt(r.se_ge_gamma),
                    _fmt(r.bound_n_eps),
                    int(r.exceeds_bound),
                    _fmt(r.freq_lt_delta),
                    _fmt(r.se_lt_delta),
                ]
            )


def read_trials_csv(path, base: int = 2, master_seed: int = -1, tau: float = 0.0) -> TrialTable:
    """Inverse of emit_trials_csv.

    The schema stores only (family, n, trial, ell_n, ratio); supply the
    remaining provenance to rebuild a table equal to the emitted one.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRIALS_CSV_COLUMNS:
            raise InputError(f"{path}: unexpected header {header}")
        cells: dict[tuple[int, int], int] = {}
        family_id = ""
        for family_id, n, t, ell, _ratio in reader:
            cells[(int(n), int(t))] = int(ell)
    ns = sorted({k[0] for k in cells})
    ts = sorted({k[1] for k in cells})
    ell = np.array(
        [[cells[(n, t)] for n in ns] for t in ts], dtype=np.int32
    )
    return TrialTable(
        family_id=family_id,
        base=base,
        n_grid=np.array(ns, dtype=np.int64),
        trials=len(ts),
        master_seed=master_seed,
        tau=tau,
        ell=ell,
    )


def emit_plot(tables: Sequence[TrialTable], path, formats: str = "svg") -> None:
    """Ratio-vs-log2(n) plot, one series per family, with target lines.

    SVG output is made byte-deterministic: no date metadata, fixed hash
    salt.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "maxrun"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for table in tables:
            xs = np.log2(table.n_grid.astype(np.float64))
            means = [row.mean for row in aggregate(table)]
            ax.plot(xs, means, marker="o", label=table.family_id)
            if math.isfinite(table.target):
                ax.axhline(table.target, linestyle="--", linewidth=0.8)
        ax.set_xlabel("log2 n")
        ax.set_ylabel("mean ratio")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format=formats, metadata={"Date": None})
        plt.close(fig)
