"""Exceptional digit streams, bounded-run streams, and the Moran bound.

``build_exceptional_stream`` realizes points whose run length grows
without bound yet is eventually negligible against a chosen gauge
sequence phi.  The stream is a concatenation of blocks, one per index k:
with m_k = floor(sqrt(phi(k))) and e_k = floor(s * m_k), block k is

    u v_1 u v_2 ... u v_{m_k} xi

where u is a blocker of length m_k (no admissible extension by e_k
digits; see census.find_blocker), the v_i are free filler words of length
e_k, and xi is an admissible word of length m_k.  The block has length
(m_k + e_k) * m_k + m_k.  The blockers prevent admissible windows from
growing past about three repetition periods, while each xi plants an
admissible window of length m_k, so for every n inside block k

    m_{k-1}  <=  run_length(n)  <=  3 * (m_k + e_k).

``verify_exceptional`` re-derives this sandwich empirically for every
prefix length up to N and fails hard on any violation.

Blockers are only guaranteed to exist for large lengths, so leading
indices whose m_k admits no blocker are skipped; the first usable index
k0 is recorded in the stream provenance.  Repeated (m, e) blocks are
cached, which makes generation O(total digits).

``build_bounded_run_stream`` concatenates words drawn uniformly from the
complement of A_N; for factor-closed families every prefix then has run
length below 2N, and the emitted set of streams carries similarity
dimension at least (N-1)/N once the complement fills half of the length-N
words.

``dim_lower_bound`` evaluates the homogeneous-Moran-set bound

    f(k) = log(n_1 ... n_k) / -log(c_1 ... c_{k+1} * n_{k+1})

in log space and reports the minimum over the last half of the computed
range as a finite-sample stand-in for the liminf.  ``derive_moran_params``
emits the (n_k, c_k = 1/2) sequences encoding an exceptional stream: n_k
is 1 on blocker and xi positions and 2 on filler positions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from . import census
from ._rng import seeded_generator
from .errors import (
    BlockerNotFoundError,
    ConstructionError,
    InputError,
    SandwichViolationError,
)
from .family import Closure, ConstraintFamily
from .scanner import GeneratedStream, run_length_profile

# ---------------------------------------------------------------------------
# gauge sequences


@dataclass(frozen=True)
class PhiRule:
    """Named nondecreasing positive gauge sequence phi(k), k >= 1."""

    name: str
    fn: Callable[[int], float]

    def __call__(self, k: int) -> float:
        return self.fn(k)

    def values(self, ks: np.ndarray) -> np.ndarray:
        return np.array([self.fn(int(k)) for k in ks], dtype=np.float64)


def phi_log2() -> PhiRule:
    """phi(k) = log2(k+1)."""
    return PhiRule("log2", lambda k: math.log2(k + 1))


def phi_pow(alpha: float) -> PhiRule:
    """phi(k) = k**alpha for alpha > 0."""
    if alpha <= 0:
        raise InputError(f"power gauge needs alpha > 0, got {alpha}")
    return PhiRule(f"pow:{alpha:g}", lambda k, a=float(alpha): float(k) ** a)


def phi_table(values: Sequence[float]) -> PhiRule:
    vals = [float(v) for v in values]
    if not vals:
        raise InputError("empty phi table")

    def fn(k: int) -> float:
        if k < 1 or k > len(vals):
            raise InputError(f"phi table has {len(vals)} entries, asked for k={k}")
        return vals[k - 1]

    return PhiRule(f"table:{len(vals)}", fn)


@dataclass
class PhiCheckReport:
    """Finite-sample check of the gauge hypotheses on k <= K."""

    name: str
    K: int
    positive: bool
    nondecreasing: bool
    diverging: bool
    ratio_final: float
    ratio_trend_decreasing: bool
    failing_k: int | None = None
    finite_sample: bool = True
    ratio_threshold: float = 0.05

    @property
    def passed(self) -> bool:
        return (
            self.positive
            and self.nondecreasing
            and self.diverging
            and self.ratio_final <= self.ratio_threshold
            and self.ratio_trend_decreasing
        )

    def failures(self) -> list[str]:
        out = []
        if not self.positive:
            out.append(f"not positive (k={self.failing_k})")
        if not self.nondecreasing:
            out.append(f"not nondecreasing (k={self.failing_k})")
        if not self.diverging:
            out.append("no divergence trend")
        if self.ratio_final > self.ratio_threshold:
            out.append(
                f"phi(K)/sum ratio {self.ratio_final:.3g} above "
                f"{self.ratio_threshold}"
            )
        if not self.ratio_trend_decreasing:
            out.append("phi(k)/sum ratio not trending down")
        return out


def phi_check(phi: PhiRule, K: int, ratio_threshold: float = 0.05) -> PhiCheckReport:
    """Verify positivity, monotonicity, divergence trend, and the
    vanishing-ratio condition phi(k)/(phi(1)+...+phi(k-1)) -> 0 on k <= K.

    This is a finite-sample check and is flagged as such: passing it does
    not prove the asymptotic hypotheses.
    """
    if K < 3:
        raise InputError(f"K must be >= 3, got {K}")
    vals = phi.values(np.arange(1, K + 1))
    failing = None
    positive = bool(np.all(vals > 0))
    if not positive:
        failing = int(np.flatnonzero(vals <= 0)[0]) + 1
    nondecreasing = bool(np.all(np.diff(vals) >= 0))
    if positive and not nondecreasing:
        failing = int(np.flatnonzero(np.diff(vals) < 0)[0]) + 2
    diverging = bool(vals[-1] >= max(2.0 * vals[0], vals[0] + 1.0))
    csum = np.cumsum(vals)
    ratios = vals[2:] / csum[1:-1]  # phi(k)/sum_{i<k} phi(i), k = 3..K
    ratio_final = float(ratios[-1])
    checkpoints = [len(ratios) - 1, len(ratios) // 2, len(ratios) // 4]
    trend = ratios[checkpoints[0]] <= ratios[checkpoints[1]] <= ratios[checkpoints[2]]
    return PhiCheckReport(
        name=phi.name,
        K=K,
        positive=positive,
        nondecreasing=nondecreasing,
        diverging=diverging,
        ratio_final=ratio_final,
        ratio_trend_decreasing=bool(trend),
        failing_k=failing,
        ratio_threshold=ratio_threshold,
    )


# ---------------------------------------------------------------------------
# exceptional streams


@dataclass
class ExceptionalConfig:
    """Parameters of the exceptional-stream construction.

    ``family`` must be verified factor-closed with entropy exponent tau
    satisfying (1+s)*tau < 1; ``s`` is kept as an exact Fraction so the
    filler length floor(s*m) never suffers float rounding.  ``v_rule`` is
    ``"zeros"`` (deterministic, repeated blocks are cached) or
    ``("random", seed)`` to sample fillers and exercise the whole
    constructed set.
    """

    family: ConstraintFamily
    s: Fraction
    phi: PhiRule
    v_rule: str | tuple = "zeros"
    xi_rule: str = "lexmin"
    blocker_budget: int = census.DEFAULT_BUDGET
    max_warmup: int = 4096
    tau: float | None = field(default=None)

    def __post_init__(self):
        self.s = Fraction(self.s)
        if self.s <= 0:
            raise InputError(f"s must be positive, got {self.s}")
        if self.family.subword_closed is not Closure.VERIFIED_TRUE:
            raise InputError(
                "exceptional construction requires a family verified "
                f"factor-closed; got {self.family.family_id()} with "
                f"subword_closed={self.family.subword_closed.value}"
            )
        if self.xi_rule != "lexmin":
            raise InputError(f"unknown xi_rule {self.xi_rule!r}")
        if isinstance(self.v_rule, tuple):
            if len(self.v_rule) != 2 or self.v_rule[0] != "random":
                raise InputError(f"v_rule must be 'zeros' or ('random', seed)")
        elif self.v_rule != "zeros":
            raise InputError(f"v_rule must be 'zeros' or ('random', seed)")
        if self.tau is None:
            self.tau = census.exact_tau(self.family)
        if self.tau is not None and (1.0 + float(self.s)) * self.tau >= 1.0:
            raise InputError(
                f"need (1+s)*tau < 1; got s={self.s}, tau={self.tau:.6f} "
                f"for {self.family.family_id()}"
            )

    def m_of(self, k: int) -> int:
        return int(math.floor(math.sqrt(self.phi(k))))

    def e_of(self, m: int) -> int:
        return (self.s.numerator * m) // self.s.denominator


@dataclass
class BlockPlan:
    k: int
    m: int
    e: int
    u: tuple[int, ...]
    xi: tuple[int, ...]
    length: int
    start: int  # 1-based position of the block's first digit


class ExceptionalStream(GeneratedStream):
    """Constructed digit stream realizing the exceptional behavior."""

    def __init__(self, config: ExceptionalConfig):
        self.config = config
        self._blockers: dict[int, tuple[int, ...]] = {}
        self._xis: dict[int, tuple[int, ...]] = {}
        self._block_cache: dict[tuple[int, int], np.ndarray] = {}
        self.k0 = self._find_k0()
        super().__init__(
            block_factory=self._blocks,
            base=config.family.base,
            label=f"exceptional[{config.family.family_id()},s={config.s},"
            f"phi={config.phi.name}]",
        )
        self.provenance = {
            "family": config.family.family_id(),
            "s": str(config.s),
            "phi": config.phi.name,
            "v_rule": list(config.v_rule) if isinstance(config.v_rule, tuple) else config.v_rule,
            "xi_rule": config.xi_rule,
            "k0": self.k0,
        }

    def _find_k0(self) -> int:
        cfg = self.config
        for k in range(1, cfg.max_warmup + 1):
            m = cfg.m_of(k)
            if m < 1:
                continue
            try:
                self._blocker(m)
                return k
            except BlockerNotFoundError:
                continue
        raise ConstructionError(
            f"no blocker found for any k <= {cfg.max_warmup}; the family may "
            "have entropy exponent 1 or phi may grow too slowly"
        )

    def _blocker(self, m: int) -> tuple[int, ...]:
        u = self._blockers.get(m)
        if u is None:
            u = census.find_blocker(
                self.config.family, m, self.config.s, self.config.blocker_budget
            ).word.digits
            self._blockers[m] = u
        return u

    def _xi(self, m: int) -> tuple[int, ...]:
        xi = self._xis.get(m)
        if xi is None:
            xi = census.lex_min_member(self.config.family, m)
            self._xis[m] = xi
        return xi

    def schedule(self, n_digits: int) -> list[BlockPlan]:
        """Block plans covering at least ``n_digits`` positions."""
        plans: list[BlockPlan] = []
        pos = 0
        k = self.k0
        cfg = self.config
        while pos < n_digits:
            m = cfg.m_of(k)
            e = cfg.e_of(m)
            try:
                u = self._blocker(m)
            except BlockerNotFoundError as exc:
                raise ConstructionError(
                    f"blocker unavailable at block k={k} (m={m}): {exc}"
                ) from exc
            xi = self._xi(m)
            length = (m + e) * m + m
            plans.append(BlockPlan(k, m, e, u, xi, length, pos + 1))
            pos += length
            k += 1
        return plans

    def _block_digits(self, plan: BlockPlan, rng) -> np.ndarray:
        key = (plan.m, plan.e)
        if rng is None:
            cached = self._block_cache.get(key)
            if cached is not None:
                return cached
        u = np.array(plan.u, dtype=np.int8)
        xi = np.array(plan.xi, dtype=np.int8)
        parts = []
        for _ in range(plan.m):
            parts.append(u)
            if plan.e:
                if rng is None:
                    parts.append(np.zeros(plan.e, dtype=np.int8))
                else:
                    parts.append(
                        rng.integers(0, self.base, size=plan.e, dtype=np.int8)
                    )
        parts.append(xi)
        block = np.concatenate(parts)
        assert len(block) == plan.length
        if rng is None:
            self._block_cache[key] = block
        return block

    def _blocks(self) -> Iterator[np.ndarray]:
        cfg = self.config
        rng = None
        if isinstance(cfg.v_rule, tuple):
            rng = seeded_generator(cfg.v_rule[1])
        k = self.k0
        pos = 0
        while True:
            m = cfg.m_of(k)
            e = cfg.e_of(m)
            u = self._blocker(m)
            xi = self._xi(m)
            length = (m + e) * m + m
            yield self._block_digits(BlockPlan(k, m, e, u, xi, length, pos + 1), rng)
            pos += length
            k += 1


def build_exceptional_stream(config: ExceptionalConfig) -> ExceptionalStream:
    """Construct the deterministic exceptional stream for ``config``."""
    return ExceptionalStream(config)


@dataclass
class SandwichReport:
    """Per-block verification of the run-length sandwich."""

    family_id: str
    s: Fraction
    phi_name: str
    k0: int
    N: int
    rows: list[dict]
    final_ell: int
    passed: bool
    first_violation: dict | None = None

    CSV_COLUMNS = (
        "k",
        "n_start",
        "n_end",
        "min_ell",
        "max_ell",
        "bound_lo",
        "bound_hi",
        "max_ratio",
    )

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([row[c] for c in self.CSV_COLUMNS])


def verify_exceptional(
    config: ExceptionalConfig, N: int, raise_on_violation: bool = True
) -> SandwichReport:
    """Scan the constructed stream and check the sandwich on every prefix.

    For each prefix length n within block k the run length must lie in
    [m_{k-1}, 3*(m_k + e_k)]; the lower bound is asserted only past the
    first block (nothing admissible is guaranteed planted before the
    first xi completes).  Violations raise SandwichViolationError, since
    they indicate a construction bug rather than bad input.
    """
    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    stream = build_exceptional_stream(config)
    plans = stream.schedule(N)
    digits = stream.take(N)
    profile = run_length_profile(digits, config.family)

    starts = np.array([p.start - 1 for p in plans], dtype=np.int64)  # 0-based
    ends = np.minimum(starts + np.array([p.length for p in plans]), N)
    ms = np.array([p.m for p in plans], dtype=np.int64)
    es = np.array([p.e for p in plans], dtype=np.int64)
    max_ell = np.maximum.reduceat(profile, starts)
    min_ell = np.minimum.reduceat(profile, starts)
    ratio = _phi_over_positions(config.phi, N)
    np.divide(profile, ratio, out=ratio)
    max_ratio = np.maximum.reduceat(ratio, starts)
    del ratio

    bound_hi = 3 * (ms + es)
    bound_lo = np.concatenate([[0], ms[:-1]])  # m_{k-1}; no bound on first block
    rows = []
    passed = True
    first_violation = None
    for j, plan in enumerate(plans):
        ok_hi = bool(max_ell[j] <= bound_hi[j])
        ok_lo = bool(j == 0 or min_ell[j] >= bound_lo[j])
        row = {
            "k": plan.k,
            "n_start": int(starts[j] + 1),
            "n_end": int(ends[j]),
            "min_ell": int(min_ell[j]),
            "max_ell": int(max_ell[j]),
            "bound_lo": int(bound_lo[j]),
            "bound_hi": int(bound_hi[j]),
            "max_ratio": float(max_ratio[j]),
        }
        rows.append(row)
        if not (ok_hi and ok_lo):
            passed = False
            if first_violation is None:
                first_violation = row
    report = SandwichReport(
        family_id=config.family.family_id(),
        s=config.s,
        phi_name=config.phi.name,
        k0=stream.k0,
        N=N,
        rows=rows,
        final_ell=int(profile[-1]),
        passed=passed,
        first_violation=first_violation,
    )
    if not passed and raise_on_violation:
        raise SandwichViolationError(
            f"sandwich violated in block k={first_violation['k']} "
            f"(n in [{first_violation['n_start']}, {first_violation['n_end']}]): "
            f"ell range [{first_violation['min_ell']}, {first_violation['max_ell']}] "
            f"vs bounds [{first_violation['bound_lo']}, {first_violation['bound_hi']}]"
        )
    return report


def _phi_over_positions(phi: PhiRule, n: int) -> np.ndarray:
    """phi evaluated at 1..n as an owned float64 array."""
    pos = np.arange(1, n + 1, dtype=np.float64)
    if phi.name == "log2":
        return np.log2(pos + 1.0, out=pos)
    if phi.name.startswith("pow:"):
        alpha = float(phi.name.split(":", 1)[1])
        return np.power(pos, alpha, out=pos)
    return phi.values(np.arange(1, n + 1))


# ---------------------------------------------------------------------------
# bounded-run streams


@dataclass
class BoundedRunReport:
    family_id: str
    word_len: int
    admissible_count: int
    complement_count: int
    dim_floor: Fraction | None
    similarity_dim: float
    seed: int

    @property
    def run_bound(self) -> int:
        """Strict upper bound on every prefix run length: 2 * word_len."""
        return 2 * self.word_len


def build_bounded_run_stream(
    family: ConstraintFamily, N: int, choice_seed: int
) -> tuple[GeneratedStream, BoundedRunReport]:
    """Concatenate words drawn uniformly from the complement of A_N.

    Factor closure guarantees every window of length 2N spanning the
    stream contains one full non-admissible word, so run lengths stay
    below 2N.  The similarity dimension of the emitted self-similar set is
    log_m(complement)/N, at least (N-1)/N once the complement holds half
    of all length-N words; that floor is reported exactly when it applies.
    """
    if family.subword_closed is not Closure.VERIFIED_TRUE:
        raise InputError(
            "bounded-run construction requires a family verified factor-closed"
        )
    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    m = family.base
    total = m**N
    count = census.count_words(family, N)
    complement = total - count
    if complement == 0:
        raise ConstructionError(
            f"A_{N} is all of the length-{N} words for {family.family_id()}; "
            f"choose a larger N (one exists whenever the entropy exponent "
            "is below 1)"
        )
    if total > (1 << 22):
        raise InputError(
            f"complement enumeration over {m}^{N} words is too large; "
            "use a smaller N"
        )
    words = np.array(
        [
            w
            for w in itertools.product(range(m), repeat=N)
            if not family.contains_digits(w)
        ],
        dtype=np.int8,
    ).reshape(complement, N)

    words_per_block = max(1, (1 << 14) // N)

    def blocks():
        rng = seeded_generator(choice_seed)
        while True:
            idx = rng.integers(0, complement, size=words_per_block)
            yield words[idx].reshape(-1)

    stream = GeneratedStream(
        blocks,
        base=m,
        label=f"bounded_run[{family.family_id()},N={N},seed={choice_seed}]",
        provenance={
            "family": family.family_id(),
            "word_len": N,
            "seed": choice_seed,
            "complement_count": complement,
        },
    )
    report = BoundedRunReport(
        family_id=family.family_id(),
        word_len=N,
        admissible_count=count,
        complement_count=complement,
        dim_floor=Fraction(N - 1, N) if complement >= m ** (N - 1) else None,
        similarity_dim=math.log(complement) / (N * math.log(m)),
        seed=choice_seed,
    )
    return stream, report


# ---------------------------------------------------------------------------
# homogeneous Moran dimension bound


@dataclass
class MoranParams:
    """Branch counts and contraction ratios of a homogeneous Moran set.

    Uses the relaxed admissibility conditions: n_k >= 1, sup c_k < 1 and
    n_k * c_k <= 1.  Arrays must cover indices 1..K+1 (the bound at depth
    k looks one level ahead).
    """

    n_seq: np.ndarray
    c_seq: np.ndarray
    K: int

    def __post_init__(self):
        self.n_seq = np.asarray(self.n_seq, dtype=np.int64)
        self.c_seq = np.asarray(self.c_seq, dtype=np.float64)
        if self.K < 2:
            raise InputError(f"K must be >= 2, got {self.K}")
        if len(self.n_seq) < self.K + 1 or len(self.c_seq) < self.K + 1:
            raise InputError("n_seq and c_seq must cover indices 1..K+1")
        n = self.n_seq[: self.K + 1]
        c = self.c_seq[: self.K + 1]
        if np.any(n < 1):
            raise InputError("branch counts must satisfy n_k >= 1")
        if np.any(c <= 0) or c.max() >= 1:
            raise InputError("ratios must satisfy 0 < c_k and sup c_k < 1")
        if np.any(n * c > 1.0 + 1e-12):
            raise InputError("admissibility requires n_k * c_k <= 1")

    @classmethod
    def constant(cls, n: int, c: float, K: int) -> "MoranParams":
        return cls(np.full(K + 1, n), np.full(K + 1, c), K)


@dataclass
class MoranBound:
    f: np.ndarray  # f(k) for k = 1..K
    K: int
    tail_estimate: float  # min of f over the last half; finite-sample liminf proxy
    tail_window: tuple[int, int]


def dim_lower_bound(params: MoranParams) -> MoranBound:
    """Evaluate f(k) = log(n_1...n_k) / -log(c_1...c_{k+1} n_{k+1}).

    Products are accumulated in log space so depth 10^5+ cannot overflow;
    the reported ``tail_estimate`` is the minimum over k in [K/2, K] and
    is only a finite-sample proxy for the liminf.
    """
    K = params.K
    log_n = np.log(params.n_seq[: K + 1].astype(np.float64))
    log_c = np.log(params.c_seq[: K + 1])
    num = np.cumsum(log_n)[:K]  # sum_{i<=k} log n_i, k = 1..K
    cum_c = np.cumsum(log_c)  # sum_{i<=k+1} log c_i at index k
    den = -(cum_c[1 : K + 1] + log_n[1 : K + 1])
    if np.any(den <= 0):
        raise InputError("degenerate ratios: -log(c_1...c_{k+1} n_{k+1}) <= 0")
    f = num / den
    lo = K // 2
    tail = float(f[lo - 1 :].min())
    return MoranBound(f=f, K=K, tail_estimate=tail, tail_window=(lo, K))


def derive_moran_params(config: ExceptionalConfig, K: int) -> MoranParams:
    """Moran parameters encoding the exceptional stream, truncated at K digits.

    n_k is 1 at blocker and xi positions, 2 at filler positions; all
    contraction ratios are 1/2 (binary digits only).
    """
    if config.family.base != 2:
        raise InputError(
            "Moran parameters of the construction are defined for base-2 "
            f"families; got base {config.family.base}"
        )
    if K < 2:
        raise InputError(f"K must be >= 2, got {K}")
    stream = build_exceptional_stream(config)
    plans = stream.schedule(K + 1)
    n_seq = np.empty(K + 1, dtype=np.int64)
    pos = 0
    for plan in plans:
        piece = ([1] * plan.m + [2] * plan.e) * plan.m + [1] * plan.m
        take = min(plan.length, K + 1 - pos)
        n_seq[pos : pos + take] = piece[:take]
        pos += take
        if pos >= K + 1:
            break
    return MoranParams(n_seq=n_seq, c_seq=np.full(K + 1, 0.5), K=K)
