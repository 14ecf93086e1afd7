"""Digit streams and exact evaluation of the constrained run length.

The run-length value at n is the largest k such that some window of k
consecutive digits among the first n lies in A_k (0 if none does).  Three
engines compute it:

* ``max_run_naive`` tests every (start, length) window directly against
  the family's membership predicate.  Quadratic, assumption-free, and the
  reference the fast engines are tested against.

* ``max_run_incremental`` needs the family to be factor-closed.  Under
  factor closure the admissible suffix lengths at each position i form a
  contiguous range {0, ..., R_i} with R_i <= R_{i-1} + 1, so R_i can be
  maintained per digit with a bisection over the range (engine
  ``downset``).  The built-in kinds admit O(n) vectorized recurrences
  instead (engine ``auto``):

  - constant-run / alphabet-power: R_i is the distance to the last
    inadmissible digit, a running maximum of masked positions;
  - finite-type: R_i = i - a_i where a_i is the largest start of a
    forbidden-word occurrence that has completed by position i, again a
    running maximum.

* ``max_run_per_start`` needs only prefix closure (the fixed-target kind
  is the main client).  Per window start the admissible extension lengths
  form a contiguous range, so survivors of level t are exactly the starts
  whose length-t window is admissible; levels are processed breadth-first
  and each completed window writes its length at its end position.  For
  random digits the survivor sets decay geometrically, giving near-linear
  work.

Streams are deterministic: the same source parameters always produce the
same digit sequence, regardless of how reads are chunked (random digits
are drawn in fixed internal quanta; see ``_rng``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ._rng import GEN_QUANTUM, QuantumDigitSource
from .errors import ClosureNotVerifiedError, InputError
from .family import (
    AlphabetPower,
    Closure,
    ConstantRun,
    ConstraintFamily,
    CustomPredicate,
    FixedTarget,
    Sft,
)

_POS_CACHE: dict[int, np.ndarray] = {}


def _positions(n: int) -> np.ndarray:
    """Cached [1, 2, ..., n] as int32 (read-only)."""
    arr = _POS_CACHE.get(n)
    if arr is None:
        arr = np.arange(1, n + 1, dtype=np.int32)
        arr.setflags(write=False)
        if len(_POS_CACHE) < 64:
            _POS_CACHE[n] = arr
    return arr


# ---------------------------------------------------------------------------
# streams


class DigitStream:
    """Sequential digit source over {0, ..., base-1}."""

    base: int

    def __init__(self):
        self.position = 0

    def take(self, count: int) -> np.ndarray:
        """Return the next ``count`` digits (int8) and advance."""
        if count < 0:
            raise InputError("count must be nonnegative")
        out = self._produce(count)
        self.position += count
        return out

    def _produce(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def reset(self) -> None:
        self.position = 0

    def stream_id(self) -> str:
        raise NotImplementedError

    @property
    def params(self) -> dict:
        return {"stream": self.stream_id(), "base": self.base}


def next_digits(stream: DigitStream, count: int) -> np.ndarray:
    """Functional alias for ``stream.take(count)``."""
    return stream.take(count)


class SeededRandomStream(DigitStream):
    """I.i.d. uniform digits from PCG64(SeedSequence(seed, spawn_key))."""

    def __init__(self, seed: int, base: int = 2, spawn_key: tuple[int, ...] = ()):
        super().__init__()
        if base < 2:
            raise InputError(f"base must be >= 2, got {base}")
        self.base = base
        self.seed = seed
        self.spawn_key = spawn_key
        self._source = QuantumDigitSource(seed, base, spawn_key)

    def _produce(self, count):
        return self._source.take(count)

    def reset(self):
        super().reset()
        self._source.reset()

    def stream_id(self):
        key = "" if not self.spawn_key else f",key={list(self.spawn_key)}"
        return f"random[seed={self.seed}{key},m={self.base}]"


class RationalStream(DigitStream):
    """Base-m expansion digits of p/q via exact long division.

    The digit at index k is floor(m * frac(m^(k-1) * p/q)); the remainder
    recurrence r -> (r*m) mod q realizes this exactly.  Remainders repeat
    within q steps, so the digit sequence is preperiodic and is served
    from a precomputed (prefix, cycle) pair when q is small.
    """

    _CYCLE_LIMIT = 1 << 20

    def __init__(self, p: int, q: int, base: int = 2):
        super().__init__()
        if base < 2:
            raise InputError(f"base must be >= 2, got {base}")
        if q <= 0 or not 0 <= p < q:
            raise InputError(f"rational stream needs 0 <= p < q, got {p}/{q}")
        self.base = base
        self.p = p
        self.q = q
        if q <= self._CYCLE_LIMIT:
            self._prefix, self._cycle = self._unroll(p, q, base)
        else:
            self._prefix = self._cycle = None
            self._rem = p

    @staticmethod
    def _unroll(p: int, q: int, m: int):
        seen: dict[int, int] = {}
        digits: list[int] = []
        r = p
        while r not in seen:
            seen[r] = len(digits)
            r *= m
            digits.append(r // q)
            r %= q
        start = seen[r]
        return (
            np.array(digits[:start], dtype=np.int8),
            np.array(digits[start:], dtype=np.int8),
        )

    def _produce(self, count):
        if self._cycle is not None:
            idx = np.arange(self.position, self.position + count, dtype=np.int64)
            out = np.empty(count, dtype=np.int8)
            np_pref = len(self._prefix)
            head = idx < np_pref
            out[head] = self._prefix[idx[head]]
            tail = ~head
            out[tail] = self._cycle[(idx[tail] - np_pref) % len(self._cycle)]
            return out
        m, q = self.base, self.q
        r = self._rem
        out = np.empty(count, dtype=np.int8)
        for i in range(count):
            r *= m
            out[i] = r // q
            r %= q
        self._rem = r
        return out

    def reset(self):
        super().reset()
        self._rem = self.p

    def stream_id(self):
        return f"rational[{self.p}/{self.q},m={self.base}]"


class BufferStream(DigitStream):
    """Explicit digit array; reading past the end is an error."""

    def __init__(self, digits: Sequence[int] | np.ndarray, base: int = 2, label: str = "buffer"):
        super().__init__()
        self.base = base
        self.label = label
        arr = np.asarray(digits, dtype=np.int8)
        if arr.size and (arr.min() < 0 or arr.max() >= base):
            raise InputError(f"buffer contains digits outside base {base}")
        self._digits = arr

    def _produce(self, count):
        if self.position + count > len(self._digits):
            raise InputError(
                f"buffer stream exhausted: have {len(self._digits)} digits, "
                f"requested through {self.position + count}"
            )
        return self._digits[self.position : self.position + count].copy()

    def __len__(self):
        return len(self._digits)

    def stream_id(self):
        return f"buffer[{self.label},len={len(self._digits)},m={self.base}]"


class GeneratedStream(DigitStream):
    """Digits produced by a restartable block generator (constructed streams)."""

    def __init__(
        self,
        block_factory: Callable[[], Iterable[np.ndarray]],
        base: int,
        label: str,
        provenance: dict | None = None,
    ):
        super().__init__()
        self.base = base
        self.label = label
        self.provenance = dict(provenance or {})
        self._factory = block_factory
        self._iter = iter(block_factory())
        self._pending: list[np.ndarray] = []
        self._pending_len = 0

    def _produce(self, count):
        while self._pending_len < count:
            block = next(self._iter)  # constructed streams are infinite
            self._pending.append(block)
            self._pending_len += len(block)
        buf = self._pending[0] if len(self._pending) == 1 else np.concatenate(self._pending)
        out = buf[:count].copy()
        rest = buf[count:]
        self._pending = [rest] if rest.size else []
        self._pending_len = rest.size
        return out

    def reset(self):
        super().reset()
        self._iter = iter(self._factory())
        self._pending = []
        self._pending_len = 0

    def stream_id(self):
        return f"generated[{self.label},m={self.base}]"


def read_digit_file(path, base: int) -> np.ndarray:
    """Read a raw digit file: one ASCII digit per byte, newlines allowed."""
    if base > 10:
        raise InputError("digit files support bases up to 10")
    with open(path, "rb") as fh:
        raw = fh.read()
    data = np.frombuffer(raw, dtype=np.uint8)
    data = data[(data != 10) & (data != 13)]  # strip \n, \r
    digits = (data - ord("0")).astype(np.int8)
    if digits.size and (digits.min() < 0 or digits.max() >= base):
        raise InputError(f"{path}: contains characters outside base-{base} digits")
    return digits


def write_digit_file(path, digits: np.ndarray, line_width: int = 120) -> None:
    arr = np.asarray(digits, dtype=np.int8)
    with open(path, "wb") as fh:
        for i in range(0, len(arr), line_width):
            chunk = arr[i : i + line_width]
            fh.write(bytes(chunk + ord("0")))
            fh.write(b"\n")


# ---------------------------------------------------------------------------
# run-length series


@dataclass
class RunLengthSeries:
    """Run-length values on an increasing grid of prefix lengths."""

    n_grid: np.ndarray
    values: np.ndarray
    family_id: str
    stream_id: str

    def __post_init__(self):
        self.n_grid = np.asarray(self.n_grid, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.int64)
        assert np.all(np.diff(self.n_grid) > 0), "grid must be strictly increasing"
        assert np.all(np.diff(self.values) >= 0), "run length must be nondecreasing"
        assert np.all(self.values >= 0) and np.all(self.values <= self.n_grid), (
            "run length must lie in [0, n]"
        )


def _as_grid(n_grid: Sequence[int]) -> np.ndarray:
    grid = np.asarray(list(n_grid), dtype=np.int64)
    if grid.size == 0:
        raise InputError("empty n grid")
    if grid[0] < 1 or np.any(np.diff(grid) <= 0):
        raise InputError("n grid must be strictly increasing and positive")
    return grid


def _get_digits(source, n_max: int) -> np.ndarray:
    if isinstance(source, DigitStream):
        return source.take(n_max)
    arr = np.asarray(source, dtype=np.int8)
    if len(arr) < n_max:
        raise InputError(f"need {n_max} digits, got {len(arr)}")
    return arr


def _source_id(source) -> str:
    if isinstance(source, DigitStream):
        return source.stream_id()
    return f"array[len={len(source)}]"


# ---------------------------------------------------------------------------
# windowed oracle


def max_run_naive(digits, n: int, family: ConstraintFamily) -> int:
    """Evaluate the run length at n by testing every window.

    Makes no closure assumption: for each length k from 1 to n, every
    window of k consecutive digits within the first n is tested until one
    is admissible.  This is the reference oracle for the fast engines.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if n > len(digits):
        raise InputError(f"n={n} exceeds available digits ({len(digits)})")
    dl = [int(d) for d in digits[:n]]
    member = family.contains_window
    best = 0
    for k in range(1, n + 1):
        for i in range(n - k + 1):
            if member(dl, i, k):
                best = k
                break
    return best


# ---------------------------------------------------------------------------
# incremental engine (factor-closed families)

_REFUSAL = (
    "the incremental engine requires a family verified factor-closed "
    "(every factor of an admissible word is admissible); family {fid} has "
    "subword_closed={flag}.  Run verify_closure() first, or use "
    "max_run_naive / max_run_per_start."
)


def _require_factor_closed(family: ConstraintFamily) -> None:
    if family.subword_closed is not Closure.VERIFIED_TRUE:
        raise ClosureNotVerifiedError(
            _REFUSAL.format(fid=family.family_id(), flag=family.subword_closed.value)
        )


def _profile_mask(ok: np.ndarray) -> np.ndarray:
    """Profile for per-digit admissibility: R_i = i - last bad position."""
    n = len(ok)
    pos = _positions(n)
    last_bad = np.maximum.accumulate(np.where(ok, np.int32(0), pos))
    return np.maximum.accumulate(pos - last_bad)


def _profile_sft(digits: np.ndarray, family: Sft) -> np.ndarray:
    n = len(digits)
    pos = _positions(n)
    # a[i] (1-based ends) = largest start of a forbidden occurrence with end <= i
    best_start = np.zeros(n + 1, dtype=np.int32)
    for w in family.forbidden:
        L = len(w)
        if L > n:
            continue
        match = np.ones(n - L + 1, dtype=bool)
        for j, c in enumerate(w):
            match &= digits[j : n - L + 1 + j] == c
        offs = np.flatnonzero(match).astype(np.int64)
        if offs.size:
            ends = offs + L  # 1-based end position
            starts = (offs + 1).astype(np.int32)
            # ends are distinct within one word; across words keep the max
            best_start[ends] = np.maximum(best_start[ends], starts)
    a = np.maximum.accumulate(best_start)[1:]
    return np.maximum.accumulate(pos - a)


def _profile_downset(digits: np.ndarray, family: ConstraintFamily) -> np.ndarray:
    dl = [int(d) for d in digits]
    n = len(dl)
    member = family.contains_window
    out = np.empty(n, dtype=np.int32)
    r = 0
    best = 0
    for i in range(n):
        hi = r + 1 if r < i + 1 else i + 1
        if member(dl, i + 1 - hi, hi):
            r = hi
        else:
            # largest k <= hi-1 with admissible suffix window (contiguous range)
            lo, high = 0, hi - 1
            while lo < high:
                mid = (lo + high + 1) // 2
                if member(dl, i + 1 - mid, mid):
                    lo = mid
                else:
                    high = mid - 1
            r = lo
        if r > best:
            best = r
        out[i] = best
    return out


def run_length_profile(
    digits: np.ndarray, family: ConstraintFamily, engine: str = "auto"
) -> np.ndarray:
    """Run-length values for every prefix length 1..len(digits).

    Requires a factor-closed family.  ``engine='auto'`` picks the
    vectorized kernel for built-in kinds and falls back to the generic
    per-digit bisection (``'downset'``), which works for any verified
    factor-closed family.
    """
    _require_factor_closed(family)
    digits = np.asarray(digits, dtype=np.int8)
    if engine == "downset":
        return _profile_downset(digits, family)
    if engine != "auto":
        raise InputError(f"unknown engine {engine!r}")
    if isinstance(family, ConstantRun):
        return _profile_mask(digits == family.digit)
    if isinstance(family, AlphabetPower):
        return _profile_mask(np.isin(digits, list(family.subset)))
    if isinstance(family, Sft):
        return _profile_sft(digits, family)
    return _profile_downset(digits, family)


def max_run_incremental(
    source, n_grid: Sequence[int], family: ConstraintFamily, engine: str = "auto"
) -> RunLengthSeries:
    """Fast exact run lengths on a grid; refuses non-factor-closed families."""
    _require_factor_closed(family)
    grid = _as_grid(n_grid)
    sid = _source_id(source)
    digits = _get_digits(source, int(grid[-1]))
    profile = run_length_profile(digits[: grid[-1]], family, engine=engine)
    return RunLengthSeries(grid, profile[grid - 1], family.family_id(), sid)


# ---------------------------------------------------------------------------
# per-start engine (prefix-closed families)


def _completed_lengths_fixed_target(digits: np.ndarray, family: FixedTarget) -> np.ndarray:
    """best[e] = longest admissible window ending at position e (1-based)."""
    n = len(digits)
    best = np.zeros(n + 1, dtype=np.int32)
    target = family.target
    y0 = target.ensure(1)[0]
    starts = np.flatnonzero(digits == y0).astype(np.int64)
    t = 1
    while starts.size:
        best[starts + t] = t
        nxt = starts[starts + t < n]
        if not nxt.size:
            break
        t += 1
        y = target.ensure(t)[t - 1]
        starts = nxt[digits[nxt + t - 1] == y]
    return best


def _completed_lengths_generic(digits: np.ndarray, family: ConstraintFamily) -> np.ndarray:
    dl = [int(d) for d in digits]
    n = len(dl)
    member = family.contains_window
    best = np.zeros(n + 1, dtype=np.int32)
    survivors = [i for i in range(n) if member(dl, i, 1)]
    t = 1
    while survivors:
        for i in survivors:
            best[i + t] = t
        t += 1
        survivors = [i for i in survivors if i + t <= n and member(dl, i, t)]
    return best


def max_run_per_start(
    source, n_grid: Sequence[int], family: ConstraintFamily
) -> RunLengthSeries:
    """Exact run lengths for prefix-closed families, extended per window start.

    Prefix closure makes the admissible lengths at each start contiguous,
    so level t survivors are exactly the starts whose length-t window is
    admissible.  Fixed-target families use a vectorized survivor filter.
    """
    if family.prefix_closed is not Closure.VERIFIED_TRUE:
        raise ClosureNotVerifiedError(
            f"the per-start engine requires a family verified prefix-closed; "
            f"family {family.family_id()} has prefix_closed="
            f"{family.prefix_closed.value}.  Run verify_closure() first."
        )
    grid = _as_grid(n_grid)
    sid = _source_id(source)
    n_max = int(grid[-1])
    digits = _get_digits(source, n_max)[:n_max]
    digits = np.asarray(digits, dtype=np.int8)
    if isinstance(family, FixedTarget):
        best = _completed_lengths_fixed_target(digits, family)
    else:
        best = _completed_lengths_generic(digits, family)
    profile = np.maximum.accumulate(best[1:])
    return RunLengthSeries(grid, profile[grid - 1], family.family_id(), sid)


def scan_series(
    source, n_grid: Sequence[int], family: ConstraintFamily
) -> RunLengthSeries:
    """Route to the fastest exact engine the family's closure flags allow."""
    if family.subword_closed is Closure.VERIFIED_TRUE:
        return max_run_incremental(source, n_grid, family)
    if family.prefix_closed is Closure.VERIFIED_TRUE:
        return max_run_per_start(source, n_grid, family)
    raise ClosureNotVerifiedError(
        f"no exact engine available for {family.family_id()}: neither factor "
        "nor prefix closure is verified.  Run verify_closure() or use "
        "max_run_naive."
    )


# ---------------------------------------------------------------------------
# classic wrappers


def r_n(digits, n: int, digit: int = 1, base: int = 2) -> int:
    """Longest run of ``digit`` within the first n digits."""
    series = max_run_incremental(digits, [n], ConstantRun(digit=digit, base=base))
    return int(series.values[0])


def R_n_p(digits, n: int, subset: Iterable[int], base: int) -> int:
    """Longest window over the sub-alphabet ``subset`` within the first n digits."""
    series = max_run_incremental(
        digits, [n], AlphabetPower(subset=frozenset(subset), base=base)
    )
    return int(series.values[0])


def r_n_target(digits, n: int, target, base: int = 2) -> int:
    """Longest target-prefix occurrence within the first n digits.

    ``target`` may be a FixedTarget family, a TargetDigits, or a digit
    sequence (padded with zeros).
    """
    from .family import TargetDigits

    if isinstance(target, FixedTarget):
        fam = target
    elif isinstance(target, TargetDigits):
        fam = FixedTarget(target=target, base=base)
    else:
        fam = FixedTarget(target=TargetDigits.from_digits(target, base), base=base)
    series = max_run_per_start(digits, [n], fam)
    return int(series.values[0])
