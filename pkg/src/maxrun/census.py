"""Exact word counts, entropy-rate estimates, and blocker-word search.

Counting is exact (Python big integers).  Finite-type families are
counted with a transfer matrix over the de Bruijn graph of admissible
(M-1)-grams, where M is the longest forbidden word: admissible words of
length k >= M-1 correspond to walks with k-M+1 edges, so the count is
1^T T^(k-M+1) 1.  Tables are produced by iterating the vector recurrence;
isolated counts can also be taken via binary matrix powers, and the two
routes are interchangeable.

The entropy exponent tau is log_m |A_k| / k.  For finite-type families it
converges to the base-m log of the Perron root of the transfer matrix,
computed here by power iteration with an identity shift (the shift makes
the dominant eigenvalue strictly dominant even for periodic graphs).

A blocker of length n (for slack factor s > 0) is a word u none of whose
extensions by floor(s*n) digits is admissible; blockers are what force
run lengths to stay small in the exceptional-stream construction.  They
exist for all large n whenever (1+s) tau < 1.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    BlockerNotFoundError,
    BudgetExceededError,
    CountUnavailableError,
    EmptyFamilyError,
    InputError,
)
from .family import (
    AlphabetPower,
    Closure,
    ConstantRun,
    ConstraintFamily,
    CustomPredicate,
    FixedTarget,
    Sft,
    Word,
)

DEFAULT_BUDGET = 1 << 22


# ---------------------------------------------------------------------------
# finite-type transfer machinery


@dataclass(frozen=True)
class SftGraph:
    """De Bruijn graph of admissible (M-1)-grams for a finite-type family."""

    width: int
    states: tuple[tuple[int, ...], ...]
    # edges[s] = tuple of (digit, target-state index)
    edges: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def size(self) -> int:
        return len(self.states)

    def matrix(self) -> list[list[int]]:
        t = [[0] * self.size for _ in range(self.size)]
        for s, outs in enumerate(self.edges):
            for _, dst in outs:
                t[s][dst] += 1
        return t

    def has_cycle(self) -> bool:
        color = [0] * self.size  # 0 white, 1 on stack, 2 done
        for root in range(self.size):
            if color[root]:
                continue
            stack: list[tuple[int, int]] = [(root, 0)]
            color[root] = 1
            while stack:
                node, idx = stack[-1]
                if idx < len(self.edges[node]):
                    stack[-1] = (node, idx + 1)
                    nxt = self.edges[node][idx][1]
                    if color[nxt] == 1:
                        return True
                    if color[nxt] == 0:
                        color[nxt] = 1
                        stack.append((nxt, 0))
                else:
                    color[node] = 2
                    stack.pop()
        return False


@functools.lru_cache(maxsize=64)
def sft_graph(family: Sft) -> SftGraph:
    m = family.base
    width = max(family.max_forbidden_len - 1, 0)
    states = [
        w
        for w in itertools.product(range(m), repeat=width)
        if family.contains_digits(w)
    ]
    index = {w: i for i, w in enumerate(states)}
    fset = family._fset
    lens = family._lens
    edges = []
    for s in states:
        outs = []
        for c in range(m):
            u = s + (c,)
            # s is admissible, so only factors ending at the new digit matter
            bad = any(len(u) >= L and u[-L:] in fset for L in lens)
            if bad:
                continue
            t = u[1:]
            if t in index:
                outs.append((c, index[t]))
        edges.append(tuple(outs))
    return SftGraph(width, tuple(states), tuple(edges))


def _mat_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    n = len(a)
    bt = list(zip(*b))
    return [[sum(x * y for x, y in zip(row, col)) for col in bt] for row in a]


def _mat_pow(a: list[list[int]], e: int) -> list[list[int]]:
    n = len(a)
    result = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    base = a
    while e:
        if e & 1:
            result = _mat_mul(result, base)
        base = _mat_mul(base, base)
        e >>= 1
    return result


def _sft_count_matrix_power(family: Sft, k: int) -> int:
    graph = sft_graph(family)
    if k < graph.width:
        return sum(
            1
            for w in itertools.product(range(family.base), repeat=k)
            if family.contains_digits(w)
        )
    if graph.size == 0:
        return 0
    power = _mat_pow(graph.matrix(), k - graph.width)
    return sum(sum(row) for row in power)


def _sft_count_sweep(family: Sft, k_lo: int, k_hi: int) -> dict[int, int]:
    """Exact counts for every k in [k_lo, k_hi] via the vector recurrence."""
    graph = sft_graph(family)
    counts: dict[int, int] = {}
    small_hi = min(k_hi, graph.width - 1)
    for k in range(k_lo, small_hi + 1):
        counts[k] = sum(
            1
            for w in itertools.product(range(family.base), repeat=k)
            if family.contains_digits(w)
        )
    if k_hi < graph.width:
        return counts
    v = [1] * graph.size
    k = graph.width
    if k >= k_lo:
        counts[k] = sum(v)
    while k < k_hi:
        nxt = [0] * graph.size
        for s, outs in enumerate(graph.edges):
            vs = v[s]
            if vs:
                for _, dst in outs:
                    nxt[dst] += vs
        v = nxt
        k += 1
        if k >= k_lo:
            counts[k] = sum(v)
    return counts


# ---------------------------------------------------------------------------
# counting


def count_words(
    family: ConstraintFamily,
    k: int,
    budget: int = DEFAULT_BUDGET,
    method: str = "auto",
) -> int:
    """Exact |A_k|.

    ``method`` is ``'auto'`` (closed form / transfer matrix / enumeration
    as appropriate), ``'matrix'`` (finite-type only, binary matrix power)
    or ``'enumerate'`` (walk all m^k words; budget-limited).
    """
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    if method == "enumerate":
        return _count_enumerate(family, k, budget)
    if method == "matrix":
        if not isinstance(family, Sft):
            raise InputError("matrix counting applies to finite-type families only")
        return _sft_count_matrix_power(family, k)
    if method != "auto":
        raise InputError(f"unknown method {method!r}")
    if isinstance(family, (ConstantRun, FixedTarget)):
        return 1
    if isinstance(family, AlphabetPower):
        return len(family.subset) ** k
    if isinstance(family, Sft):
        return _sft_count_matrix_power(family, k)
    return _count_enumerate(family, k, budget)


def _count_enumerate(family: ConstraintFamily, k: int, budget: int) -> int:
    m = family.base
    if family.prefix_closed is Closure.VERIFIED_TRUE:
        # DFS over admissible prefixes; sound because of prefix closure
        tested = 0
        count = 0
        stack: list[tuple[int, ...]] = [()]
        while stack:
            w = stack.pop()
            if len(w) == k:
                count += 1
                continue
            for c in range(m):
                ext = w + (c,)
                tested += 1
                if tested > budget:
                    raise CountUnavailableError(
                        f"enumeration budget {budget} exceeded at k={k} "
                        f"for {family.family_id()}"
                    )
                if family.contains_digits(ext):
                    stack.append(ext)
        return count
    if m**k > budget:
        raise CountUnavailableError(
            f"enumeration of {m}^{k} words exceeds budget {budget} "
            f"for {family.family_id()}"
        )
    return sum(
        1 for w in itertools.product(range(m), repeat=k) if family.contains_digits(w)
    )


@dataclass
class CountTable:
    family_id: str
    base: int
    counts: dict[int, int]
    K: int
    partial: bool = False

    def tau_sequence(self) -> np.ndarray:
        """log_m |A_k| / k for k = 1..K (NaN where the count is missing)."""
        out = np.full(self.K, np.nan)
        logm = math.log(self.base)
        for k, c in self.counts.items():
            if c > 0:
                out[k - 1] = math.log(c) / (k * logm)
            elif c == 0:
                out[k - 1] = -math.inf
        return out


def count_table(
    family: ConstraintFamily, K: int, budget: int = DEFAULT_BUDGET
) -> CountTable:
    """Exact counts for k = 1..K; stops early if the budget runs out."""
    if K < 1:
        raise InputError(f"K must be >= 1, got {K}")
    if isinstance(family, (ConstantRun, FixedTarget)):
        return CountTable(family.family_id(), family.base, {k: 1 for k in range(1, K + 1)}, K)
    if isinstance(family, AlphabetPower):
        p = len(family.subset)
        return CountTable(
            family.family_id(), family.base, {k: p**k for k in range(1, K + 1)}, K
        )
    if isinstance(family, Sft):
        return CountTable(
            family.family_id(), family.base, _sft_count_sweep(family, 1, K), K
        )
    counts: dict[int, int] = {}
    partial = False
    for k in range(1, K + 1):
        try:
            counts[k] = _count_enumerate(family, k, budget)
        except CountUnavailableError:
            partial = True
            break
    return CountTable(family.family_id(), family.base, counts, K, partial=partial)


# ---------------------------------------------------------------------------
# entropy


def perron_root(matrix: list[list[int]], rel_tol: float = 1e-12) -> float:
    """Dominant eigenvalue of a nonnegative integer matrix.

    Power iteration on (T + I): shifting by the identity moves every
    eigenvalue right by one, which breaks the periodic-graph ties that
    stall plain power iteration, and leaves the Perron vector unchanged.
    """
    size = len(matrix)
    if size == 0:
        return 0.0
    a = np.asarray(matrix, dtype=np.float64) + np.eye(size)
    v = np.ones(size)
    lam = 0.0
    stable = 0
    for _ in range(200_000):
        w = a @ v
        total = w.sum()
        if total == 0.0:
            return 0.0  # no outgoing walks at all
        new_lam = total / v.sum()
        w /= total
        if abs(new_lam - lam) <= rel_tol * abs(new_lam):
            stable += 1
            if stable >= 3:
                v = w
                lam = new_lam
                break
        else:
            stable = 0
        v = w
        lam = new_lam
    return float(lam - 1.0)


@dataclass
class EntropyEstimate:
    family_id: str
    base: int
    K: int
    tau_sequence: np.ndarray
    tau_hat: float
    mode: str  # "limit" for built-ins, "limsup" for custom rules
    tau_perron: float | None = None
    perron: float | None = None
    partial: bool = False


def entropy_estimate(
    family: ConstraintFamily, K: int, budget: int = DEFAULT_BUDGET
) -> EntropyEstimate:
    """tau_k = log_m |A_k| / k for k <= K, plus the Perron value for
    finite-type families (power iteration, relative tolerance 1e-12)."""
    table = count_table(family, K, budget)
    seq = table.tau_sequence()
    available = np.flatnonzero(~np.isnan(seq))
    if available.size == 0:
        raise CountUnavailableError(
            f"no counts available for {family.family_id()} up to K={K}"
        )
    tau_hat = float(seq[available[-1]])
    mode = "limsup" if isinstance(family, CustomPredicate) else "limit"
    est = EntropyEstimate(
        family_id=family.family_id(),
        base=family.base,
        K=K,
        tau_sequence=seq,
        tau_hat=tau_hat,
        mode=mode,
        partial=table.partial,
    )
    if isinstance(family, Sft):
        root = perron_root(sft_graph(family).matrix())
        est.perron = root
        est.tau_perron = math.log(root, family.base) if root > 0 else -math.inf
    return est


def exact_tau(family: ConstraintFamily) -> float | None:
    """Entropy exponent in closed form where one exists, else None."""
    if isinstance(family, (ConstantRun, FixedTarget)):
        return 0.0
    if isinstance(family, AlphabetPower):
        return math.log(len(family.subset), family.base)
    if isinstance(family, Sft):
        if not family.forbidden:
            return 1.0
        root = perron_root(sft_graph(family).matrix())
        return math.log(root, family.base) if root > 0 else None
    return None


# ---------------------------------------------------------------------------
# non-emptiness


@dataclass
class NonemptinessReport:
    family_id: str
    nonempty_all_k: bool | None  # None = cannot conclude (finite check only)
    method: str
    k_checked: int = 0
    first_empty_k: int | None = None


def verify_nonempty(family: ConstraintFamily, k_max: int = 16) -> NonemptinessReport:
    """Check that every A_k is non-empty.

    Built-ins are decided analytically (for finite-type families,
    arbitrarily long admissible words exist iff the de Bruijn graph has a
    cycle).  CustomPredicate families are checked up to k_max only and
    reported as inconclusive beyond that.
    """
    fid = family.family_id()
    if isinstance(family, (ConstantRun, FixedTarget, AlphabetPower)):
        return NonemptinessReport(fid, True, "analytic")
    if isinstance(family, Sft):
        graph = sft_graph(family)
        if graph.size == 0:
            return NonemptinessReport(
                fid, False, "analytic", first_empty_k=max(graph.width, 1)
            )
        if graph.width == 0:
            # no-forbidden-word or single-digit constraints: states = {()}
            ok = bool(graph.edges[0])
            return NonemptinessReport(fid, ok, "analytic", first_empty_k=None if ok else 1)
        if graph.has_cycle():
            return NonemptinessReport(fid, True, "analytic")
        # acyclic: counts vanish beyond the longest path
        counts = _sft_count_sweep(family, 1, graph.size + graph.width + 1)
        first_empty = next((k for k in sorted(counts) if counts[k] == 0), None)
        return NonemptinessReport(fid, False, "analytic", first_empty_k=first_empty)
    for k in range(1, k_max + 1):
        try:
            if _count_enumerate(family, k, DEFAULT_BUDGET) == 0:
                return NonemptinessReport(fid, False, "exhaustive", k, first_empty_k=k)
        except CountUnavailableError:
            return NonemptinessReport(fid, None, "budget_exceeded", k - 1)
    return NonemptinessReport(fid, None, "exhaustive", k_max)


# ---------------------------------------------------------------------------
# lexicographically smallest member


def lex_min_member(family: ConstraintFamily, k: int, budget: int = DEFAULT_BUDGET) -> tuple[int, ...]:
    """Smallest word of A_k in lexicographic order."""
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    m = family.base
    if isinstance(family, ConstantRun):
        return (family.digit,) * k
    if isinstance(family, FixedTarget):
        return family.target.prefix(k)
    if isinstance(family, AlphabetPower):
        return (min(family.subset),) * k
    if isinstance(family, Sft):
        graph = sft_graph(family)
        alive = _alive_table(graph, k if graph.width else 0)
        if graph.width == 0:
            allowed = sorted(c for c, _ in graph.edges[0]) if graph.size else []
            if not allowed:
                raise EmptyFamilyError(f"{family.family_id()} has no words of length {k}")
            return (allowed[0],) * k
        word = _lex_min_sft(family, graph, alive, k)
        if word is None:
            raise EmptyFamilyError(f"{family.family_id()} has no words of length {k}")
        return word
    # custom: plain lexicographic scan
    if m**k > budget:
        raise BudgetExceededError(
            f"lex-min search over {m}^{k} words exceeds budget {budget}"
        )
    for w in itertools.product(range(m), repeat=k):
        if family.contains_digits(w):
            return w
    raise EmptyFamilyError(f"{family.family_id()} has no words of length {k}")


def _alive_table(graph: SftGraph, depth: int) -> list[list[bool]]:
    """alive[r][s]: a length-r continuation exists from state s."""
    alive = [[True] * graph.size]
    for _ in range(depth):
        prev = alive[-1]
        alive.append(
            [any(prev[dst] for _, dst in graph.edges[s]) for s in range(graph.size)]
        )
    return alive


def _lex_min_sft(family: Sft, graph: SftGraph, alive, k: int):
    m = family.base
    w = graph.width
    index = {s: i for i, s in enumerate(graph.states)}
    if k <= w:
        # short words: directly scan in lex order
        for word in itertools.product(range(m), repeat=k):
            if family.contains_digits(word):
                return word
        return None
    # greedy: smallest digit whose successor state still has a long-enough run
    for head in itertools.product(range(m), repeat=w):
        if head not in index:
            continue
        if not alive[k - w][index[head]]:
            continue
        word = list(head)
        state = index[head]
        for r in range(k - w, 0, -1):
            for c, dst in graph.edges[state]:
                if alive[r - 1][dst]:
                    word.append(c)
                    state = dst
                    break
            else:
                return None
        return tuple(word)
    return None


# ---------------------------------------------------------------------------
# blockers


@dataclass
class BlockerResult:
    word: Word
    n: int
    s: Fraction
    extension_len: int
    method: str

    def __str__(self):
        return (
            f"n={self.n} s={self.s} u={self.word} e={self.extension_len} "
            f"[{self.method}]"
        )


def extension_length(n: int, s: Fraction) -> int:
    """floor(s*n), computed exactly for rational s."""
    s = Fraction(s)
    return (s.numerator * n) // s.denominator


def find_blocker(
    family: ConstraintFamily, n: int, s, budget: int = DEFAULT_BUDGET
) -> BlockerResult:
    """Lexicographically smallest u of length n with no admissible extension.

    u blocks when u.v is outside A_{n+e} for every v of length e =
    floor(s*n).  Raises BlockerNotFoundError when no word of length n
    blocks (the guarantee only applies for large n, and never holds for
    full-entropy families).
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    s = Fraction(s)
    if s <= 0:
        raise InputError(f"s must be positive, got {s}")
    e = extension_length(n, s)
    if isinstance(family, ConstantRun):
        u = _blocker_avoiding(n, (family.digit,) * n, family.base)
        return BlockerResult(Word(u, family.base), n, s, e, "analytic")
    if isinstance(family, FixedTarget):
        u = _blocker_avoiding(n, family.target.prefix(n), family.base)
        return BlockerResult(Word(u, family.base), n, s, e, "analytic")
    if isinstance(family, AlphabetPower):
        if len(family.subset) == family.base:
            raise BlockerNotFoundError(
                n, s, "every word extends admissibly (full-entropy family)"
            )
        if 0 not in family.subset:
            u = (0,) * n
        else:
            c = min(set(range(family.base)) - family.subset)
            u = (0,) * (n - 1) + (c,)
        return BlockerResult(Word(u, family.base), n, s, e, "analytic")
    if isinstance(family, Sft):
        u = _blocker_sft(family, n, e, budget)
        if u is None:
            raise BlockerNotFoundError(
                n,
                s,
                "every length-n word admits an admissible extension"
                + (" (full shift)" if not family.forbidden else ""),
            )
        return BlockerResult(Word(u, family.base), n, s, e, "graph-search")
    u = _blocker_enumerate(family, n, e, budget)
    if u is None:
        raise BlockerNotFoundError(n, s, "exhaustive search found no blocker")
    return BlockerResult(Word(u, family.base), n, s, e, "exhaustive")


def _blocker_avoiding(n: int, member: tuple[int, ...], base: int) -> tuple[int, ...]:
    """Lex-min length-n word different from the unique admissible one."""
    zero = (0,) * n
    if member != zero:
        return zero
    return (0,) * (n - 1) + (1,)


def _blocker_sft(family: Sft, n: int, e: int, budget: int):
    """Lex-ordered DFS over length-n words.

    A word blocks iff it already contains a forbidden factor (then every
    extension does too) or its final (M-1)-gram admits no length-e walk
    in the de Bruijn graph.  The DFS visits leaves in lexicographic
    order, so the first hit is the smallest blocker; branches whose
    prefix is already inadmissible are resolved immediately (their
    smallest completion, all zeros, blocks).
    """
    if not family.forbidden:
        return None
    graph = sft_graph(family)
    min_len = family._lens[0]
    alive_e = _alive_table(graph, e)[e]
    if n < min_len and all(alive_e):
        return None  # every u is admissible and extendable
    m = family.base
    fset = family._fset
    lens = family._lens
    nodes = 0
    # DFS stack of (prefix, next digit to try)
    prefix: list[int] = []
    next_digit = [0]
    while True:
        if next_digit[-1] >= m:
            if not prefix:
                return None
            prefix.pop()
            next_digit.pop()
            continue
        c = next_digit[-1]
        next_digit[-1] += 1
        nodes += 1
        if nodes > budget:
            raise BudgetExceededError(
                f"blocker search budget {budget} exceeded at n={n}"
            )
        prefix.append(c)
        j = len(prefix)
        # does a forbidden word end at the new digit?
        hit = any(
            j >= L and tuple(prefix[j - L :]) in fset for L in lens
        )
        if hit:
            word = tuple(prefix) + (0,) * (n - j)
            return word
        if j == n:
            state = tuple(prefix[-graph.width :]) if graph.width else ()
            idx = graph.states.index(state) if state in graph.states else None
            if idx is None or not alive_e[idx]:
                return tuple(prefix)
            prefix.pop()
            continue
        next_digit.append(0)


def _blocker_enumerate(family: ConstraintFamily, n: int, e: int, budget: int):
    m = family.base
    if m**n * m**e > budget:
        raise BudgetExceededError(
            f"exhaustive blocker search needs {m**n * m**e} membership tests, "
            f"budget is {budget}"
        )
    for u in itertools.product(range(m), repeat=n):
        if not _has_admissible_extension(family, u, e):
            return u
    return None


def _has_admissible_extension(family: ConstraintFamily, u: tuple[int, ...], e: int) -> bool:
    m = family.base
    for v in itertools.product(range(m), repeat=e):
        if family.contains_digits(u + v):
            return True
    return False


def verify_blocker(
    family: ConstraintFamily,
    u: tuple[int, ...] | Word,
    s,
    budget: int = DEFAULT_BUDGET,
    check_lex_min: bool = False,
) -> bool:
    """Independent exhaustive check that u blocks (and optionally is lex-min).

    Enumerates every extension of u and confirms none is admissible; with
    ``check_lex_min`` also confirms every lexicographically smaller word
    of the same length has at least one admissible extension.
    """
    digits = u.digits if isinstance(u, Word) else tuple(u)
    n = len(digits)
    e = extension_length(n, Fraction(s))
    m = family.base
    if m**e > budget:
        raise BudgetExceededError(f"verification over {m}^{e} extensions exceeds budget")
    if _has_admissible_extension(family, digits, e):
        return False
    if check_lex_min:
        for w in itertools.product(range(m), repeat=n):
            if w >= digits:
                break
            if not _has_admissible_extension(family, w, e):
                return False  # a smaller blocker exists
    return True


def verify_no_blocker(family: ConstraintFamily, n: int, s, budget: int = DEFAULT_BUDGET) -> bool:
    """Exhaustively confirm that no length-n word blocks."""
    s = Fraction(s)
    e = extension_length(n, s)
    m = family.base
    if m ** (n + e) > budget:
        raise BudgetExceededError(
            f"verification over {m}^{n + e} words exceeds budget"
        )
    return all(
        _has_admissible_extension(family, w, e)
        for w in itertools.product(range(m), repeat=n)
    )
