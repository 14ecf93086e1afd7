"""Constraint families: admissible-word sets indexed by length.

A constraint family assigns to every length k a non-empty set A_k of
length-k words over the digit alphabet {0, ..., m-1}.  The scanner asks a
family exactly one question ("is this window admissible?"), so families
are represented as membership predicates plus closure metadata:

* prefix-closed: dropping the last digit of an admissible word leaves an
  admissible word;
* factor-closed (also called subword-closed): every contiguous factor of
  an admissible word is admissible.  This is the stronger property; it is
  what licenses the incremental scanning engine and the blocker-based
  stream constructions.

Built-in kinds cover the classic run statistics:

=================  =========================  ========================
kind               A_k                        longest-run meaning
=================  =========================  ========================
ConstantRun(d)     {d^k}                      run of the digit d
FixedTarget(y)     {y_1 ... y_k}              occurrence of a prefix of y
AlphabetPower(A)   A^k                        window over sub-alphabet A
Sft(F)             words with no factor in F  window avoiding F
=================  =========================  ========================

CustomPredicate admits arbitrary rules.  Its closure properties can only
be checked exhaustively up to a finite length, so they start out
unverified and engines that need them refuse to run until
:func:`verify_closure` has been applied.
"""

from __future__ import annotations

import enum
import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._rng import QuantumDigitSource
from .errors import BudgetExceededError, FamilySpecError, InputError


class Closure(enum.Enum):
    VERIFIED_TRUE = "verified-true"
    VERIFIED_FALSE = "verified-false"
    UNVERIFIED = "unverified"


@dataclass(frozen=True)
class Word:
    """A finite digit string over {0, ..., base-1}."""

    digits: tuple[int, ...]
    base: int

    def __post_init__(self):
        if self.base < 2:
            raise InputError(f"base must be >= 2, got {self.base}")
        for d in self.digits:
            if not 0 <= d < self.base:
                raise InputError(f"digit {d} out of range for base {self.base}")

    def __len__(self) -> int:
        return len(self.digits)

    def __str__(self) -> str:
        return "".join(str(d) for d in self.digits)

    @classmethod
    def from_string(cls, text: str, base: int) -> "Word":
        try:
            digits = tuple(int(c) for c in text)
        except ValueError as exc:
            raise InputError(f"non-digit character in word {text!r}") from exc
        return cls(digits, base)


@dataclass
class ClosureReport:
    prefix_closed: Closure
    subword_closed: Closure
    method: str
    k_checked: int
    counterexample: tuple | None = None
    note: str = ""

    def __post_init__(self):
        # factor closure subsumes prefix closure
        if (
            self.subword_closed is Closure.VERIFIED_TRUE
            and self.prefix_closed is not Closure.VERIFIED_TRUE
        ):
            raise AssertionError("subword-closed families are prefix-closed")


class TargetDigits:
    """Lazily extended infinite digit sequence for fixed-target families.

    The sequence is defined by an immutable ``source`` descriptor:

    * ``("digits", (d1, ...))`` -- the given digits followed by zeros (the
      expansion of the corresponding finite fraction);
    * ``("rational", p, q)`` -- base-m expansion of p/q, 0 <= p < q;
    * ``("seed", s)`` -- i.i.d. uniform digits from the seeded generator.

    Extension is synchronized, so one instance may be shared across
    threads.
    """

    def __init__(self, source: tuple, base: int):
        self.source = source
        self.base = base
        self._buf: list[int] = []
        self._lock = threading.Lock()
        kind = source[0]
        if kind == "digits":
            for d in source[1]:
                if not 0 <= d < base:
                    raise InputError(f"target digit {d} out of range for base {base}")
        elif kind == "rational":
            _, p, q = source
            if not (q > 0 and 0 <= p < q):
                raise InputError(f"rational target needs 0 <= p < q, got {p}/{q}")
            self._rem = p
        elif kind == "seed":
            self._rng_source = QuantumDigitSource(source[1], base)
        else:
            raise InputError(f"unknown target source {kind!r}")

    @classmethod
    def from_digits(cls, digits: Sequence[int], base: int) -> "TargetDigits":
        return cls(("digits", tuple(int(d) for d in digits)), base)

    @classmethod
    def from_rational(cls, p: int, q: int, base: int) -> "TargetDigits":
        return cls(("rational", int(p), int(q)), base)

    @classmethod
    def from_seed(cls, seed: int, base: int) -> "TargetDigits":
        return cls(("seed", int(seed)), base)

    def prefix(self, k: int) -> tuple[int, ...]:
        """First k digits of the target expansion."""
        return tuple(self.ensure(k)[:k])

    def ensure(self, k: int) -> list[int]:
        """Extend to >= k digits and return the internal buffer.

        The returned list must be treated as read-only; it is shared and
        only ever grows.
        """
        if len(self._buf) < k:
            with self._lock:
                self._extend(k)
        return self._buf

    def digit(self, i: int) -> int:
        """Digit at 1-based index i."""
        return self.ensure(i)[i - 1]

    def _extend(self, k: int) -> None:
        kind = self.source[0]
        need = k - len(self._buf)
        if need <= 0:
            return
        if kind == "digits":
            explicit = self.source[1]
            have = len(self._buf)
            for i in range(have, k):
                self._buf.append(explicit[i] if i < len(explicit) else 0)
        elif kind == "rational":
            m = self.base
            r = self._rem
            _, _, q = self.source
            for _ in range(need):
                r *= m
                self._buf.append(r // q)
                r %= q
            self._rem = r
        else:  # seed
            self._buf.extend(int(d) for d in self._rng_source.take(need))

    # Pickling drops the mutable buffer; workers regenerate on demand.
    def __reduce__(self):
        return (TargetDigits, (self.source, self.base))

    def __eq__(self, other):
        return (
            isinstance(other, TargetDigits)
            and self.source == other.source
            and self.base == other.base
        )

    def __hash__(self):
        return hash((self.source, self.base))


class ConstraintFamily:
    """Common interface of all family kinds."""

    kind: str = "abstract"
    base: int

    # Closure flags are verification caches, not defining state; built-in
    # kinds pre-set them analytically in __post_init__.
    _prefix: Closure = Closure.UNVERIFIED
    _subword: Closure = Closure.UNVERIFIED

    @property
    def prefix_closed(self) -> Closure:
        return self._prefix

    @property
    def subword_closed(self) -> Closure:
        return self._subword

    def contains(self, w: Word) -> bool:
        """Membership of w in A_{len(w)}."""
        if w.base != self.base:
            raise InputError(
                f"word base {w.base} does not match family base {self.base}"
            )
        return self.contains_window(w.digits, 0, len(w.digits))

    def contains_digits(self, digits: Sequence[int]) -> bool:
        return self.contains_window(digits, 0, len(digits))

    def contains_window(self, digits: Sequence[int], start: int, length: int) -> bool:
        """Membership of digits[start : start+length] without copying."""
        raise NotImplementedError

    def family_id(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return self.family_id()


@dataclass(eq=True, unsafe_hash=True)
class ConstantRun(ConstraintFamily):
    """A_k = {d^k}: the classic longest run of a single digit."""

    digit: int
    base: int = 2
    kind = "constant_run"
    _prefix: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )
    _subword: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )

    def __post_init__(self):
        if self.base < 2:
            raise InputError(f"base must be >= 2, got {self.base}")
        if not 0 <= self.digit < self.base:
            raise InputError(f"digit {self.digit} out of range for base {self.base}")

    def contains_window(self, digits, start, length):
        d = self.digit
        for j in range(start, start + length):
            if digits[j] != d:
                return False
        return True

    def family_id(self):
        return f"constant_run[m={self.base},d={self.digit}]"


@dataclass(eq=True, unsafe_hash=True)
class FixedTarget(ConstraintFamily):
    """A_k = {y_1 ... y_k}: prefixes of one target expansion y.

    Prefix-closed by construction but in general not factor-closed (an
    interior factor of a prefix need not itself be a prefix).
    """

    target: TargetDigits
    base: int = 2
    kind = "fixed_target"
    _prefix: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )
    _subword: Closure = field(
        default=Closure.UNVERIFIED, init=False, compare=False, repr=False
    )

    def __post_init__(self):
        if self.target.base != self.base:
            raise InputError("target base does not match family base")

    def contains_window(self, digits, start, length):
        y = self.target.ensure(length)
        for j in range(length):
            if digits[start + j] != y[j]:
                return False
        return True

    def family_id(self):
        src = self.target.source
        if src[0] == "digits":
            desc = "digits=" + "".join(map(str, src[1]))
        elif src[0] == "rational":
            desc = f"rational={src[1]}/{src[2]}"
        else:
            desc = f"seed={src[1]}"
        return f"fixed_target[m={self.base},{desc}]"


@dataclass(eq=True, unsafe_hash=True)
class AlphabetPower(ConstraintFamily):
    """A_k = A^k for a proper non-empty sub-alphabet A."""

    subset: frozenset[int]
    base: int = 2
    kind = "alphabet_power"
    _prefix: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )
    _subword: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )

    def __post_init__(self):
        object.__setattr__(self, "subset", frozenset(int(d) for d in self.subset))
        if self.base < 2:
            raise InputError(f"base must be >= 2, got {self.base}")
        if not self.subset:
            raise InputError("subset must be non-empty")
        for d in self.subset:
            if not 0 <= d < self.base:
                raise InputError(f"subset digit {d} out of range for base {self.base}")

    def contains_window(self, digits, start, length):
        a = self.subset
        for j in range(start, start + length):
            if digits[j] not in a:
                return False
        return True

    def family_id(self):
        return f"alphabet_power[m={self.base},A={''.join(map(str, sorted(self.subset)))}]"


@dataclass(eq=True, unsafe_hash=True)
class Sft(ConstraintFamily):
    """A_k = length-k words containing no forbidden word as a factor.

    An empty forbidden list is allowed and means the full shift (every
    word admissible).  Forbidden words that contain another forbidden word
    as a factor are redundant and are pruned at construction; this does
    not change any A_k.
    """

    forbidden: tuple[tuple[int, ...], ...]
    base: int = 2
    kind = "sft"
    _prefix: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )
    _subword: Closure = field(
        default=Closure.VERIFIED_TRUE, init=False, compare=False, repr=False
    )

    def __post_init__(self):
        if self.base < 2:
            raise InputError(f"base must be >= 2, got {self.base}")
        words = []
        for w in self.forbidden:
            tw = tuple(int(d) for d in w)
            if not tw:
                raise InputError("forbidden words must be non-empty")
            for d in tw:
                if not 0 <= d < self.base:
                    raise InputError(
                        f"forbidden-word digit {d} out of range for base {self.base}"
                    )
            words.append(tw)
        pruned = _prune_redundant_forbidden(words)
        object.__setattr__(self, "forbidden", tuple(sorted(pruned, key=lambda w: (len(w), w))))
        object.__setattr__(self, "_fset", frozenset(self.forbidden))
        object.__setattr__(self, "_lens", tuple(sorted({len(w) for w in self.forbidden})))

    @property
    def max_forbidden_len(self) -> int:
        return self._lens[-1] if self._lens else 0

    def contains_window(self, digits, start, length):
        fset = self._fset
        lens = self._lens
        end = start + length
        for j in range(start, end):
            # factors ending at j; anything forbidden further left was
            # already seen at its own end position
            for L in lens:
                a = j - L + 1
                if a < start:
                    break
                if tuple(digits[a : j + 1]) in fset:
                    return False
        return True

    def family_id(self):
        fw = "|".join("".join(map(str, w)) for w in self.forbidden)
        return f"sft[m={self.base},F={fw or '-'}]"


def _prune_redundant_forbidden(words: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    out = []
    uniq = sorted(set(words), key=lambda w: (len(w), w))
    for w in uniq:
        if not any(_is_factor(v, w) for v in uniq if v != w and len(v) <= len(w)):
            out.append(w)
    return out


def _is_factor(u: tuple, v: tuple) -> bool:
    lu, lv = len(u), len(v)
    return any(v[i : i + lu] == u for i in range(lv - lu + 1))


@dataclass(eq=False)
class CustomPredicate(ConstraintFamily):
    """Opaque membership rule.

    ``fn`` receives the window as a tuple of digits and must answer
    membership in A_{len(window)} deterministically.  Closure flags start
    unverified; run :func:`verify_closure` before using engines that need
    them.  For multiprocessing the callable must be importable.
    """

    fn: Callable[[tuple[int, ...]], bool]
    base: int = 2
    name: str = "custom"
    kind = "custom"

    def __post_init__(self):
        self._prefix = Closure.UNVERIFIED
        self._subword = Closure.UNVERIFIED

    def contains_window(self, digits, start, length):
        return bool(self.fn(tuple(digits[start : start + length])))

    def family_id(self):
        return f"custom[m={self.base},{self.name}]"

    def __eq__(self, other):
        return (
            isinstance(other, CustomPredicate)
            and self.fn is other.fn
            and self.base == other.base
            and self.name == other.name
        )

    def __hash__(self):
        return hash((id(self.fn), self.base, self.name))


BUILTIN_KINDS = ("constant_run", "fixed_target", "alphabet_power", "sft")


def verify_closure(
    family: ConstraintFamily, k_max: int, budget: int = 1 << 22
) -> ClosureReport:
    """Check prefix- and factor-closure of the family.

    Built-in kinds are decided analytically (fixed-target factor closure
    is searched for a counterexample among the first ``k_max`` target
    digits; absence of one proves nothing about the infinite target, so
    the flag stays unverified in that case).  CustomPredicate families are
    checked exhaustively over all words of length <= k_max, subject to
    ``budget`` membership tests; the verified flags are cached on the
    family so scanning engines can rely on them.
    """
    if k_max < 2:
        raise InputError("k_max must be >= 2")
    if isinstance(family, (ConstantRun, AlphabetPower, Sft)):
        return ClosureReport(
            Closure.VERIFIED_TRUE, Closure.VERIFIED_TRUE, "analytic", k_max
        )
    if isinstance(family, FixedTarget):
        return _verify_fixed_target(family, k_max)
    if isinstance(family, CustomPredicate):
        return _verify_custom(family, k_max, budget)
    raise InputError(f"unknown family type {type(family).__name__}")


def _verify_fixed_target(family: FixedTarget, k_max: int) -> ClosureReport:
    y = family.target.prefix(k_max)
    for k in range(2, k_max + 1):
        prefix_k = y[:k]
        for i in range(1, k):  # proper interior factors
            for j in range(1, k - i + 1):
                if prefix_k[i : i + j] != y[:j]:
                    object.__setattr__(family, "_subword", Closure.VERIFIED_FALSE)
                    return ClosureReport(
                        Closure.VERIFIED_TRUE,
                        Closure.VERIFIED_FALSE,
                        "exhaustive",
                        k_max,
                        counterexample=(prefix_k, i, j),
                        note=f"factor at offset {i} length {j} of the length-{k} "
                        "prefix is not a target prefix",
                    )
    return ClosureReport(
        Closure.VERIFIED_TRUE,
        Closure.UNVERIFIED,
        "exhaustive",
        k_max,
        note="no counterexample among the first k_max digits; cannot conclude "
        "for the infinite target",
    )


def _verify_custom(family: CustomPredicate, k_max: int, budget: int) -> ClosureReport:
    m = family.base
    total = sum(m**k for k in range(1, k_max + 1))
    if total > budget:
        return ClosureReport(
            Closure.UNVERIFIED,
            Closure.UNVERIFIED,
            "budget_exceeded",
            0,
            note=f"exhaustive check needs {total} membership tests, budget is {budget}",
        )
    members: list[set[tuple[int, ...]]] = [set()]  # members[k] = A_k
    for k in range(1, k_max + 1):
        members.append(
            {w for w in itertools.product(range(m), repeat=k) if family.fn(w)}
        )
    prefix = Closure.VERIFIED_TRUE
    subword = Closure.VERIFIED_TRUE
    counterexample = None
    for k in range(2, k_max + 1):
        for w in members[k]:
            if prefix is Closure.VERIFIED_TRUE and w[:-1] not in members[k - 1]:
                prefix = Closure.VERIFIED_FALSE
                counterexample = counterexample or ("prefix", w)
            if subword is Closure.VERIFIED_TRUE:
                for j in range(1, k):
                    ok = all(
                        w[i : i + j] in members[j] for i in range(k - j + 1)
                    )
                    if not ok:
                        subword = Closure.VERIFIED_FALSE
                        counterexample = counterexample or ("subword", w)
                        break
    if subword is Closure.VERIFIED_TRUE and prefix is Closure.VERIFIED_FALSE:
        # cannot happen: factors include prefixes
        raise AssertionError("inconsistent closure verification")
    family._prefix = prefix
    family._subword = subword
    return ClosureReport(prefix, subword, "exhaustive", k_max, counterexample)


# ---------------------------------------------------------------------------
# family-spec documents

_SPEC_FIELDS = {
    "constant_run": {"kind", "base", "digit"},
    "fixed_target": {"kind", "base", "target"},
    "alphabet_power": {"kind", "base", "subset"},
    "sft": {"kind", "base", "forbidden"},
}


def parse_family_spec(doc: dict | str) -> ConstraintFamily:
    """Build a family from a spec document (dict or JSON text).

    Schema: ``{"kind": ..., "base": m, <kind-specific field>}`` where the
    kind-specific field is ``digit`` (constant_run), ``target``
    (fixed_target; a digit string, ``{"seed": s}`` or ``{"rational":
    [p, q]}``), ``subset`` (alphabet_power; list of digits) or
    ``forbidden`` (sft; list of digit strings, possibly empty).  Unknown
    fields are rejected.
    """
    if isinstance(doc, str):
        import json

        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise FamilySpecError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FamilySpecError("family spec must be a JSON object")
    kind = doc.get("kind")
    if kind not in _SPEC_FIELDS:
        raise FamilySpecError(
            f"unknown kind {kind!r}; expected one of {sorted(_SPEC_FIELDS)}", "kind"
        )
    unknown = set(doc) - _SPEC_FIELDS[kind]
    if unknown:
        raise FamilySpecError(f"unknown fields for kind {kind}: {sorted(unknown)}")
    if "base" not in doc:
        raise FamilySpecError("missing required field", "base")
    base = doc["base"]
    if not isinstance(base, int) or base < 2:
        raise FamilySpecError(f"base must be an integer >= 2, got {base!r}", "base")
    try:
        if kind == "constant_run":
            if "digit" not in doc:
                raise FamilySpecError("missing required field", "digit")
            return ConstantRun(digit=int(doc["digit"]), base=base)
        if kind == "alphabet_power":
            if "subset" not in doc:
                raise FamilySpecError("missing required field", "subset")
            return AlphabetPower(subset=frozenset(doc["subset"]), base=base)
        if kind == "sft":
            if "forbidden" not in doc:
                raise FamilySpecError("missing required field", "forbidden")
            words = tuple(
                Word.from_string(w, base).digits if isinstance(w, str) else tuple(w)
                for w in doc["forbidden"]
            )
            return Sft(forbidden=words, base=base)
        # fixed_target
        if "target" not in doc:
            raise FamilySpecError("missing required field", "target")
        t = doc["target"]
        if isinstance(t, str):
            target = TargetDigits.from_digits(Word.from_string(t, base).digits, base)
        elif isinstance(t, dict) and set(t) == {"seed"}:
            target = TargetDigits.from_seed(int(t["seed"]), base)
        elif isinstance(t, dict) and set(t) == {"rational"}:
            p, q = t["rational"]
            target = TargetDigits.from_rational(int(p), int(q), base)
        else:
            raise FamilySpecError(
                "target must be a digit string, {'seed': s} or {'rational': [p, q]}",
                "target",
            )
        return FixedTarget(target=target, base=base)
    except InputError as exc:
        if isinstance(exc, FamilySpecError):
            raise
        raise FamilySpecError(str(exc)) from exc


def serialize_family_spec(family: ConstraintFamily) -> dict:
    """Inverse of :func:`parse_family_spec` up to semantic equality."""
    if isinstance(family, ConstantRun):
        return {"kind": "constant_run", "base": family.base, "digit": family.digit}
    if isinstance(family, AlphabetPower):
        return {
            "kind": "alphabet_power",
            "base": family.base,
            "subset": sorted(family.subset),
        }
    if isinstance(family, Sft):
        return {
            "kind": "sft",
            "base": family.base,
            "forbidden": ["".join(map(str, w)) for w in family.forbidden],
        }
    if isinstance(family, FixedTarget):
        src = family.target.source
        if src[0] == "digits":
            target = "".join(map(str, src[1]))
        elif src[0] == "rational":
            target = {"rational": [src[1], src[2]]}
        else:
            target = {"seed": src[1]}
        return {"kind": "fixed_target", "base": family.base, "target": target}
    raise InputError(f"cannot serialize family kind {family.kind}")


def load_family_file(path) -> ConstraintFamily:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_family_spec(fh.read())
