"""Constrained maximal run-length statistics.

Exact scanners for the largest admissible window in a digit stream, word
censuses and entropy-rate estimates for the underlying constraint
families, Monte Carlo verification of the limit law ell_n / log_m(n) ->
1/(1-tau), and constructions of exceptional and bounded-run digit
streams with their dimension bounds.
"""

from .errors import (
    BlockerNotFoundError,
    BudgetExceededError,
    ClosureNotVerifiedError,
    ConstructionError,
    CountUnavailableError,
    EmptyFamilyError,
    FamilySpecError,
    InputError,
    MaxrunError,
    SandwichViolationError,
)
from .family import (
    AlphabetPower,
    Closure,
    ClosureReport,
    ConstantRun,
    ConstraintFamily,
    CustomPredicate,
    FixedTarget,
    Sft,
    TargetDigits,
    Word,
    load_family_file,
    parse_family_spec,
    serialize_family_spec,
    verify_closure,
)
from .scanner import (
    BufferStream,
    DigitStream,
    GeneratedStream,
    RationalStream,
    RunLengthSeries,
    SeededRandomStream,
    max_run_incremental,
    max_run_naive,
    max_run_per_start,
    next_digits,
    R_n_p,
    r_n,
    r_n_target,
    read_digit_file,
    run_length_profile,
    scan_series,
    write_digit_file,
)
from .census import (
    BlockerResult,
    CountTable,
    EntropyEstimate,
    count_table,
    count_words,
    entropy_estimate,
    exact_tau,
    find_blocker,
    lex_min_member,
    perron_root,
    verify_blocker,
    verify_no_blocker,
    verify_nonempty,
)
from .moran import (
    BoundedRunReport,
    ExceptionalConfig,
    MoranBound,
    MoranParams,
    PhiRule,
    SandwichReport,
    build_bounded_run_stream,
    build_exceptional_stream,
    derive_moran_params,
    dim_lower_bound,
    phi_check,
    phi_log2,
    phi_pow,
    phi_table,
    verify_exceptional,
)
from .experiment import (
    BoundSchedule,
    FrequencyTable,
    TrialTable,
    aggregate,
    bound_event_frequency,
    emit_aggregate_csv,
    emit_frequency_csv,
    emit_plot,
    emit_trials_csv,
    monte_carlo_limit,
    read_trials_csv,
    trial_rng_stream,
)

__version__ = "0.1.0"
