from .analytic import (
    bernoulli_power_slack,
    binary_entropy,
    entropy_gap_bound,
    kl_bits,
    level1_ratio,
    variance_influence_slack,
)
from .families import (
    FunctionSpec,
    SpecError,
    format_table,
    make_family,
    parse_spec,
    parse_table,
    random_table,
    read_table,
    write_table,
)
from .fourier import (
    FourierCoefficients,
    influence_spectral_exact,
    inverse_wht,
    inverse_wht_values,
    parseval_residual,
    wht,
    wht_real,
    wht_unnormalized,
)
from .functions import (
    TABLE_CAP,
    TERNARY_CAP,
    And,
    ArityError,
    BooleanFunction,
    Complement,
    Constant,
    Dictator,
    Majority,
    Or,
    Parity,
    Restricted,
    TableFunction,
    Tribes,
    TruthTable,
    influence_flip_counts,
    is_monotone_table,
    ternary_index,
    ternary_table,
    tribes_size,
)
from .points import BitPoint, PartialPoint, bits_to_index, index_to_bits


def max_influence(f: BooleanFunction, kind: str = "spectral") -> float:
    if kind == "flip":
        return float(max(f.influences_flip(), default=0.0))
    if kind == "spectral":
        return float(max(f.influences_spectral(), default=0.0))
    raise ValueError(f"unknown influence kind {kind!r}")
