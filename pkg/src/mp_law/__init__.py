from .stieltjes import (
    StieltjesSolution,
    boundary_values,
    h,
    h_prime,
    h_second,
    m_dot0,
    m_prime,
    solve_m,
    solve_m_array,
    solve_m_at_zero,
)
from .table import (
    MPLawTable,
    RegularityReport,
    UpperEdge,
    density,
    find_edges,
    full_quantiles,
    quantiles,
    upper_edge,
)

__all__ = [
    "StieltjesSolution",
    "boundary_values",
    "h",
    "h_prime",
    "h_second",
    "m_dot0",
    "m_prime",
    "solve_m",
    "solve_m_array",
    "solve_m_at_zero",
    "MPLawTable",
    "RegularityReport",
    "density",
    "find_edges",
    "full_quantiles",
    "quantiles",
    "UpperEdge",
    "upper_edge",
]
