"""critrep: degeneracy spectra and information measures of the internal
codes of compact trained models, plus the constrained-entropy solver that
predicts their power-law shape.
"""

__version__ = "0.1.0"

from .linalg import Rng
from .representation import (
    CodeHistogram,
    DegeneracySpectrum,
    binarize,
    count_codes,
    degeneracy,
    log_bin,
    spectrum_from_sizes,
)
from .infostats import (
    InfoSummary,
    PowerLawFit,
    entropies_with_labels,
    fit_power_law,
    relevance,
    resolution,
    summarize,
)
from .maxent import MaxEntProblem, solve_fixed_beta, solve_fixed_resolution

__all__ = [
    "Rng",
    "CodeHistogram",
    "DegeneracySpectrum",
    "binarize",
    "count_codes",
    "degeneracy",
    "log_bin",
    "spectrum_from_sizes",
    "InfoSummary",
    "PowerLawFit",
    "entropies_with_labels",
    "fit_power_law",
    "relevance",
    "resolution",
    "summarize",
    "MaxEntProblem",
    "solve_fixed_beta",
    "solve_fixed_resolution",
    "__version__",
]
