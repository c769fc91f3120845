"""cpmkit: continuous-phase-modulation trellises, capacities, mappings, codecs."""

__version__ = "0.1.0"

from .waveform import (            # noqa: F401
    CpmScheme, PulseKind, BasebandSignal, PsdEstimate,
    scheme, frequency_pulse, phase_pulse, modulate, modulate_tilted,
    estimate_psd, correlation_psd, bandwidth_at_fraction, normalized_symbol_rate,
)
from .trellis import (             # noqa: F401
    Trellis, Labeling, DistanceReport, build_trellis, cpm_complexity,
    rimoldi_labeling, optimized_cpe_labeling, min_distance_search,
    MappingConditionsNotMet,
)
from .siso import (                # noqa: F401
    max_star, max_star_seq, branch_metrics, forward_recursion,
    backward_recursion, bcjr_bit_llrs,
)
