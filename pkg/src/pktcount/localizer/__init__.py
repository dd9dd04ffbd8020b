from .estimate import ESTIMATE_HEADER, TrajectoryEstimate
from .mcl import mcl_localize
from .pcmcl import (
    LocalizerConfig,
    PcmclParams,
    PcmclPosterior,
    aisle_index,
    dirichlet_stack_logprior,
    localize_windows,
    pcmcl_localize,
    pcmcl_log_posterior,
    stack_draw,
)
