"""Convergent message-passing solvers and the forward-schedule TRW baseline."""
from .decode import Decoded, decode_map
from .region import heskes_to_mplp_transform, run_heskes, run_mplp, run_msd, variable_beliefs
from .trace import (
    TRACE_COLUMNS,
    Schedule,
    SolverConfig,
    SolverTrace,
    SweepRecord,
    read_trace_csv,
)
from .trw import TRWState, run_trw_forward, run_trws

__all__ = [
    "Decoded", "decode_map", "heskes_to_mplp_transform", "run_heskes", "run_mplp", "run_msd",
    "variable_beliefs", "TRACE_COLUMNS", "Schedule", "SolverConfig", "SolverTrace",
    "SweepRecord", "read_trace_csv", "TRWState", "run_trw_forward", "run_trws",
]
