"""Python bindings for the digital RRAM compute-in-memory simulator."""

from ._cimsim import (  # noqa: F401
    LogicOp,
    SimError,
    SlicedWeight,
    TimingParams,
    cim_dot,
    cim_multiply,
    compute_gate,
    device_monte_carlo,
    euclid_sq,
    gpu_energy_per_op_pj,
    hamming,
    logic_op,
    ops_conv,
    ops_fc,
    scale_energy_pj,
    similarity_matrix,
    system_energy_per_op_pj,
    table_energy_per_op_pj,
)

__all__ = [
    "LogicOp",
    "SimError",
    "SlicedWeight",
    "TimingParams",
    "cim_dot",
    "cim_multiply",
    "compute_gate",
    "device_monte_carlo",
    "euclid_sq",
    "gpu_energy_per_op_pj",
    "hamming",
    "logic_op",
    "ops_conv",
    "ops_fc",
    "scale_energy_pj",
    "similarity_matrix",
    "system_energy_per_op_pj",
    "table_energy_per_op_pj",
]
