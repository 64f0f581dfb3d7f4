"""Simulation and process tomography of a dual-rail EIT polarization-qubit memory."""

from .eit_medium import (
    EitParams,
    StorageTiming,
    calibrate_to_fwhm,
    fwhm,
    retrieval_efficiency,
    storage_timetrace,
    transmission_spectrum,
)
from .measurement_sim import CountModel, TomographyRecord, simulate_counts, tomography_dataset
from .memory_channel import MemoryParams, RailParams, channel_output, chi_of_memory, snapshot
from .process_rep import CHI_IDENTITY, apply_chi, check_cp_tp, chi_from_kraus, process_fidelity
from .qubit_core import density_from_ket, ket_from_angles, projector, state_fidelity
from .tomography import (
    MleOptions,
    fidelity_vs_time,
    linear_inversion_chi,
    mle_chi,
    mle_fit,
    state_mle,
)

__version__ = "0.1.0"
