"""Few-photon linear-optics simulator for heralded polarization entanglement concentration."""

from .detect import (
    ClickPattern,
    CountTable,
    DetectorSpec,
    MeasurementOutcome,
    click_probability,
    condition,
    detector,
    fidelity,
    outcome_distribution,
    sample,
)
from .elements import Circuit, ElementSpec, Relabel, apply_circuit, apply_element, hwp, pbs, phase_shifter
from .fock import Ensemble, FockState, ModeId, inner_product, make_state, normalize, tensor
from .schemes import (
    RawStateParams,
    concentrate,
    dephase,
    fig1_circuit,
    fig2_protocol,
    fig2_run,
    raw_state,
    spdc_input,
)

__version__ = "0.1.0"
