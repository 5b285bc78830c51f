"""Filter functions and error transfer matrices for piecewise-constant control.

The compute kernels run on a compiled extension when it is available and on
a numpy implementation otherwise; ``pulsefilter.BACKEND`` names the active one
and ``PULSEFILTER_BACKEND=python`` forces the fallback.
"""
from ._backend import BACKEND, available_backends
from .basis import (Basis, TraceTensor, complete_basis, ggm_basis,
                    liouville_representation, pauli_basis)
from .control_matrix import (ControlMatrix, concatenate, concatenate_periodic,
                             concatenate_pulses, fidelity_filter_function, filter_function,
                             generalized_filter_function, noise_operators_hilbert,
                             pulse_correlation_filter_function, single_pulse_control_matrix)
from .error_channel import (ErrorChannel, cumulant_function, cumulant_function_pauli,
                            decay_amplitudes, error_channel, error_transfer_matrix,
                            frequency_shifts, second_order_integral)
from .errors import (BasisMismatchError, DurationError, GridMismatchError, HermiticityError,
                     NumericalError, ParseError, PulseFilterError, ResourceLimitError,
                     ShapeError, TracelessError, ValidationError)
from .metrics import (ChannelMetrics, ConvergenceWarning, avg_gate_fidelity, channel_metrics,
                      convergence, entanglement_fidelity, infidelity, leakage_rates,
                      povm_probability, state_fidelity, xi_squared)
from .montecarlo import (BenchmarkResult, McConfig, McResult, PowerLawNoise, WhiteNoise,
                         mc_entanglement_fidelity, noise_model_from_spectrum,
                         sample_trajectories, scaling_benchmark)
from .pulse import PulseSequence, extend_pulse, new_pulse
from .spectrum import Spectrum, default_grid, frequency_grid, power_law, tabulated, white

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
