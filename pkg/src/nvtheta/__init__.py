"""Simulation toolkit for the NV-center ground-state spin as a theta**2 field-angle sensor."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    FitError,
    InaccessibleAxisError,
    InaccessibleFieldError,
    NVError,
    PhysicsDomainError,
    SingularFieldError,
)
from .spin_model import (
    Constants,
    EigenSystem,
    FieldVector,
    HamiltonianMatrix,
    build_hamiltonian_planar,
    build_hamiltonian_vector,
    eigendecompose,
    planar_eigensystem,
    spin_operators,
    transition_frequencies,
)
from .perturbation import (
    analytic_gap_curvatures,
    analytic_kappas,
    analytic_omegas,
    naive_bz_sensitivity,
    numerical_curvature,
    small_angle_expansion,
    theta2_sensitivity,
)
from .geometry import (
    CrystalOrientation,
    FieldRegion,
    SphericalDirection,
    accessible_phi_range,
    is_accessible,
    make_sweep_grid,
    nv_axes,
)
from .odmr import Dip, LineShape, Spectrum, add_noise, dip_set, synthesize
from .fitting import (
    detect_dips,
    fit_dips,
    fit_linear,
    fit_lorentzian,
    fit_quadratic,
    sensitivity_table,
)
from .experiment import (
    VirtualSample,
    locate_candidate_axes,
    measure_sensitivity,
    refine_axis,
    run_angle_sweep,
    run_field_ramp,
    select_refinable,
)
