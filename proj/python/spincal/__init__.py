"""Python bindings for the spincal C++ core."""

from ._core import (
    BranchPoint,
    DivisorPoint,
    DivisorSearch,
    DofAudit,
    InitialLayout,
    Lattice,
    OrbitSpec,
    PhasePoint,
    Trajectory,
    Variant,
    __version__,
    branch_points,
    char_poly,
    darboux_check,
    divisor,
    dof_audit,
    genus,
    hamiltonian,
    integrate,
    orbit_dimension,
    phi,
    run_command,
    seeded_phase_point,
    sigma,
    wp,
    wp_prime,
    zeta,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
