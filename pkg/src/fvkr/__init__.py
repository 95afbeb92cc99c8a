"""Finite-volume advection-diffusion with rough velocity fields, verified in
logarithmic Kantorovich-Rubinstein distances.

The package covers the full loop: admissible meshes, flux discretization of a
velocity field, the implicit upwind scheme with its stability and weak-BV
monitors, exact discrete optimal transport for the error metric, a reflected
stochastic particle cross-check, and convergence-ladder drivers.
"""

from .mesh import (
    Domain,
    Mesh,
    build_cartesian_mesh,
    build_voronoi_mesh,
    mesh_size,
    read_mesh,
    validate_admissibility,
    write_mesh,
)
from .fields import (
    FIELD_CATALOG,
    CellField,
    FluxField,
    VelocityField,
    named_field,
    velocity_from_csv,
)
from .discretize import (
    compute_kmax,
    discrete_divergence,
    discretize_initial_datum,
    discretize_velocity,
    kmax_constant_divergence,
)
from .scheme import (
    BVReport,
    SchemeConfig,
    SolverFailure,
    StabilityReport,
    Trajectory,
    assemble_step,
    elementary_inequality_gap,
    interpolant_at,
    q_mean,
    solve,
    stability_monitor,
    step,
    weak_bv_monitor,
)
from .transport import (
    CertificateReport,
    CertificationFailure,
    DiscreteMeasure,
    KRResult,
    TransportPlan,
    brute_force_kr,
    dual_certify,
    kr_distance,
    kr_signed,
    log_cost,
    measure_from_cellfield,
)

__version__ = "0.1.0"
