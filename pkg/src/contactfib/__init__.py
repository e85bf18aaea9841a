"""Exterior calculus on coordinate charts with numerical certification of
contact structures on exact symplectic fibrations: product and bundle contact
forms, admissible-constant search, isotopy families, and fiber connected
sums."""

__version__ = "0.1.0"

from .charts import Chart, product_chart
from .expressions import (
    Const,
    Expr,
    Var,
    as_expr,
    bump,
    cos,
    exp,
    exprs_equal,
    grecip,
    sin,
    sqrt,
)
from .forms import (
    ChartMismatchError,
    DifferentialForm,
    SmoothMap,
    VectorField,
    compose,
    d,
    differential,
    exterior_derivative,
    form_power,
    function_form,
    identity_map,
    inject_form,
    interior_product,
    one_form,
    partial_derivative,
    pullback,
    restrict_to_fiber,
    top_density,
    wedge,
    zero_form,
)
from .verify import (
    DEFAULT_THRESHOLD,
    Exclusion,
    NotExactError,
    NotSymplecticError,
    OutwardBoundary,
    PositivityReport,
    PotentialResult,
    SampleGrid,
    contact_density,
    exact_symplectomorphism_potential,
    liouville_field,
    symplectic_matrix,
    verify_contact,
    verify_exact_symplectic,
)
from .bundles import (
    BasePiece,
    BundleContactForm,
    Collar,
    CutoffProfile,
    DominanceNotReachedError,
    FibrationSpec,
    assemble_sigma,
    find_admissible_K,
    make_cutoff,
    product_contact,
    smooth_step,
    verify_bundle_contact,
    verify_compatibility,
)
from .families import (
    ContactFamily,
    BundleFamily,
    concatenate_lambda,
    family_K_upper_bound,
    normalize_family,
    verify_bundle_family_contact,
    verify_family_contact,
)
from .sums import (
    DarbouxChart,
    GluingMaps,
    SumSpec,
    assemble_summed_fibration,
    build_phi,
    build_upsilon,
    darboux_change,
    darboux_chart,
    verify_gluing_pullback,
)
from .scenario import ScenarioDocument, ScenarioError, load_scenario
from .runner import RunOptions, RunReport, emit_report, run_suite
