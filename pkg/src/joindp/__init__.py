"""Differentially private synthetic data for linear queries over natural joins."""

from .errors import (
    AttributeNotInSchema,
    BadInterval,
    ConfigDomainMismatch,
    DegenerateFamily,
    DomainTooLarge,
    InfeasibleDelta,
    InfeasibleSpec,
    InfeasibleVector,
    JoinDpError,
    NonFiniteScore,
    NonPositiveDegree,
    NonPower,
    NotHierarchical,
    ParseError,
    SchemaNotTwoTableChain,
    SupportTooLarge,
    WrongArity,
)
from .noise import (
    PrivacyParams,
    RngStream,
    exp_mechanism,
    sample_laplace,
    sample_tlap,
    tau,
)
from .relational import (
    Attribute,
    Instance,
    JoinQuery,
    JoinTable,
    Relation,
    boundary_attrs,
    boundary_query,
    count,
    degree,
    join_materialize,
    neighbor,
)
from .sensitivity import (
    SensitivityReport,
    local_sensitivity,
    residual_sensitivity,
    residual_sensitivity_report,
    residual_sensitivity_two_table,
    two_table_max_degree,
)
from .queries import (
    FamilyEvaluator,
    LinearQuery,
    QueryFamily,
    counting_family,
    counting_query,
    eval_instance,
    eval_synthetic,
    interval_family,
    max_error,
    prefix_interval_family,
    random_sign_family,
    worst_query,
)
from .pmw import (
    PmwResult,
    SyntheticDistribution,
    default_iterations,
    mw_update,
    pmw,
)
from .pipelines import (
    BudgetEntry,
    PartitionResult,
    ReleaseReport,
    ReleaseResult,
    bucket_index,
    partition_two_table,
    release_multi_table,
    release_two_table,
    release_uniformized_two_table,
)
from .hierarchy import (
    DegreeConfiguration,
    Forest,
    ForestNode,
    HierarchicalPartition,
    attribute_forest,
    decompose,
    hdegree,
    is_hierarchical,
    max_hdegree,
    multiplicity_budget,
    partition_hierarchical,
    release_uniformized_hierarchical,
    rs_under_config,
    symbolic_T_bound,
)
from .instances import (
    SingleTable,
    error_envelope_two_table,
    f_lower,
    f_upper,
    gen_bucket_conforming,
    gen_gap,
    gen_multi_table_lb,
    gen_staircase,
    gen_two_table_lb,
    lift_single_table_query,
)
from .serialize import (
    family_from_json,
    family_to_json,
    instance_from_json,
    instance_to_json,
    load_family,
    load_instance,
    report_to_json,
    save_family,
    save_instance,
    save_report,
    synthetic_to_csv,
)
from .bench import (
    ERROR_TABLE_COLUMNS,
    PIPELINES,
    ErrorRow,
    median,
    nominal_domain_size,
    render_figure,
    run_experiment,
    summarize,
    write_error_table,
)

__version__ = "0.1.0"
