"""Linear contextual bandit lab.

Policies (a variable-confidence SupLinUCB, classical SupLinUCB, LinUCB and
uniform play), hard instance families with their interval-tree parameters,
an elliptical potential checker, and a reproducible Monte Carlo harness.
"""

from .adversarial import (
    AdversarialInstance,
    LowerBoundParams,
    exact_kl_path,
    instance_d2,
    instance_general,
    instance_phased,
    is_s_suboptimal,
    kl_upper_bound,
    margin_floor,
    s_segment_regret,
    sample_params,
    shared_stage,
    stage_partition,
    zt_schedule,
)
from .core import ArrayInstance, Instance, RandomInstance, RegretTrace, mix_seed, simulate
from .design import DesignState
from .errors import BanditError, ConfigError, ConstructionError, DimensionError, ProtocolError
from .harness import (
    ExperimentConfig,
    ResultRow,
    fit_scaling_exponent,
    lowerbound_eval,
    run_experiment,
    sweep,
)
from .policies import LinUCBPolicy, RandomPolicy, SupLinUCB, VCLSupLinUCB, make_policy
from .potential import PotentialReport, elliptical_report, tightness_report

__version__ = "0.1.0"
