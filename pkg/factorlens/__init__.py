"""Import main functions."""

from .core import (
    CovMatrix,
    Dataset,
    EigenSystem,
    FactorModelEstimate,
    avg_loglik,
    eigh_desc,
    expected_loglik,
    gaussian_loglik,
    kl_divergence,
    loglik_per_sample,
    logdet,
    sample_covariance,
)
from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    FactorLensError,
    InputError,
    OracleError,
    ParameterError,
    SelectionError,
)
from .findata import PriceTable, ReturnPanel, clip_bounds, preprocess_prices
from .io import load_dataset, load_price_table, save_dataset, save_estimate
from .metrics import (
    EdrResult,
    ExperimentReport,
    aggregate,
    equivalent_data_requirement,
    paired_difference,
    summarize,
)
from .nonuniform import (
    ScalingMatrix,
    em_fit,
    gstep_solve,
    mrh_fit,
    scaled_utm_fit,
    stm_fit,
    stm_objective,
    tm_fit,
    tstep_solve,
)
from .selection import (
    HoldoutPlan,
    Learner,
    WindowSpec,
    holdout_select,
    param_grid,
    realdata_protocol,
    sliding_window_test,
)
from .synth import GroundTruth, SynthSpec, gen_nonuniform, gen_uniform, generate
from .uniform import (
    UtmSolution,
    lambda_grid_around,
    lambda_search_center,
    urm_fit,
    urm_path,
    utm_fit,
    utm_path,
)
