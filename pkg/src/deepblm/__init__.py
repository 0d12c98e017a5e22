"""Layer-wise training and evaluation of two-layer deep generative models.

Stacked RBMs and generative auto-encoders over binary/soft data, scored by
exact log-likelihood and by the best-latent-marginal upper bound, with a
random-search harness reproducing desk-scale benchmark experiments.
"""

__version__ = "0.1.0"

from .blm import (
    BlmOracleResult,
    GenerativeLayer,
    InferenceModel,
    MixturePosterior,
    TabularDistribution,
    blm_bound_exact,
    blm_bound_sampled,
    blm_oracle,
    data_incorporation_step,
    generative_from_rbm,
    inference_from_rbm,
    kl_gap_bound,
    layerwise_p1_ll,
    mixture_from,
)
from .datasets import (
    SoftDataset,
    SplitSpec,
    baseline_uniform,
    build_cmnist,
    fit_independent_bernoulli,
    gen_tea,
    independent_bernoulli_ll,
    perfect_model_ll_tea,
    split,
)
from .deepmodel import (
    DeepGenModel,
    deep_ll_exact,
    deep_sample,
    extract_target,
    full_gradient_oracle,
    param_count,
)
from .harness import (
    ExperimentRecord,
    HyperParams,
    deepness_check,
    pareto_front,
    run_trial,
    run_trials,
    sample_hyperparams,
    train_model,
)
from .nets import Aeri, VanillaAe, as_generative_layer, as_inference_model, train_autoassociator
from .numerics import RngState, bernoulli_xent, log_sum_exp, sigmoid
from .rbm import (
    AisEstimate,
    Rbm,
    ais_log_partition,
    cd_k_train,
    cond_hidden,
    cond_visible,
    exact_ll,
    gibbs_sample,
    init_rbm,
    log_partition_exact,
)

__all__ = [name for name in dir() if not name.startswith("_")]
