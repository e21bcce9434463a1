"""Locally private Bayesian Poisson factorization.

Counts are privatized with two-sided geometric noise; the sampler treats the
true counts as latent and imputes them with Bessel/binomial/gamma steps
between the usual conjugate factor updates.
"""

__version__ = "0.1.0"

from privpf.counts import CountMatrix
from privpf.distributions import (Bessel, Skellam, TwoSidedGeometric, bessel_log_pmf,
                                  bessel_sample, log_bessel_i, skellam_log_pmf, skellam_sample,
                                  two_sided_geometric_log_pmf, two_sided_geometric_sample)
from privpf.evaluation import (TopicTopWords, coherence, heldout_mask_top_senders, mae, npmi,
                               topic_quality)
from privpf.exceptions import (CapacityError, ConfigurationError, CoverageError, DomainError,
                               FormatError, ImpossibleStateError, NumericalFailureError,
                               PrivPFError)
from privpf.inversion import EntryAuxState, entry_gibbs_sweep, init_aux_state
from privpf.mcmc import SampleTrace, Schedule, posterior_mean_rates, run
from privpf.models import (GammaPoissonTopicModel, MaskSpec, MixedMembershipBlockModel,
                           make_model)
from privpf.privacy import (PrivacyParams, PrivatizedMatrix, alpha_from_budget, privatize,
                            truncate, verify_privacy_ratio)
