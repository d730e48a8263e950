"""Spectral statistics of 1D lattice Anderson models.

Library layout:

* ``model``    -- site distributions, reproducible sampling, operator assembly
* ``tridiag``  -- Sturm counting, bisection eigenvalues, inverse iteration
* ``transfer`` -- transfer-matrix cocycles, log-norms, Lyapunov exponents
* ``spectral`` -- IDS/DOS estimators, localization, spectral averaging
* ``ensemble`` -- seeded Monte Carlo scaling experiments
* ``cli``      -- the ``anderson-spectra`` command-line runner
"""

__version__ = "0.1.0"

from .model import (SiteDistribution, PotentialSample, TridiagonalOperator,
                    sample_potential, assemble_operator, cdf,
                    holder_certificate, parse_distribution,
                    format_distribution, DistributionFormatError,
                    CANTOR_EXPONENT)
from .tridiag import (EigenPair, SpectrumSlice, EigensolverError, sturm_count,
                      count_in_interval, eigenvalues_in_interval, eigenvector,
                      eigenpairs_in_interval, full_spectrum, min_spacing,
                      interlacing_check)
from .transfer import (Transfer2x2, CocycleState, one_step, initial_state,
                       propagate, char_poly_value, log_norm,
                       log_norm_derivative, lyapunov_exponent,
                       large_deviation_fraction, direction_ratio_samples)
from .spectral import (IDSEstimate, DOSEstimate, LocalizationProfile,
                       WronskianDiagnostic, estimate_ids, estimate_dos,
                       holder_exponent_of_ids, estimate_holder_fit,
                       localization_profile, box_restriction_residual,
                       spectral_average, wronskian_check,
                       lemma6_event_probability)
from .ensemble import (ExperimentConfig, EnsembleSummary, PoissonDiagnostics,
                       BlockDiagnostics, RepulsionResult, InterlacingResult,
                       PartitionError, wegner_probability, minami_moment,
                       expected_count, two_eigenvalue_probability,
                       poisson_local_statistics, independent_block_process,
                       bernoulli_min_spacing, repulsion_scatter,
                       interlacing_property_run)
