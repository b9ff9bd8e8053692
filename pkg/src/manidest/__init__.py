"""manidest: distribution estimation on unknown submanifolds under
Holder-smooth adversarial losses, with rate-probing simulation tools."""

from .charts import FittedChart, PolyChartClass, SplitIndices, active_set, fit_chart, split
from .density import (MomentKernel, TruncatedDensity, build_truncated_density, kde,
                      make_moment_kernel, truncation_level)
from .fitmodel import FittedModel, fit_model, lepski
from .geometry import Cover, PartitionOfUnity, build_partition, mollifier, sphere_cover
from .hardness import HardInstance, PackingCodes, bump_kernels, hard_instance, packing_codes
from .ipm import (DiscreteMeasure, DiscriminatorBudget, avg_hausdorff, budget_for, d_gamma,
                  support_discrepancy, w1_exact_1d, w1_small_lp)
from .mixture import RejectionMixture, SphereTruth, sample_mixture, sphere_truth
from .surrogate import (DictionaryFunction, Surrogate, SurrogateConfig, build_surrogate,
                        j_high, j_low, j_smooth, j_total, surrogate_table)
from .twosample import TestConfig, permutation_calibrate, statistic, threshold
from .wavelets import (BasisIndex, Expansion, WaveletFamily, active_indices, empirical_coeffs,
                       eval_basis, family, holder_bound, project)

__version__ = "0.1.0"
