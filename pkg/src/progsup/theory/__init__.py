"""Numerical companions to the sample-complexity analysis of multi-mode reasoning."""

from .constants import (chi2_moment, gamma_constant, khatri_rao, khatri_rao_power, kron_power,
                        mc_gamma_constant, verify_identity_chain)
from .curves import (CurveConfig, CurvePoint, MLPResult, ModeClassifier, RegressionData, TwoLayerNet,
                     curve_csv, fit_mode_classifier, init_two_layer, sample_complexity_curve, sample_task,
                     train_overparam_mlp)
from .functions import (MultiModeFunction, PolyTerm, ReasoningMode, eval_function, eval_mixture,
                        gen_multimode, mode_logits, mode_modules, mode_posteriors, separated_directions,
                        unit_rows)
from .ntk import (BoundReport, BoundValue, RkhsNorm, bound_sweep, bound_thm41, bound_thm42, check_bound,
                  empirical_rkhs_norm, function_complexity, gram_infty, mc_gram_infty, rkhs_norm_info,
                  term_complexity)
