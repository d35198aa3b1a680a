"""Metrics and the ablation harness."""

from .metrics import MetricsReport, accuracy, program_match, roc_auc, varg_auc
from .ablation import (SUPERVISION_ROWS, TAP_ROWS, AblationRow, AblationSpec, AblationTable, run_ablation,
                       write_ablation)
