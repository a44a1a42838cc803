"""Decision regret of probabilistic binary classifiers.

Estimates how much expected utility is lost by thresholding a classifier's
scores, splits that loss into a miscalibration part and a grouping-loss part
with bounds, and fits post-training corrections (recalibration, threshold
adjustment, GLAR).
"""

from .binning import EqualMassBinning, estimate_calibration_curve, fit_equal_mass_bins
from .dataset import ScoredDataset, ScoredSample, SplitSpec, load, load_csv, save_csv, split
from .decision import ThresholdRule, UtilityMatrix, empirical_eu, optimal_threshold, utility_matrix_from_tstar
from .grouping import estimate_gl, fit_partition, glar_apply, glar_fit, glat_threshold
from .pipeline import TSTAR_GRID
from .regret import advise, regret_report
from .synthetic import OracleDistribution, exact_regrets, exact_stats

__version__ = "0.1.0"

__all__ = [
    "EqualMassBinning", "estimate_calibration_curve", "fit_equal_mass_bins",
    "ScoredDataset", "ScoredSample", "SplitSpec", "load", "load_csv", "save_csv", "split",
    "ThresholdRule", "UtilityMatrix", "empirical_eu", "optimal_threshold",
    "utility_matrix_from_tstar",
    "estimate_gl", "fit_partition", "glar_apply", "glar_fit", "glat_threshold",
    "advise", "regret_report",
    "TSTAR_GRID",
    "OracleDistribution", "exact_regrets", "exact_stats",
]
