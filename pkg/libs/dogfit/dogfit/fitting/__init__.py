from .config import FitSettings, StageConfig, load_settings
from .pipeline import MotionSolution, StageLog, fit_sequence, run_stage

__all__ = ["FitSettings", "MotionSolution", "StageConfig", "StageLog", "fit_sequence", "load_settings", "run_stage"]
