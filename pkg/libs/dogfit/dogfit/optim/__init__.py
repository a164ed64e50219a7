from .engine import ParamGroup, StageOptimizer, adam_step, gradient, lr_multiplier

__all__ = ["ParamGroup", "StageOptimizer", "adam_step", "gradient", "lr_multiplier"]
