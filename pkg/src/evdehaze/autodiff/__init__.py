from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .engine import Param, Var, as_var, backward, no_grad
from .gradcheck import GradCheckReport, grad_check
from .optim import OptimizerError, OptimizerState, adamw_step, zero_grads

__all__ = [
    "GradCheckReport", "OptimizerError", "OptimizerState", "Param", "Var", "adamw_step",
    "as_var", "backward", "grad_check", "load_checkpoint", "no_grad", "ops",
    "save_checkpoint", "zero_grads",
]
