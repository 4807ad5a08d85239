"""Energy-based continuous inverse optimal control for driving trajectories.

Learns trajectory cost functions from expert demonstrations by maximum
likelihood: synthesized trajectories are drawn from the current cost by
Langevin sampling (or produced by gradient descent / iLQR), and the
parameters move along the feature difference between synthesized and
observed behavior. Includes a cooperative trajectory-generator
initializer and a joint multi-agent extension.
"""

from ._kernels import USING_NUMBA
from .cost import ConvCost, LinearCost, MlpCost, create_model, grad_wrt_controls, grad_wrt_params
from .dynamics import DynamicsVariant, infer_controls, step, step_jacobians, unroll
from .features import FEATURE_NAMES, FeatureNormalizer, fit_normalizer
from .generator import PolicyGenerator, generate, generator_loss_grad, train_cooperative
from .learning import TrainConfig, estimate_likelihood_grad, train_ebm
from .multiagent import JointScene, joint_cost, joint_solve, train_multiagent
from .optim import AdamState, adam_step
from .problem import Problem, from_demonstration, from_scene
from .sampler import SamplerConfig, SolverResult, gd_optimize, ilqr_solve, langevin_sample
from .types import (Control, ControlBounds, ControlSequence, Demonstration, Environment,
                    History, OtherVehicleTrack, State, Trajectory, load_dataset,
                    save_dataset, to_absolute, to_delta, validate_demonstration)

__version__ = "0.1.0"
