"""Simulation and PPO training stack for 8-propeller free-flyer docking."""

from .config import AblationConfig, RunConfig, ablation_preset, load_run_config
from .env import DockEnv, EnvConfig, NoiseConfig, VecDockEnv
from .ppo import PPOConfig, train
from .propulsion import PolarityMode, PropulsionConfig, default_layout
from .rewards import RewardConfig

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "RunConfig",
    "ablation_preset",
    "load_run_config",
    "DockEnv",
    "VecDockEnv",
    "EnvConfig",
    "NoiseConfig",
    "PPOConfig",
    "train",
    "PolarityMode",
    "PropulsionConfig",
    "default_layout",
    "RewardConfig",
    "__version__",
]
