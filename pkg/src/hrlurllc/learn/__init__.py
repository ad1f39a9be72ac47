from .mlp import Mlp
from .replay import ReplayBuffer, MID_EPISODE, TRUNCATED, TERMINAL
from .sac import AgentHyperparams, BranchingHead, BranchingSacAgent, DivergenceError, FixedAgent
from .tabular import TabularSoftQ

__all__ = ["Mlp", "ReplayBuffer", "MID_EPISODE", "TRUNCATED", "TERMINAL", "AgentHyperparams",
           "BranchingHead", "BranchingSacAgent", "DivergenceError", "FixedAgent", "TabularSoftQ"]
