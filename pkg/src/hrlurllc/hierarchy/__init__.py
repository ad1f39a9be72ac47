from .gateway import (GatewayServer, LockstepSession, ProtocolError, RemoteAgent, decode, encode,
                      gateway_connect, parse_endpoint, start_loopback)
from .orchestrator import (AgentPlacement, ConvergenceDetector, EpisodeLog, Interaction,
                           PlacementError, SignalLedger, count_signals, detect_convergence,
                           joint_convergence, low_agent_name, run_episode)
from .training import TrainingRun, agent_specs, build_agents, episode_seed, evaluate, train

__all__ = ["AgentPlacement", "ConvergenceDetector", "EpisodeLog", "GatewayServer", "Interaction",
           "LockstepSession", "PlacementError", "ProtocolError", "RemoteAgent", "SignalLedger",
           "TrainingRun", "agent_specs", "build_agents", "count_signals", "decode",
           "detect_convergence", "encode", "episode_seed", "evaluate", "gateway_connect",
           "joint_convergence", "low_agent_name", "parse_endpoint", "run_episode",
           "start_loopback", "train"]
