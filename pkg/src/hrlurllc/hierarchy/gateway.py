"""Newline-delimited JSON link between the simulator and an external agent.

The simulator side listens; each external agent opens one connection, says
``hello`` and then answers every ``state`` with exactly one ``action`` for
the same step.  ``reset`` starts a new episode, ``bye`` ends the session
(optionally carrying an ``error`` diagnostic).
"""
from __future__ import annotations

import json
import socket
import threading
from typing import Sequence

import numpy as np

from ..learn.replay import MID_EPISODE
from .orchestrator import SignalLedger

KINDS = ("hello", "state", "action", "reset", "bye")
_REQUIRED = {
    "hello": ("role", "agent_id"),
    "state": ("agent_id", "step", "features", "reward"),
    "action": ("agent_id", "step", "values"),
    "reset": ("seed",),
    "bye": (),
}


class ProtocolError(RuntimeError):
    pass


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host, int(port)


def encode(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def decode(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message: {exc}") from None
    if not isinstance(msg, dict):
        raise ProtocolError("message must be a JSON object")
    kind = msg.get("kind")
    if kind not in KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}")
    missing = [k for k in _REQUIRED[kind] if k not in msg]
    if missing:
        raise ProtocolError(f"{kind} message lacks {missing}")
    return msg


class LockstepSession:
    """Protocol state of one agent link; both ends run the same checks."""

    def __init__(self) -> None:
        self.agent_id: str | None = None
        self.pending: int | None = None  # step awaiting its action
        self.next_step = 0
        self.closed = False

    def check(self, msg: dict) -> None:
        kind = msg["kind"]
        if self.closed:
            raise ProtocolError("session already closed")
        if kind == "hello":
            if self.agent_id is not None:
                raise ProtocolError("duplicate hello")
            self.agent_id = str(msg["agent_id"])
            return
        if self.agent_id is None:
            raise ProtocolError(f"{kind} before hello")
        if kind == "bye":
            self.closed = True
            return
        if kind == "reset":
            if self.pending is not None:
                raise ProtocolError(f"reset while step {self.pending} awaits an action")
            self.next_step = 0
            return
        if str(msg["agent_id"]) != self.agent_id:
            raise ProtocolError(f"message for agent {msg['agent_id']!r} on {self.agent_id!r} link")
        step = msg["step"]
        if kind == "state":
            if self.pending is not None:
                raise ProtocolError(f"state {step} while step {self.pending} awaits an action")
            if step != self.next_step:
                raise ProtocolError(f"state for step {step}, expected {self.next_step}")
            self.pending = step
        else:
            if self.pending is None or step != self.pending:
                raise ProtocolError(f"action for step {step}, awaiting {self.pending}")
            self.pending = None
            self.next_step = step + 1


class _Link:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.reader = sock.makefile("rb")

    def send(self, msg: dict) -> None:
        self.sock.sendall(encode(msg))

    def receive(self) -> dict:
        line = self.reader.readline()
        if not line:
            raise ProtocolError("peer closed the connection")
        return decode(line)

    def close(self) -> None:
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class RemoteAgent:
    """Simulator-side stand-in for an agent that lives behind the gateway."""

    def __init__(self, agent_id: str, level_sets: Sequence[Sequence], link: _Link,
                 session: LockstepSession, ledger: SignalLedger, phase: str = "train"):
        self.agent_id = agent_id
        self.level_sets = tuple(tuple(s) for s in level_sets)
        self.link = link
        self.session = session
        self.ledger = ledger
        self.phase = phase
        self._reward: float | None = None
        self._step = 0

    def _send(self, msg: dict) -> None:
        self.session.check(msg)
        self.link.send(msg)
        self.ledger.record("uplink", self.agent_id, self.phase)

    def _fail(self, detail: str) -> None:
        try:
            self.link.send({"kind": "bye", "error": detail})
        except OSError:
            pass
        self.session.closed = True
        self.link.close()
        raise ProtocolError(detail)

    def begin_episode(self, seed: int, phase: str | None = None) -> None:
        """Announce a new episode; ``phase`` tells the agent whether to explore."""
        self._reward = None
        self._step = 0
        msg = {"kind": "reset", "seed": int(seed)}
        if phase is not None:
            self.phase = phase
            msg["phase"] = phase
        self._send(msg)

    def store(self, state, action_idx, reward: float, next_state, kind: int = MID_EPISODE) -> None:
        self._reward = float(reward)

    def learn_step(self):
        return None

    def act_indices(self, state, explore: bool = False) -> np.ndarray:
        self._send({"kind": "state", "agent_id": self.agent_id, "step": self._step,
                    "features": [float(x) for x in state], "reward": self._reward})
        self._reward = None
        try:
            reply = self.link.receive()
            self.session.check(reply)
        except ProtocolError as exc:
            self._fail(str(exc))
        self.ledger.record("downlink", self.agent_id, self.phase)
        if reply["kind"] != "action":
            self._fail(f"expected action, got {reply['kind']}")
        values = reply["values"]
        if len(values) != len(self.level_sets):
            self._fail(f"action has {len(values)} values, expected {len(self.level_sets)}")
        idx = []
        for levels, v in zip(self.level_sets, values):
            if v not in levels:
                self._fail(f"value {v!r} not among levels {list(levels)}")
            idx.append(levels.index(v))
        self._step += 1
        return np.array(idx)

    def act(self, state, explore: bool = False) -> list:
        return [levels[i] for levels, i in zip(self.level_sets, self.act_indices(state, explore))]

    def close(self) -> None:
        if not self.session.closed:
            try:
                self._send({"kind": "bye"})
            except OSError:
                pass
        self.link.close()


class GatewayServer:
    """Simulator-side listener.  ``wire_ledger`` counts every message sent or
    received, under a lock, across all sessions."""

    def __init__(self, endpoint: str = "127.0.0.1:0", timeout_s: float = 30.0):
        host, port = parse_endpoint(endpoint)
        self.timeout_s = timeout_s
        self.sock = socket.create_server((host, port))
        self.sock.settimeout(timeout_s)
        self.wire_ledger = SignalLedger()
        self.agents: dict[str, RemoteAgent] = {}

    @property
    def endpoint(self) -> str:
        host, port = self.sock.getsockname()[:2]
        return f"{host}:{port}"

    def accept(self, level_sets_by_id: dict[str, Sequence[Sequence]]) -> dict[str, RemoteAgent]:
        """Wait until every listed agent id has connected and said hello."""
        waiting = dict(level_sets_by_id)
        while waiting:
            conn, _ = self.sock.accept()
            conn.settimeout(self.timeout_s)
            link = _Link(conn)
            session = LockstepSession()
            hello = link.receive()
            try:
                session.check(hello)
                if hello["kind"] != "hello":
                    raise ProtocolError(f"expected hello, got {hello['kind']}")
                agent_id = str(hello["agent_id"])
                if agent_id not in waiting:
                    raise ProtocolError(f"unexpected agent id {agent_id!r}")
            except ProtocolError as exc:
                link.send({"kind": "bye", "error": str(exc)})
                link.close()
                raise
            self.wire_ledger.record("downlink", agent_id, "handshake")
            self.agents[agent_id] = RemoteAgent(agent_id, waiting.pop(agent_id), link, session,
                                                self.wire_ledger)
        return {k: self.agents[k] for k in level_sets_by_id}

    def close(self) -> None:
        for agent in self.agents.values():
            agent.close()
        self.sock.close()


def gateway_connect(endpoint: str, agent_id: str, agent, explore: bool = False,
                    learn: bool = False, updates: int = 1, timeout_s: float = 30.0) -> int:
    """Serve ``agent`` to a simulator at ``endpoint`` until it says bye.

    With ``learn`` the agent stores each transition and trains before acting,
    in the same order as in-process orchestration.  A ``reset`` carrying
    ``phase="eval"`` switches to greedy, non-learning play for that episode
    and ``phase="train"`` switches back.  Returns the number of actions sent.
    """
    host, port = parse_endpoint(endpoint)
    link = _Link(socket.create_connection((host, port), timeout=timeout_s))
    session = LockstepSession()
    hello = {"kind": "hello", "role": "agent", "agent_id": agent_id}
    session.check(hello)
    link.send(hello)
    n_actions = 0
    prev = None
    episode_explore, episode_learn = explore, learn
    try:
        while True:
            msg = link.receive()
            try:
                session.check(msg)
            except ProtocolError as exc:
                link.send({"kind": "bye", "error": str(exc)})
                raise
            kind = msg["kind"]
            if kind == "bye":
                if "error" in msg:
                    raise ProtocolError(f"simulator closed the session: {msg['error']}")
                return n_actions
            if kind == "reset":
                prev = None
                phase = msg.get("phase")
                episode_explore = explore if phase is None else explore and phase == "train"
                episode_learn = learn if phase is None else learn and phase == "train"
                continue
            if kind != "state":
                raise ProtocolError(f"agent cannot handle {kind}")
            state = np.array(msg["features"], dtype=float)
            if episode_learn and prev is not None and msg["reward"] is not None:
                agent.store(prev[0], prev[1], msg["reward"], state, MID_EPISODE)
                for _ in range(updates):
                    if agent.learn_step() is None:
                        break
            idx = agent.act_indices(state, episode_explore)
            prev = (state, idx)
            values = [levels[int(i)] for levels, i in zip(agent.level_sets, idx)]
            reply = {"kind": "action", "agent_id": agent_id, "step": msg["step"], "values": values}
            session.check(reply)
            link.send(reply)
            n_actions += 1
    finally:
        link.close()


def start_loopback(endpoint: str, agent_id: str, agent, **kwargs) -> threading.Thread:
    """Run :func:`gateway_connect` on a daemon thread; errors are kept on
    ``thread.error``."""
    def target() -> None:
        try:
            thread.actions = gateway_connect(endpoint, agent_id, agent, **kwargs)
        except Exception as exc:  # surfaced to the caller via thread.error
            thread.error = exc

    thread = threading.Thread(target=target, name=f"loopback-{agent_id}", daemon=True)
    thread.error = None
    thread.actions = 0
    thread.start()
    return thread
