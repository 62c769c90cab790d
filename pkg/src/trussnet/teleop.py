"""Human-in-the-loop steering over a socket.

The service runs the simulation loop continuously and accepts velocity
commands for one designated point.  The command enters the optimization
only as that point's local constraint; every other node learns of it purely
through the consensus rounds, and the broadcast exposes each node's local
plan so a client can draw how knowledge of the command spreads.

Wire protocol (JSON text over WebSocket):
  server -> client:
    {"type": "state", "t": <s>, "points": [[x, y], ...],
     "edges": [[i, j], ...], "plans": {"<node>": [[vx, vy], ...], ...},
     "command": [vx, vy], "targets": [...], "labels": [...]}
  client -> server:
    {"type": "command", "node": <id or label>, "v": [vx, vy]}

Commands older than the staleness timeout decay to zero velocity.  Two
clients follow last-writer-wins.  Slow clients are dropped rather than
allowed to stall the control loop.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .harness import RunRecord, SimulationLoop
from .scenario import Scenario

COMMAND_TIMEOUT_S = 0.5


@dataclass
class _Mailbox:
    """Latest-command slot shared between client I/O and the control loop."""

    v: np.ndarray
    stamp: float | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def write(self, v: np.ndarray, now: float) -> None:
        with self.lock:
            self.v = np.asarray(v, dtype=float)
            self.stamp = now

    def read(self, now: float, timeout: float) -> np.ndarray:
        with self.lock:
            if self.stamp is None or now - self.stamp > timeout:
                return np.zeros_like(self.v)
            return self.v.copy()


class TeleopSession:
    """One steerable simulation: a loop, a designated point, a command slot."""

    def __init__(
        self,
        scenario: Scenario,
        point: int,
        command_timeout: float = COMMAND_TIMEOUT_S,
    ):
        n_points = scenario.graph.n if scenario.tube is None else scenario.tube.num_points
        if not (0 <= point < n_points):
            raise ValueError(f"designated point {point} does not exist")
        self.scenario = scenario
        self.point = point
        self.command_timeout = command_timeout
        self.loop = SimulationLoop(scenario)
        self.mailbox = _Mailbox(v=np.zeros(scenario.graph.dim))

    def resolve_point(self, ref) -> int:
        return self.scenario._resolve_point(ref)

    def submit(self, ref, v, now: float) -> None:
        """Accept a command if it addresses the designated point."""
        target = self.resolve_point(ref)
        if target != self.point:
            raise ValueError(
                f"commands are accepted for {self.scenario._point_name(self.point)!r} only"
            )
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != self.scenario.graph.dim or not np.all(np.isfinite(v)):
            raise ValueError("malformed velocity")
        self.mailbox.write(v, now)

    def tick(self, now: float) -> dict:
        """Advance one control period and return the broadcast message."""
        v = self.mailbox.read(now, self.command_timeout)
        step = self.loop.step([(self.point, v)])
        return self.state_message(step, v)

    def state_message(self, step, command_v) -> dict:
        sc = self.scenario
        dim = sc.graph.dim
        graph = sc.graph if sc.tube is None else sc.tube.graph
        points = step.true_x.reshape(-1, dim)
        plans = {
            str(i + 1): self.loop.plan_warm[i].reshape(-1, dim).tolist()
            for i in range(sc.num_nodes)
        }
        labels = (
            list(sc.tube.point_labels)
            if sc.tube is not None
            else [str(i + 1) for i in range(sc.graph.n)]
        )
        return {
            "type": "state",
            "t": step.t,
            "points": points.tolist(),
            "edges": [[i, j] for i, j in graph.edges],
            "plans": plans,
            "command": np.asarray(command_v, dtype=float).tolist(),
            "commanded_point": self.point,
            "targets": sc.targets,
            "labels": labels,
        }


def headless_replay(scenario: Scenario, command_log, point: int) -> RunRecord:
    """Drive a session from a timestamped command log instead of a UI.

    The log is a sorted sequence of {"t": seconds, "v": [..]} entries (an
    optional "node"/"point" field must name the designated point).  At each
    control period the most recent non-stale entry applies.  Deterministic:
    the same log always produces the same record.
    """
    entries = list(command_log)
    times = [float(e["t"]) for e in entries]
    if times != sorted(times):
        raise ValueError("command log must be sorted by time")
    session = TeleopSession(scenario, point)
    for e in entries:
        ref = e.get("node", e.get("point"))
        if ref is not None and session.resolve_point(ref) != point:
            raise ValueError("log entry addresses a point other than the designated one")

    idx = 0
    latest: dict | None = None
    for k in range(scenario.steps):
        now = k * scenario.dt
        while idx < len(entries) and times[idx] <= now:
            latest = entries[idx]
            idx += 1
        if latest is not None and now - float(latest["t"]) <= session.command_timeout:
            session.mailbox.write(np.asarray(latest["v"], dtype=float), now)
        session.tick(now)
    return session.loop.record


def build_app(session: TeleopSession, hz: float):
    """FastAPI app exposing the session on /ws, control loop in a thread."""
    clients: set[asyncio.Queue] = set()
    clients_lock = threading.Lock()
    stop = threading.Event()

    def control_loop(loop: asyncio.AbstractEventLoop):
        period = 1.0 / hz
        next_tick = time.monotonic()
        while not stop.is_set():
            message = json.dumps(session.tick(time.monotonic()))
            with clients_lock:
                live = list(clients)
            for q in live:
                def offer(q=q, message=message):
                    if q.full():
                        try:
                            q.get_nowait()  # drop the oldest frame
                        except asyncio.QueueEmpty:
                            pass
                    q.put_nowait(message)
                loop.call_soon_threadsafe(offer)
            next_tick += period
            delay = next_tick - time.monotonic()
            if delay > 0:
                stop.wait(delay)
            else:
                next_tick = time.monotonic()  # fell behind; don't burst

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        thread = threading.Thread(
            target=control_loop, args=(asyncio.get_running_loop(),), daemon=True
        )
        thread.start()
        yield
        stop.set()
        thread.join(timeout=2.0)

    app = FastAPI(title="truss teleoperation", lifespan=lifespan)
    app.state.session = session

    @app.websocket("/ws")
    async def ws_endpoint(socket: WebSocket):
        await socket.accept()
        queue: asyncio.Queue = asyncio.Queue(maxsize=4)
        with clients_lock:
            clients.add(queue)

        async def sender():
            while True:
                await socket.send_text(await queue.get())

        task = asyncio.create_task(sender())
        try:
            while True:
                raw = await socket.receive_text()
                try:
                    msg = json.loads(raw)
                    if msg.get("type") != "command":
                        raise ValueError(f"unknown message type {msg.get('type')!r}")
                    session.submit(msg["node"], msg["v"], time.monotonic())
                except Exception as exc:
                    await socket.send_text(
                        json.dumps({"type": "error", "detail": str(exc)})
                    )
        except WebSocketDisconnect:
            pass
        finally:
            task.cancel()
            with clients_lock:
                clients.discard(queue)

    return app


def serve(scenario: Scenario, point: int, port: int, hz: float = 10.0, host: str = "127.0.0.1"):
    """Run the teleoperation service until interrupted."""
    import uvicorn

    session = TeleopSession(scenario, point)
    app = build_app(session, hz)
    uvicorn.run(app, host=host, port=port, log_level="warning")
