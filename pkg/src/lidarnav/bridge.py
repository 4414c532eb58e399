"""Deployment bridge: newline-delimited JSON in, newline-delimited JSON out.

Inbound message types
    {"type": "odom", "t": <s>, "x": .., "y": .., "yaw": ..}
    {"type": "scan", "t": <s>, "ranges": [<beam_count> floats]}
    {"type": "goal", "x": .., "y": ..}

Outbound
    {"type": "cmd_vel", "v": .., "w": ..}
    {"type": "status", "state": ..., ...}

A command is computed when a scan arrives while a goal is active and both
the scan and the newest odom are within the staleness limit of the newest
timestamp seen; otherwise a "stale" status is emitted instead.  The bridge
feeds the policy its own last commanded action, mirroring what the
simulator's env does with its applied action, so a logged episode replayed
through the bridge reproduces the simulator's commands.
"""
from __future__ import annotations

import json
import math
import select
import socket
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .nn import HiddenState, PolicyWeights
from .policy_io import PolicyManifest, infer
from .robot import Action, Pose

#: Inputs older than this (seconds, message timestamps) are not acted on.
DEFAULT_STALENESS_LIMIT = 0.5


class BridgeProtocolError(ValueError):
    """Malformed inbound message; the bridge reports it and keeps running."""


@dataclass
class BridgeState:
    """Everything the bridge tracks between messages."""

    weights: PolicyWeights
    manifest: PolicyManifest
    staleness_limit: float = DEFAULT_STALENESS_LIMIT
    clock: float = field(default=-math.inf)
    odom: dict | None = None
    goal: tuple[float, float] | None = None
    prev_action: Action = field(default_factory=lambda: Action(0.0, 0.0))
    hidden: HiddenState | None = None


def _require_number(msg: dict, key: str) -> float:
    if key not in msg:
        raise BridgeProtocolError(f"missing field '{key}'")
    v = msg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise BridgeProtocolError(f"field '{key}' must be a finite number")
    return float(v)


def _parse_scan(state: BridgeState, msg: dict) -> tuple[float, np.ndarray]:
    t = _require_number(msg, "t")
    ranges = msg.get("ranges")
    k = state.manifest.lidar.beam_count
    if not isinstance(ranges, list) or len(ranges) != k:
        raise BridgeProtocolError(f"'ranges' must be a list of {k} numbers")
    arr = np.asarray(ranges, dtype=np.float64)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise BridgeProtocolError("'ranges' must contain finite numbers only")
    return t, arr


def _status(st: str, **extra) -> dict:
    out = {"type": "status", "state": st}
    out.update(extra)
    return out


def handle_message(state: BridgeState, msg) -> list[dict]:
    """Process one inbound message, mutate state, return outbound messages.

    Malformed input yields a single error status and leaves the state
    untouched; all validation happens before any mutation.
    """
    try:
        if not isinstance(msg, dict):
            raise BridgeProtocolError("message must be a JSON object")
        kind = msg.get("type")
        if kind == "odom":
            t = _require_number(msg, "t")
            odom = {"t": t, "x": _require_number(msg, "x"),
                    "y": _require_number(msg, "y"),
                    "yaw": _require_number(msg, "yaw")}
            state.odom = odom
            state.clock = max(state.clock, t)
            return []
        if kind == "goal":
            gx = _require_number(msg, "x")
            gy = _require_number(msg, "y")
            state.goal = (gx, gy)
            state.prev_action = Action(0.0, 0.0)
            shape = state.weights.shape
            state.hidden = (HiddenState.zeros(shape.recurrent_units)
                            if shape.recurrent else None)
            return [_status("goal_set", x=gx, y=gy)]
        if kind == "scan":
            t, ranges = _parse_scan(state, msg)
            state.clock = max(state.clock, t)
            return _on_scan(state, t, ranges)
        raise BridgeProtocolError(f"unknown message type {kind!r}")
    except BridgeProtocolError as exc:
        return [_status("error", message=str(exc))]


def _on_scan(state: BridgeState, t: float, ranges: np.ndarray) -> list[dict]:
    if state.goal is None:
        return []
    scan_stale = state.clock - t > state.staleness_limit
    odom_stale = (state.odom is None
                  or state.clock - state.odom["t"] > state.staleness_limit)
    if scan_stale or odom_stale:
        return [_status("stale_inputs", scan_stale=scan_stale,
                        odom_stale=odom_stale)]
    od = state.odom
    dist = math.dist((od["x"], od["y"]), state.goal)
    if dist < state.manifest.goal_radius:
        state.goal = None
        state.prev_action = Action(0.0, 0.0)
        state.hidden = None
        return [_status("goal_reached", goal_dist=dist),
                {"type": "cmd_vel", "v": 0.0, "w": 0.0}]
    pose = Pose(od["x"], od["y"], od["yaw"])
    action, state.hidden = infer(state.weights, state.manifest, ranges, pose,
                                 state.goal, state.prev_action, state.hidden)
    state.prev_action = action
    return [{"type": "cmd_vel", "v": action.v, "w": action.w}]


def encode(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"))


def _emit(outfile, messages: list[dict]) -> None:
    for m in messages:
        outfile.write(encode(m) + "\n")
    outfile.flush()


def serve(weights: PolicyWeights, manifest: PolicyManifest,
          infile=None, outfile=None,
          staleness_limit: float = DEFAULT_STALENESS_LIMIT,
          heartbeat: float = 1.0) -> int:
    """Serve one session over line streams (stdin/stdout by default).

    Emits a ready status, then one line per outbound message; a heartbeat
    status goes out roughly every `heartbeat` seconds of idle wall time
    (pass 0 to disable and run fully deterministically).  Returns 0 on
    clean EOF.
    """
    infile = sys.stdin if infile is None else infile
    outfile = sys.stdout if outfile is None else outfile
    state = BridgeState(weights, manifest, staleness_limit)
    _emit(outfile, [_status("ready", profile=manifest.profile.name,
                            beam_count=manifest.lidar.beam_count)])
    use_select = heartbeat > 0 and hasattr(infile, "fileno")
    last_beat = time.monotonic()
    while True:
        if use_select:
            ready, _, _ = select.select([infile], [], [], heartbeat)
            now = time.monotonic()
            if now - last_beat >= heartbeat:
                _emit(outfile, [_status("alive")])
                last_beat = now
            if not ready:
                continue
        line = infile.readline()
        if line == "":
            return 0
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(outfile, [_status("error", message=f"invalid JSON: {exc}")])
            continue
        _emit(outfile, handle_message(state, msg))


class _SocketLines:
    """Line-oriented reader over a socket with its own buffer (select-safe,
    unlike makefile which may hold buffered lines select cannot see)."""

    def __init__(self, conn: socket.socket):
        self.conn = conn
        self.buf = b""
        self.eof = False

    def pop_line(self) -> str | None:
        i = self.buf.find(b"\n")
        if i >= 0:
            line, self.buf = self.buf[:i], self.buf[i + 1:]
            return line.decode("utf-8", errors="replace")
        return None

    def fill(self) -> None:
        chunk = self.conn.recv(65536)
        if not chunk:
            self.eof = True
        self.buf += chunk


def serve_tcp(weights: PolicyWeights, manifest: PolicyManifest,
              host: str = "127.0.0.1", port: int = 0,
              staleness_limit: float = DEFAULT_STALENESS_LIMIT,
              heartbeat: float = 1.0, max_sessions: int | None = None,
              on_listen=None) -> int:
    """Single-session TCP server; concurrent connects get a busy status.

    on_listen, if given, receives the bound (host, port) before accepting
    (lets tests use port 0).  Serves max_sessions sessions then returns 0
    (forever when None).
    """
    served = 0
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(4)
        if on_listen is not None:
            on_listen(listener.getsockname())
        while max_sessions is None or served < max_sessions:
            conn, _ = listener.accept()
            with conn:
                _serve_tcp_session(conn, listener, weights, manifest,
                                   staleness_limit, heartbeat)
            served += 1
    return 0


def _serve_tcp_session(conn, listener, weights, manifest, staleness_limit,
                       heartbeat) -> None:
    state = BridgeState(weights, manifest, staleness_limit)
    reader = _SocketLines(conn)

    def send(messages: list[dict]) -> None:
        data = "".join(encode(m) + "\n" for m in messages)
        conn.sendall(data.encode())

    send([_status("ready", profile=manifest.profile.name,
                  beam_count=manifest.lidar.beam_count)])
    timeout = heartbeat if heartbeat > 0 else None
    last_beat = time.monotonic()
    while True:
        line = reader.pop_line()
        if line is None:
            if reader.eof:
                return
            ready, _, _ = select.select([conn, listener], [], [], timeout)
            if heartbeat > 0 and time.monotonic() - last_beat >= heartbeat:
                send([_status("alive")])
                last_beat = time.monotonic()
            if listener in ready:
                other, _ = listener.accept()
                with other:
                    other.sendall((encode(_status("busy")) + "\n").encode())
            if conn in ready:
                reader.fill()
            continue
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            send([_status("error", message=f"invalid JSON: {exc}")])
            continue
        send(handle_message(state, msg))
