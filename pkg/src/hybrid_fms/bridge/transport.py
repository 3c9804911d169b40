"""The simulator behind a loopback socket.

Each frame holds one XML message. The server greets with
``SYNC(hsa, clock, hello)``. Per lock-step round the client sends its
ACTION-COMMANDs followed by ``SYNC(ha, until, step)`` (``until`` is -1 for
no horizon); the server answers with the SIM-EVENTs of one step and
``SYNC(hsa, clock, status)``. ``SYNC(ha, ..., close)`` ends the session.
"""
from __future__ import annotations

import socket
import threading
from typing import Optional

from ..mes.system import DivergenceError
from ..petri.engine import Simulator
from ..petri.net import SimEvent
from .coupling import LocalEndpoint
from .framing import FramedSocket
from .xmlcodec import ActionCommand, Sync, parse, serialize

NO_HORIZON = -1


class HsaServer:
    """Serves one client connection from a background thread."""

    def __init__(self, sim: Simulator, host: str = "127.0.0.1", port: int = 0):
        self.local = LocalEndpoint(sim)
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self.error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._serve, name="hsa-server", daemon=True)

    def start(self) -> "HsaServer":
        self._thread.start()
        return self

    def join(self, timeout: Optional[float] = None) -> None:
        self._thread.join(timeout)

    def _serve(self) -> None:
        try:
            conn, _ = self._listener.accept()
        finally:
            self._listener.close()
        fs = FramedSocket(conn)
        try:
            fs.send(serialize(Sync("hsa", self.local.clock, "hello")))
            rejected: Optional[str] = None
            while True:
                msg = parse(fs.recv())
                if isinstance(msg, ActionCommand):
                    try:
                        self.local.apply(msg)
                    except DivergenceError as exc:
                        rejected = str(exc)
                    continue
                if not isinstance(msg, Sync):
                    raise DivergenceError(f"server got unexpected {type(msg).__name__}")
                if msg.status == "close":
                    return
                if rejected is not None:
                    fs.send(serialize(Sync("hsa", self.local.clock, f"rejected: {rejected}")))
                    return
                until = None if msg.clock == NO_HORIZON else msg.clock
                events, status = self.local.step(until)
                for ev in events:
                    fs.send(serialize(ev))
                fs.send(serialize(Sync("hsa", self.local.clock, status)))
        except BaseException as exc:  # surfaced to the caller through .error
            self.error = exc
        finally:
            fs.close()


class RemoteEndpoint:
    """Client side: same interface as the in-process endpoint."""

    def __init__(self, address):
        self.fs = FramedSocket(socket.create_connection(address))
        hello = parse(self.fs.recv())
        if not isinstance(hello, Sync) or hello.status != "hello":
            raise DivergenceError(f"bad greeting {hello!r}")
        self.clock = hello.clock

    def apply(self, cmd: ActionCommand) -> None:
        self.fs.send(serialize(cmd))

    def step(self, until: Optional[int]) -> tuple[list[SimEvent], str]:
        self.fs.send(serialize(Sync("ha", NO_HORIZON if until is None else until, "step")))
        events = []
        while True:
            msg = parse(self.fs.recv())
            if isinstance(msg, SimEvent):
                events.append(msg)
                continue
            if not isinstance(msg, Sync):
                raise DivergenceError(f"client got unexpected {type(msg).__name__}")
            if msg.status.startswith("rejected"):
                raise DivergenceError(f"simulator {msg.status}")
            self.clock = msg.clock
            return events, msg.status

    def close(self) -> None:
        try:
            self.fs.send(serialize(Sync("ha", self.clock, "close")))
        finally:
            self.fs.close()


def serve_and_connect(sim: Simulator) -> tuple[HsaServer, RemoteEndpoint]:
    server = HsaServer(sim).start()
    return server, RemoteEndpoint(server.address)
