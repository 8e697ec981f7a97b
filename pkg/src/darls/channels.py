"""Coordinator-side channels: in-process for tests, TCP for deployment.

Both backends exchange the same WireMessage objects; the in-process
channel round-trips every message through the binary codec so the two
backends share one wire protocol end to end.
"""

import socket

from . import wire
from .worker import WorkerCore, read_frame, send_message

DEFAULT_TIMEOUT = 60.0


class ChannelError(Exception):
    """Transport-level failure talking to one worker."""


class InProcessChannel:
    """Drives a WorkerCore directly, by default through the codec.

    ``through_codec=False`` skips the encode/decode round trip; the codec
    maps doubles bit-exactly (see the wire tests), so results are identical
    either way and the fast path only removes serialization overhead.
    """

    def __init__(self, core: WorkerCore, through_codec: bool = True):
        self.core = core
        self.through_codec = through_codec

    def request(self, msg: wire.WireMessage) -> wire.WireMessage:
        if not self.through_codec:
            return self.core.handle(msg)
        request = wire.decode(wire.encode(msg))
        reply = self.core.handle(request)
        return wire.decode(wire.encode(reply))

    def close(self) -> None:
        pass


class TcpChannel:
    """Synchronous request/reply over one TCP connection."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.address = f"{host}:{port}"
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ChannelError(f"cannot connect to worker at {self.address}: {exc}") from exc
        self.sock.settimeout(timeout)

    def request(self, msg: wire.WireMessage) -> wire.WireMessage:
        try:
            send_message(self.sock, msg)
            frame = read_frame(self.sock)
        except (OSError, wire.CodecError) as exc:
            raise ChannelError(f"worker {self.address}: {exc}") from exc
        if frame is None:
            raise ChannelError(f"worker {self.address} closed the connection")
        try:
            return wire.decode(frame)
        except wire.CodecError as exc:
            raise ChannelError(f"worker {self.address} sent an undecodable reply: {exc}") from exc

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def connect_workers(addresses, timeout: float = DEFAULT_TIMEOUT) -> list[TcpChannel]:
    """Open one TCP channel per ``host:port`` address, in the given order."""
    return [TcpChannel(*parse_address(addr), timeout=timeout) for addr in addresses]


def local_channels(shards, family, through_codec: bool = True) -> list[InProcessChannel]:
    """Build in-process channels over a list of shard arrays."""
    return [InProcessChannel(WorkerCore(shard, family), through_codec=through_codec)
            for shard in shards]
