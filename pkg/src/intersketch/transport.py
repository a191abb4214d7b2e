"""Byte transports for protocol peers.

Sessions need an ordered reliable byte stream.  The in-memory loopback used
by the library drivers lives in protocol._pump; this module adds the thin
TCP binding: frame a peer's messages onto a socket and feed incoming frames
back to it until the session finishes.
"""

from __future__ import annotations

import socket
import struct

from .protocol import _FRAME, PingPongPeer, ProtocolError


def read_frame(sock: socket.socket) -> bytes:
    header = _read_exact(sock, _FRAME.size)
    _, _, _, n = _FRAME.unpack(header)
    return header + _read_exact(sock, n)


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def run_peer(peer: PingPongPeer, sock: socket.socket) -> int:
    """Drive one peer over a connected socket; returns bytes transferred."""
    total = 0
    for frame in peer.start():
        sock.sendall(frame)
        total += len(frame)
    while not peer.finished:
        frame = read_frame(sock)
        total += len(frame)
        for reply in peer.handle(frame):
            sock.sendall(reply)
            total += len(reply)
    return total
