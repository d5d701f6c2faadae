"""Minimal WebSocket (RFC 6455) support over stdlib sockets.

Text frames only, no extensions, no fragmentation on send; incoming
fragmented messages are reassembled. Enough for a localhost session feed to
a browser or a scripted client, with zero third-party dependencies.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct

__all__ = ["WsClosed", "WsConn", "WsError", "client_connect", "server_handshake"]

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BIN = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsError(RuntimeError):
    pass


class WsClosed(WsError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WsClosed("socket closed")
        buf += chunk
    return buf


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def read_http_head(sock: socket.socket) -> tuple[str, dict[str, str]]:
    """Read request/status line plus headers up to the blank line."""
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WsClosed("socket closed during HTTP head")
        data += chunk
        if len(data) > 65536:
            raise WsError("oversized HTTP head")
    head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    headers = {}
    for ln in lines[1:]:
        if ":" in ln:
            k, v = ln.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    return lines[0], headers


def server_handshake(sock: socket.socket, headers: dict[str, str]) -> "WsConn":
    """Complete the upgrade for a request whose headers were already read."""
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise WsError("not a websocket upgrade request")
    resp = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n"
    )
    sock.sendall(resp.encode())
    return WsConn(sock, mask_outgoing=False)


def client_connect(host: str, port: int, path: str = "/ws", timeout: float = 10.0) -> "WsConn":
    sock = socket.create_connection((host, port), timeout=timeout)
    key = base64.b64encode(os.urandom(16)).decode()
    req = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}:{port}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n"
    )
    sock.sendall(req.encode())
    status, headers = read_http_head(sock)
    if "101" not in status:
        raise WsError(f"handshake rejected: {status}")
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise WsError("bad Sec-WebSocket-Accept")
    return WsConn(sock, mask_outgoing=True)


class WsConn:
    """One WebSocket endpoint; thread-safe for one reader + one writer."""

    def __init__(self, sock: socket.socket, mask_outgoing: bool):
        self.sock = sock
        self.mask_outgoing = mask_outgoing
        self._closed = False

    def _send_frame(self, opcode: int, payload: bytes) -> None:
        head = bytes([0x80 | opcode])
        n = len(payload)
        mask_bit = 0x80 if self.mask_outgoing else 0x00
        if n <= 125:
            head += bytes([mask_bit | n])
        elif n <= 0xFFFF:
            head += bytes([mask_bit | 126]) + struct.pack(">H", n)
        else:
            head += bytes([mask_bit | 127]) + struct.pack(">Q", n)
        if self.mask_outgoing:
            key = os.urandom(4)
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
            head += key
        try:
            self.sock.sendall(head + payload)
        except OSError as e:
            raise WsClosed(str(e)) from e

    def send_text(self, text: str) -> None:
        if self._closed:
            raise WsClosed("connection closed")
        self._send_frame(OP_TEXT, text.encode())

    def _read_frame(self) -> tuple[int, bool, bytes]:
        b0, b1 = _recv_exact(self.sock, 2)
        fin = bool(b0 & 0x80)
        opcode = b0 & 0x0F
        masked = bool(b1 & 0x80)
        n = b1 & 0x7F
        if n == 126:
            (n,) = struct.unpack(">H", _recv_exact(self.sock, 2))
        elif n == 127:
            (n,) = struct.unpack(">Q", _recv_exact(self.sock, 8))
        key = _recv_exact(self.sock, 4) if masked else None
        payload = _recv_exact(self.sock, n) if n else b""
        if key:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return opcode, fin, payload

    def recv_text(self, timeout: float | None = None) -> str | None:
        """Next text message; None on clean close. Control frames handled."""
        self.sock.settimeout(timeout)
        buf = b""
        assembling = False
        while True:
            try:
                opcode, fin, payload = self._read_frame()
            except socket.timeout:
                raise
            if opcode == OP_PING:
                self._send_frame(OP_PONG, payload)
                continue
            if opcode == OP_PONG:
                continue
            if opcode == OP_CLOSE:
                self._closed = True
                try:
                    self._send_frame(OP_CLOSE, b"")
                except WsClosed:
                    pass
                return None
            if opcode in (OP_TEXT, OP_BIN) or (opcode == OP_CONT and assembling):
                buf += payload
                assembling = not fin
                if fin:
                    return buf.decode()
            else:
                raise WsError(f"unexpected opcode {opcode}")

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._send_frame(OP_CLOSE, b"")
            except (WsClosed, OSError):
                pass
        try:
            self.sock.close()
        except OSError:
            pass
