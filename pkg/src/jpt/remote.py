"""Wire protocol for serving the encoder out of process.

A client sends token ids, the server answers with hidden states (and
attention maps on request), so a heavier backbone can sit behind the
same interface as the in-process encoder.

Framing: every message is one length-prefixed frame (u32 little-endian
byte count, then the payload). An exchange is:

    client frame 1   UTF-8 JSON header {"op", "record_attention", "count"}
    client frame 2   count token ids, u32 little-endian   (op "encode")
    server frame 1   UTF-8 JSON {"ok": true, ...} or {"ok": false, "error"}
    server frame 2   hidden matrix, float32 little-endian, row-major
    server frame 3+  one [n_heads, len, len] float32 block per layer,
                     only when record_attention was set

Ops: "encode" as above; "config" returns the backbone configuration in
the JSON header (no tensor frames); "shutdown" stops the server.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from pathlib import Path

import numpy as np
import torch

from jpt.backbone import EncoderOutput

MAX_FRAME = 1 << 28  # tensors for desk-scale models stay far below 256 MiB


class ProtocolError(Exception):
    pass


class RemoteBackboneError(Exception):
    """Server-side failure reported over the wire."""


def send_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def recv_frame(sock: socket.socket) -> bytes:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"announced frame of {length} bytes exceeds limit")
    return _recv_exact(sock, length)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ProtocolError(
                f"connection closed mid-frame ({n - remaining} of {n} bytes)"
            )
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _send_json(sock: socket.socket, payload: dict) -> None:
    send_frame(sock, json.dumps(payload, sort_keys=True).encode("utf-8"))


def _recv_json(sock: socket.socket) -> dict:
    raw = recv_frame(sock)
    try:
        payload = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad header frame: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProtocolError("header frame must be a JSON object")
    return payload


class BackboneServer:
    """Serves one local encoder over a Unix socket, one request at a time.

    The encoder is shared read-only state; sequential handling keeps the
    attention recording buffers per-call without locking.
    """

    def __init__(self, encoder, socket_path: str | Path) -> None:
        self.encoder = encoder
        self.socket_path = Path(socket_path)
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def start(self) -> None:
        if self.socket_path.exists():
            self.socket_path.unlink()
        self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._sock.bind(str(self.socket_path))
        self._sock.listen(8)
        self._sock.settimeout(0.2)
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
        if self._sock is not None:
            self._sock.close()
        if self.socket_path.exists():
            self.socket_path.unlink()

    def __enter__(self) -> "BackboneServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def _serve(self) -> None:
        assert self._sock is not None
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                try:
                    self._handle(conn)
                except (ProtocolError, OSError):
                    pass  # client went away or spoke garbage; next request

    def _handle(self, conn: socket.socket) -> None:
        header = _recv_json(conn)
        op = header.get("op")
        if op == "shutdown":
            _send_json(conn, {"ok": True})
            self._stop.set()
            return
        if op == "config":
            _send_json(conn, {"ok": True, "config": self.encoder.config.to_dict()})
            return
        if op != "encode":
            _send_json(conn, {"ok": False, "error": f"unknown op {op!r}"})
            return
        try:
            count = int(header["count"])
            raw = recv_frame(conn)
            if len(raw) != 4 * count:
                raise ProtocolError(
                    f"token frame holds {len(raw)} bytes, expected {4 * count}"
                )
            token_ids = np.frombuffer(raw, dtype="<u4").tolist()
            with torch.no_grad():
                out = self.encoder.encode(
                    token_ids, record_attention=bool(header.get("record_attention"))
                )
        except ProtocolError:
            raise
        except Exception as exc:
            _send_json(conn, {"ok": False, "error": str(exc)})
            return
        hidden = out.hidden.detach().cpu().numpy().astype("<f4")
        attentions = out.attentions or ()
        _send_json(
            conn,
            {
                "ok": True,
                "shape": list(hidden.shape),
                "n_attention_layers": len(attentions),
            },
        )
        send_frame(conn, hidden.tobytes())
        for layer in attentions:
            send_frame(conn, layer.detach().cpu().numpy().astype("<f4").tobytes())


class RemoteBackbone:
    """Client presenting the in-process encoder interface over the wire.

    Connects per call; the server end owns all model state.
    """

    def __init__(self, socket_path: str | Path, timeout: float = 10.0) -> None:
        self.socket_path = Path(socket_path)
        self.timeout = timeout

    def _connect(self) -> socket.socket:
        sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        sock.settimeout(self.timeout)
        sock.connect(str(self.socket_path))
        return sock

    def config(self) -> dict:
        with self._connect() as sock:
            _send_json(sock, {"op": "config"})
            reply = _recv_json(sock)
        if not reply.get("ok"):
            raise RemoteBackboneError(reply.get("error", "unknown server error"))
        return reply["config"]

    def shutdown_server(self) -> None:
        with self._connect() as sock:
            _send_json(sock, {"op": "shutdown"})
            _recv_json(sock)

    def encode(self, token_ids, record_attention: bool = False) -> EncoderOutput:
        ids = np.asarray(list(token_ids), dtype="<u4")
        with self._connect() as sock:
            _send_json(
                sock,
                {
                    "op": "encode",
                    "count": int(ids.size),
                    "record_attention": bool(record_attention),
                },
            )
            send_frame(sock, ids.tobytes())
            reply = _recv_json(sock)
            if not reply.get("ok"):
                raise RemoteBackboneError(reply.get("error", "unknown server error"))
            shape = tuple(reply["shape"])
            raw = recv_frame(sock)
            if len(raw) != 4 * shape[0] * shape[1]:
                raise ProtocolError("hidden frame does not match announced shape")
            hidden = torch.from_numpy(
                np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            )
            attentions = []
            for _ in range(int(reply.get("n_attention_layers", 0))):
                block = np.frombuffer(recv_frame(sock), dtype="<f4")
                length = shape[0]
                n_heads = block.size // (length * length)
                if n_heads * length * length != block.size:
                    raise ProtocolError("attention frame does not factor into heads")
                attentions.append(
                    torch.from_numpy(block.reshape(n_heads, length, length).copy())
                )
        return EncoderOutput(
            hidden=hidden, attentions=tuple(attentions) if attentions else None
        )
