"""Wire and file formats.

* CSI traces: JSON Lines, a header record then one frame per line.
* Tensors ("SFT1"): magic, u32 LE rank, dims, float32 LE payload, CRC32.
* Checkpoints ("SFNV1"): magic, then per tensor name/rank/dims/float64 LE
  payload, with one trailing CRC32 over everything after the magic.
* Decision log: append-only JSON Lines enabling bit-exact replay.
"""
from __future__ import annotations

import json
import struct
import zlib
from collections import deque
from pathlib import Path

import numpy as np

from .online import Decision, DetectorState, ERROR_WINDOW, update_stats
from .simulate import CsiTrace, GroundTruthEvent

TRACE_FORMAT = "sifall-csi-v1"
TENSOR_MAGIC = b"SFT1"
CHECKPOINT_MAGIC = b"SFNV1"


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# CSI traces (JSON Lines)
# ---------------------------------------------------------------------------


def write_trace_jsonl(trace: CsiTrace, path: str | Path, fs: float | None = None) -> None:
    n, m, c = trace.h.shape
    header = {"format": TRACE_FORMAT,
              "fs": fs if fs is not None else round(trace.sample_rate_hz, 6),
              "m": m, "c": c}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(n):
            h = trace.h[i]           # (M, C)
            nested = [[[float(h[mi, ci].real), float(h[mi, ci].imag)]
                       for mi in range(m)] for ci in range(c)]
            fh.write(json.dumps({"t": float(trace.timestamps[i]),
                                 "seq": int(trace.seq[i]), "h": nested}) + "\n")


def read_trace_jsonl(path: str | Path) -> CsiTrace:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != TRACE_FORMAT:
            raise FormatError(f"not a {TRACE_FORMAT} file: {path}")
        m, c = int(header["m"]), int(header["c"])
        ts, seqs, frames = [], [], []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            arr = np.asarray(rec["h"], dtype=float)     # (C, M, 2)
            if arr.shape != (c, m, 2):
                raise FormatError(f"frame shape {arr.shape} != ({c}, {m}, 2)")
            frames.append((arr[..., 0] + 1j * arr[..., 1]).T)   # -> (M, C)
            ts.append(float(rec["t"]))
            seqs.append(int(rec["seq"]))
    return CsiTrace(np.asarray(ts), np.stack(frames), np.asarray(seqs),
                    trace_id=str(Path(path).stem))


def write_truth_jsonl(truth: list, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in truth:
            fh.write(json.dumps(ev.to_json()) + "\n")


def read_truth_jsonl(path: str | Path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(GroundTruthEvent.from_json(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Binary tensors (SFT1)
# ---------------------------------------------------------------------------


def tensor_to_bytes(tensor: np.ndarray) -> bytes:
    tensor = np.ascontiguousarray(tensor, dtype="<f4")
    body = struct.pack("<I", tensor.ndim)
    body += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
    body += tensor.tobytes()
    return TENSOR_MAGIC + body + struct.pack("<I", zlib.crc32(body))


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one SFT1 block; returns (tensor, next offset)."""
    if buf[offset:offset + 4] != TENSOR_MAGIC:
        raise FormatError("bad tensor magic")
    pos = offset + 4
    if len(buf) < pos + 4:
        raise FormatError("truncated tensor header")
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if rank == 0 or rank > 8:
        raise FormatError(f"implausible tensor rank {rank}")
    if len(buf) < pos + 4 * rank:
        raise FormatError("truncated tensor dims")
    dims = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    count = 1
    for d in dims:
        if d == 0 or count * d > 100_000_000:
            raise FormatError(f"implausible tensor dims {dims}")
        count *= d
    end = pos + 4 * count
    if len(buf) < end + 4:
        raise FormatError("truncated tensor payload")
    body = buf[offset + 4:end]
    (crc,) = struct.unpack_from("<I", buf, end)
    if zlib.crc32(body) != crc:
        raise FormatError("tensor CRC mismatch")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
    return data.reshape(dims).astype(np.float64), end + 4


def tensors_from_bytes(buf: bytes) -> list[np.ndarray]:
    """Parse consecutive SFT1 blocks until the buffer is exhausted."""
    out, pos = [], 0
    while pos < len(buf):
        tensor, pos = tensor_from_bytes(buf, pos)
        out.append(tensor)
    return out


# ---------------------------------------------------------------------------
# Checkpoints (SFNV1)
# ---------------------------------------------------------------------------


def checkpoint_to_bytes(params: dict) -> bytes:
    body = b""
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        nb = name.encode("utf-8")
        body += struct.pack("<I", len(nb)) + nb
        body += struct.pack("<I", arr.ndim)
        if arr.ndim:
            body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    return CHECKPOINT_MAGIC + body + struct.pack("<I", zlib.crc32(body))


def checkpoint_from_bytes(buf: bytes) -> dict:
    if buf[:5] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    body, tail = buf[5:-4], buf[-4:]
    (crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) != crc:
        raise FormatError("checkpoint CRC mismatch")
    params: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(body):
        (name_len,) = struct.unpack_from("<I", body, pos)
        pos += 4
        name = body[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", body, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", body, pos) if rank else ()
        pos += 4 * rank
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        params[name] = arr.reshape(dims).copy()
    return params


def save_checkpoint(params: dict, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_to_bytes(params))


def load_checkpoint(path: str | Path) -> dict:
    return checkpoint_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Decision log (append-only JSONL)
# ---------------------------------------------------------------------------


class DecisionLog:
    """Append-only decision journal; each line is flushed immediately so a
    crash loses at most the decision being written."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = None

    def append(self, event_json: dict) -> None:
        if self._fh is None:
            self._fh = open(self.path, "a", encoding="utf-8")
        self._fh.write(json.dumps(event_json) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


def fold_state(records: list[dict], initial: DetectorState) -> DetectorState:
    """Rebuild DetectorState by replaying a decision log over the
    pretraining-initialized state."""
    state = DetectorState(alpha=initial.alpha, median=initial.median,
                          e_history=deque(initial.e_history, maxlen=ERROR_WINDOW),
                          env_change_flag=initial.env_change_flag,
                          model_version=initial.model_version)
    for rec in records:
        decision = rec.get("decision")
        e = float(rec["e"])
        if decision in (Decision.SUSPICIOUS.value, Decision.NORMAL.value):
            update_stats(state, e)
        state.model_version = int(rec.get("model_version", state.model_version))
    return state
