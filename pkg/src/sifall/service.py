"""Back-end gateway: persistent detection service plus HTTP front.

Durability model: every model retrain writes a numbered checkpoint before
the decision referencing it reaches the journal, every suspicious or
fall segment payload is saved before its journal record, and journal
lines are flushed per decision.  Restart therefore folds the journal over
the initial state, reloads the checkpoint matching the last journaled
model version, and rebuilds the suspicious buffer and alarm ledger; a
crash at any point loses at most the in-flight decision, which the feeder
simply re-submits.

All mutations funnel through a single writer thread via a bounded queue;
handlers block on a reply box and overflow returns 503.
"""
from __future__ import annotations

import json
import os
import queue
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import formats
from .net import FallNetConfig
from .online import (AlarmClosed, AlarmRecord, AlarmStatus, Decision,
                     DetectorState, ObservedSegment, OnlineConfig,
                     OnlineDetector, UnknownAlarm, Verdict)

DATA_DIR_ENV = "SIFALL_DATA_DIR"
QUEUE_DEPTH_DEFAULT = 64


def _net_config_to_json(cfg: FallNetConfig) -> dict:
    return {"freq_bins": cfg.freq_bins, "in_channels": cfg.in_channels,
            "channels": list(cfg.channels), "latent_dim": cfg.latent_dim,
            "leaky_slope": cfg.leaky_slope, "kl_weight": cfg.kl_weight,
            "norm_eps": cfg.norm_eps,
            "dtype": "f4" if cfg.dtype == np.float32 else "f8"}


def _net_config_from_json(d: dict) -> FallNetConfig:
    return FallNetConfig(freq_bins=d["freq_bins"], in_channels=d["in_channels"],
                         channels=tuple(d["channels"]), latent_dim=d["latent_dim"],
                         leaky_slope=d["leaky_slope"], kl_weight=d["kl_weight"],
                         norm_eps=d["norm_eps"],
                         dtype=np.float32 if d.get("dtype") == "f4" else np.float64)


class DetectionService:
    """Persistent wrapper around the online detector."""

    def __init__(self, data_dir: str | Path, detector: OnlineDetector,
                 initial: DetectorState):
        self.data_dir = Path(data_dir)
        self.detector = detector
        self.initial = initial
        self.journal = formats.DecisionLog(self.data_dir / "journal.jsonl")
        self._seg_dir = self.data_dir / "segments"
        self._seg_dir.mkdir(parents=True, exist_ok=True)
        self._ingest_ms: deque = deque(maxlen=1000)
        self._counts = {d.value: 0 for d in Decision}
        self._seq = 0

    # -- construction -------------------------------------------------------

    @classmethod
    def create(cls, data_dir: str | Path, params: dict, net_config: FallNetConfig,
               initial_errors, online_config: OnlineConfig | None = None
               ) -> "DetectionService":
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        online_config = online_config or OnlineConfig()
        state = DetectorState.from_errors(initial_errors)
        meta = {"initial_errors": [float(e) for e in initial_errors],
                "net_config": _net_config_to_json(net_config),
                "online": {"retrain_enabled": online_config.retrain_enabled,
                           "retrain_steps": online_config.retrain_steps,
                           "retrain_lr": online_config.retrain_lr,
                           "retrain_on_normal": online_config.retrain_on_normal,
                           "seed": online_config.seed}}
        (data_dir / "state.json").write_text(json.dumps(meta))
        formats.save_checkpoint(params, data_dir / "ckpt_v0.sfn")
        detector = OnlineDetector(params, net_config, state, online_config)
        svc = cls(data_dir, detector, DetectorState.from_errors(initial_errors))
        svc._install_hooks()
        return svc

    @classmethod
    def resume(cls, data_dir: str | Path) -> "DetectionService":
        data_dir = Path(data_dir)
        meta = json.loads((data_dir / "state.json").read_text())
        net_config = _net_config_from_json(meta["net_config"])
        oc = meta.get("online", {})
        online_config = OnlineConfig(
            retrain_enabled=oc.get("retrain_enabled", True),
            retrain_steps=oc.get("retrain_steps", 10),
            retrain_lr=oc.get("retrain_lr", 1e-3),
            retrain_on_normal=oc.get("retrain_on_normal", True),
            seed=oc.get("seed", 0))
        initial = DetectorState.from_errors(meta["initial_errors"])
        journal = formats.DecisionLog(data_dir / "journal.jsonl")
        records = journal.read()
        decisions = [r for r in records if r.get("kind", "decision") == "decision"]
        state = formats.fold_state(decisions, initial)
        params = formats.load_checkpoint(
            data_dir / f"ckpt_v{state.model_version}.sfn")
        detector = OnlineDetector(params, net_config, state, online_config)
        svc = cls(data_dir, detector,
                  DetectorState.from_errors(meta["initial_errors"]))
        svc._rebuild(records)
        svc._install_hooks()
        return svc

    def _install_hooks(self) -> None:
        detector = self.detector
        original_retrain = detector._retrain

        def persistent_retrain(seg):
            original_retrain(seg)
            formats.save_checkpoint(
                detector.params,
                self.data_dir / f"ckpt_v{detector.state.model_version}.sfn")

        detector._retrain = persistent_retrain

        original_flush = detector.flush_buffer

        def persistent_flush():
            report = original_flush()
            self.journal.append({"kind": "flush",
                                 "model_version": detector.state.model_version,
                                 "n_clusters": int(report.n_clusters),
                                 "sizes": [int(s) for s in report.sizes],
                                 "far": list(report.far_cluster_ids)})
            return report

        detector.flush_buffer = persistent_flush

    def _rebuild(self, records: list[dict]) -> None:
        """Reconstruct buffer and alarm ledger from the journal."""
        pending: list[str] = []
        self._seq = 0
        for rec in records:
            kind = rec.get("kind", "decision")
            if kind == "decision":
                self._seq += 1
                self._counts[rec["decision"]] = self._counts.get(rec["decision"], 0) + 1
                if rec["decision"] == Decision.SUSPICIOUS.value:
                    pending.append(rec["segment_id"])
                if rec.get("alarm_id") is not None:
                    seg = self._load_payload(rec["segment_id"])
                    alarm = AlarmRecord(
                        alarm_id=int(rec["alarm_id"]), timestamp=float(rec["t"]),
                        segment_id=rec["segment_id"], error=float(rec["e"]),
                        status=AlarmStatus.OPEN,
                        model_version=int(rec["model_version"]))
                    self.detector.alarms[alarm.alarm_id] = alarm
                    if seg is not None:
                        self.detector._alarm_payloads[alarm.alarm_id] = seg
                    self.detector._next_alarm = max(self.detector._next_alarm,
                                                    alarm.alarm_id + 1)
            elif kind == "flush":
                pending.clear()
            elif kind == "verdict":
                alarm = self.detector.alarms.get(int(rec["alarm_id"]))
                if alarm is not None:
                    alarm.status = AlarmStatus(rec["status"])
                    self.detector._alarm_payloads.pop(alarm.alarm_id, None)
        for seg_id in pending:
            payload = self._load_payload(seg_id, with_latent=True)
            if payload is None:
                continue
            seg, latent, err = payload
            self.detector.buffer.append((seg, latent, err))

    # -- payload persistence --------------------------------------------------

    def _payload_path(self, segment_id: str) -> Path:
        safe = segment_id.replace("/", "_").replace(":", "_")
        return self._seg_dir / f"{safe}.sft"

    def _save_payload(self, seg: ObservedSegment, latent: np.ndarray,
                      e: float) -> None:
        blocks = formats.tensor_to_bytes(seg.tensor)
        blocks += formats.tensor_to_bytes(np.concatenate([[e], latent]))
        if seg.dynamics is not None:
            blocks += formats.tensor_to_bytes(seg.dynamics)
        meta = {"segment_id": seg.segment_id, "t_start": seg.t_start,
                "t_end": seg.t_end, "trace_id": seg.trace_id,
                "dynamics_fs": seg.dynamics_fs}
        path = self._payload_path(seg.segment_id)
        path.write_bytes(blocks)
        path.with_suffix(".json").write_text(json.dumps(meta))

    def _load_payload(self, segment_id: str, with_latent: bool = False):
        path = self._payload_path(segment_id)
        if not path.exists():
            return None
        tensors = formats.tensors_from_bytes(path.read_bytes())
        meta = json.loads(path.with_suffix(".json").read_text())
        dynamics = tensors[2] if len(tensors) > 2 else None
        seg = ObservedSegment(
            segment_id=meta["segment_id"], tensor=tensors[0], dynamics=dynamics,
            dynamics_fs=meta.get("dynamics_fs"), t_start=meta["t_start"],
            t_end=meta["t_end"], trace_id=meta["trace_id"])
        if not with_latent:
            return seg
        err_latent = tensors[1]
        return seg, err_latent[1:], float(err_latent[0])

    # -- operations -------------------------------------------------------------

    def ingest(self, seg: ObservedSegment, t: float | None = None) -> dict:
        t0 = time.perf_counter()
        if seg.segment_id == "":
            seg.segment_id = f"seg-{self._seq:06d}"
        self._seq += 1
        event = self.detector.observe(seg, t=t)
        if event.decision in (Decision.SUSPICIOUS, Decision.FALL):
            latent = None
            if (event.decision is Decision.SUSPICIOUS and self.detector.buffer
                    and self.detector.buffer[-1][0].segment_id == seg.segment_id):
                latent = self.detector.buffer[-1][1]
            if latent is None:
                latent = self.detector.latent_mean(seg.tensor)
            self._save_payload(seg, np.asarray(latent, dtype=float), event.e)
        rec = dict(event.to_json())
        rec["kind"] = "decision"
        self.journal.append(rec)
        self._counts[event.decision.value] += 1
        self._ingest_ms.append((time.perf_counter() - t0) * 1e3)
        return {"decision": event.decision.value, "e": event.e,
                "alpha": self.detector.state.alpha,
                "model_version": self.detector.state.model_version,
                "alarm_id": event.alarm_id, "segment_id": seg.segment_id}

    def verdict(self, alarm_id: int, verdict: Verdict) -> AlarmRecord:
        rec = self.detector.apply_verdict(alarm_id, verdict)
        self.journal.append({"kind": "verdict", "alarm_id": alarm_id,
                             "status": rec.status.value,
                             "model_version": self.detector.state.model_version})
        return rec

    def alarms(self, status: str | None = None) -> list[AlarmRecord]:
        out = sorted(self.detector.alarms.values(),
                     key=lambda a: a.timestamp, reverse=True)
        if status:
            out = [a for a in out if a.status.value == status]
        return out

    def stats(self) -> dict:
        st = self.detector.state
        return {"alpha": st.alpha, "gamma": st.median,
                "model_version": st.model_version,
                "buffer_fill": len(self.detector.buffer),
                "env_change_flag": st.env_change_flag,
                "quarantine": len(self.detector.quarantine),
                "open_alarms": len(self.detector.open_alarms())}

    def metrics(self) -> dict:
        return {"decisions": dict(self._counts),
                "ingest_ms": _percentiles(self._ingest_ms),
                "alarms_total": len(self.detector.alarms)}

    def save_checkpoint(self) -> str:
        path = self.data_dir / f"ckpt_v{self.detector.state.model_version}.sfn"
        formats.save_checkpoint(self.detector.params, path)
        return str(path)

    def close(self) -> None:
        self.journal.close()


def _percentiles(values) -> dict:
    if not values:
        return {}
    arr = np.asarray(values, dtype=float)
    return {"p50": float(np.percentile(arr, 50)),
            "p95": float(np.percentile(arr, 95)),
            "count": int(arr.size)}


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class _WriterLoop:
    """Single mutation thread with a bounded queue and reply boxes."""

    def __init__(self, depth: int = QUEUE_DEPTH_DEFAULT):
        self.tasks: queue.Queue = queue.Queue(maxsize=depth)
        self.thread = threading.Thread(target=self._run, daemon=True)
        self._stop = object()
        self.thread.start()

    def _run(self):
        while True:
            item = self.tasks.get()
            if item is self._stop:
                return
            fn, box = item
            try:
                box["result"] = fn()
            except Exception as exc:  # reply with the failure
                box["error"] = exc
            finally:
                box["done"].set()

    def submit(self, fn, timeout: float = 30.0):
        box = {"done": threading.Event()}
        try:
            self.tasks.put((fn, box), block=False)
        except queue.Full:
            raise OverloadedError("writer queue full")
        if not box["done"].wait(timeout):
            raise TimeoutError("writer timeout")
        if "error" in box:
            raise box["error"]
        return box.get("result")

    def stop(self):
        self.tasks.put(self._stop)
        self.thread.join(timeout=5)


class OverloadedError(RuntimeError):
    pass


class GatewayServer:
    """HTTP/1.1 front over a DetectionService."""

    def __init__(self, service: DetectionService, host: str = "127.0.0.1",
                 port: int = 0, queue_depth: int = QUEUE_DEPTH_DEFAULT):
        self.service = service
        self.writer = _WriterLoop(queue_depth)
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.port = self.httpd.server_address[1]
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def start(self) -> "GatewayServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.writer.stop()
        self.service.close()

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"


def _make_handler(server: GatewayServer):
    service = server.service

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet
            pass

        def _reply(self, code: int, payload: dict):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            path, _, query = self.path.partition("?")
            if path == "/v1/alarms":
                status = None
                for part in query.split("&"):
                    if part.startswith("status="):
                        status = part.split("=", 1)[1]
                alarms = [a.to_json() for a in service.alarms(status)]
                self._reply(200, {"alarms": alarms})
            elif path == "/v1/model/stats":
                self._reply(200, service.stats())
            elif path == "/v1/metrics":
                self._reply(200, service.metrics())
            else:
                self._reply(404, {"error": f"unknown path {path}"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length) if length else b""
            try:
                if self.path == "/v1/segments":
                    self._post_segment(body)
                elif self.path.startswith("/v1/alarms/") and self.path.endswith("/verdict"):
                    self._post_verdict(body)
                elif self.path == "/v1/model/checkpoint":
                    path = server.writer.submit(service.save_checkpoint)
                    self._reply(200, {"checkpoint": path})
                else:
                    self._reply(404, {"error": f"unknown path {self.path}"})
            except OverloadedError:
                self._reply(503, {"error": "overloaded"})
            except formats.FormatError as exc:
                self._reply(400, {"error": str(exc)})
            except UnknownAlarm as exc:
                self._reply(404, {"error": str(exc)})
            except AlarmClosed as exc:
                alarm_id = int(self.path.split("/")[3])
                rec = service.detector.alarms.get(alarm_id)
                self._reply(409, {"error": str(exc),
                                  "alarm": rec.to_json() if rec else None})
            except (ValueError, KeyError) as exc:
                self._reply(400, {"error": str(exc)})
            except Exception as exc:  # never crash the handler thread
                self._reply(500, {"error": f"{type(exc).__name__}: {exc}"})

        def _post_segment(self, body: bytes):
            tensors = formats.tensors_from_bytes(body)
            if not tensors or tensors[0].ndim != 3:
                raise formats.FormatError("first block must be a rank-3 spectrogram")
            dynamics = None
            for extra in tensors[1:]:
                if extra.ndim == 2:
                    dynamics = extra
            hdr = self.headers
            seg = ObservedSegment(
                segment_id=hdr.get("X-Sifall-Segment-Id", ""),
                tensor=tensors[0], dynamics=dynamics,
                dynamics_fs=float(hdr.get("X-Sifall-Dynamics-Fs", 0)) or None,
                t_start=float(hdr.get("X-Sifall-T-Start", 0.0)),
                t_end=float(hdr.get("X-Sifall-T-End", 0.0)),
                trace_id=hdr.get("X-Sifall-Trace", ""))
            result = server.writer.submit(lambda: service.ingest(seg))
            self._reply(200, result)

        def _post_verdict(self, body: bytes):
            alarm_id = int(self.path.split("/")[3])
            verdict = Verdict(json.loads(body or b"{}")["verdict"])
            rec = server.writer.submit(lambda: service.verdict(alarm_id, verdict))
            self._reply(200, rec.to_json())

    return Handler


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "./sifall-data"))
