"""Command-line entry points.

    sifall simulate --scenario sc.json --seed 7 --out trace.jsonl --truth truth.jsonl
    sifall frontend --trace trace.jsonl --out-segments segs/
    sifall train    --segments segs/ --out model.sfn
    sifall serve    --data-dir run/ --checkpoint model.sfn --errors errs.json
    sifall replay   --trace trace.jsonl --truth truth.jsonl --checkpoint model.sfn
    sifall eval     --journal run/journal.jsonl --truth truth.jsonl --segments segs/

Every stochastic command takes --seed; --config points at a key=value file
whose entries act as flag defaults.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .augment import augment_24x
from .dynamics import trace_dynamics
from .evaluate import replay as run_replay
from .evaluate import score_decisions
from .net import AdamState, FallNetConfig, init_params, reconstruction_error, train_epochs
from .online import Decision, DecisionEvent, DetectorState, OnlineConfig, OnlineDetector
from .segmentation import SegmenterConfig, segment_stream
from .service import DetectionService, GatewayServer, default_data_dir
from .simulate import generate_trace, load_scenario

NET_PRESETS = {
    "default": FallNetConfig(),
    "small": FallNetConfig(channels=(4, 8, 16), latent_dim=16),
    "tiny": FallNetConfig(channels=(4, 4), latent_dim=8),
}


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(args: argparse.Namespace, cfg: dict) -> None:
    for key, value in cfg.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


def _net_config(name: str, f32: bool = True) -> FallNetConfig:
    base = NET_PRESETS[name]
    return FallNetConfig(freq_bins=base.freq_bins, in_channels=base.in_channels,
                         channels=base.channels, latent_dim=base.latent_dim,
                         leaky_slope=base.leaky_slope, kl_weight=base.kl_weight,
                         norm_eps=base.norm_eps,
                         dtype=np.float32 if f32 else np.float64)


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = int(args.seed)
    trace, truth = generate_trace(scenario, trace_id=Path(args.out).stem)
    formats.write_trace_jsonl(trace, args.out, fs=scenario.sample_rate_hz)
    if args.truth:
        formats.write_truth_jsonl(truth, args.truth)
    print(f"wrote {len(trace)} frames to {args.out}")
    return 0


def cmd_frontend(args) -> int:
    trace = formats.read_trace_jsonl(args.trace)
    series = trace_dynamics(trace)
    cfg = SegmenterConfig(
        gamma=float(args.gamma) if args.gamma is not None else None,
        theta=float(args.theta), beta=float(args.beta) if args.beta is not None else None,
        accel_mode=args.accel_mode)
    records = segment_stream(series, cfg)
    out_dir = Path(args.out_segments)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(records):
        seg = rec.segment
        blocks = formats.tensor_to_bytes(seg.tensor)
        if seg.dynamics is not None:
            blocks += formats.tensor_to_bytes(seg.dynamics)
        stem = out_dir / f"{trace.trace_id}-{i:04d}"
        stem.with_suffix(".sft").write_bytes(blocks)
        stem.with_suffix(".json").write_text(json.dumps({
            "t_start": seg.t_start, "t_end": seg.t_end,
            "t_max": rec.bounds.t_max, "t_end_star": rec.bounds.t_end_star,
            "trace_id": trace.trace_id, "dynamics_fs": seg.dynamics_fs,
            "max_accel": rec.accel.max_accel()}))
    print(f"emitted {len(records)} segments to {out_dir}")
    return 0


def _load_segment_dir(path: str):
    items = []
    for sft in sorted(Path(path).glob("*.sft")):
        tensors = formats.tensors_from_bytes(sft.read_bytes())
        meta = json.loads(sft.with_suffix(".json").read_text())
        items.append((tensors[0], tensors[1] if len(tensors) > 1 else None, meta))
    return items


def cmd_train(args) -> int:
    seed = int(args.seed or 0)
    net = _net_config(args.net)
    items = _load_segment_dir(args.segments)
    if not items:
        print("no segments found", file=sys.stderr)
        return 1
    rng = np.random.default_rng(seed)
    batches = []
    for k, (tensor, dynamics, meta) in enumerate(items):
        if dynamics is not None and meta.get("dynamics_fs"):
            batches.append(augment_24x(dynamics, fs=meta["dynamics_fs"], seed=seed + k))
        else:
            batches.append([tensor])
    params = init_params(net, seed=seed)
    opt = AdamState()
    params, report = train_epochs(batches, params, net, opt, rng,
                                  epochs=int(args.epochs))
    formats.save_checkpoint(params, args.out)
    Path(str(args.out) + ".json").write_text(json.dumps({
        "net": args.net, "seed": seed, "epochs": int(args.epochs)}))
    errors = [reconstruction_error(t, params, net) for t, _, _ in items]
    errors_path = args.out_errors or (str(args.out) + ".errors.json")
    Path(errors_path).write_text(json.dumps(errors))
    print(f"trained {len(items)} segments x24, final loss {report.total:.6f}; "
          f"checkpoint {args.out}")
    return 0


def _detector_from_args(args, retrain: bool = True) -> OnlineDetector:
    net = _net_config(args.net)
    params = formats.load_checkpoint(args.checkpoint)
    params = {k: v.astype(net.dtype) for k, v in params.items()}
    errors = json.loads(Path(args.errors).read_text())
    state = DetectorState.from_errors(errors)
    oc = OnlineConfig(retrain_enabled=retrain, seed=int(args.seed or 0))
    return OnlineDetector(params, net, state, oc)


def cmd_serve(args) -> int:
    data_dir = Path(args.data_dir or default_data_dir())
    if (data_dir / "state.json").exists():
        service = DetectionService.resume(data_dir)
        print(f"resumed service at {data_dir}, "
              f"model v{service.detector.state.model_version}")
    else:
        net = _net_config(args.net)
        params = formats.load_checkpoint(args.checkpoint)
        params = {k: v.astype(net.dtype) for k, v in params.items()}
        errors = json.loads(Path(args.errors).read_text())
        service = DetectionService.create(
            data_dir, params, net, errors,
            OnlineConfig(seed=int(args.seed or 0)))
        print(f"created service at {data_dir}")
    server = GatewayServer(service, port=int(args.port)).start()
    print(f"listening on {server.base_url}")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_replay(args) -> int:
    trace = formats.read_trace_jsonl(args.trace)
    truth = formats.read_truth_jsonl(args.truth)
    detector = _detector_from_args(args)
    report = run_replay(trace, truth, detector,
                        window_s=float(args.window) if args.window else None)
    out = json.dumps(report.to_json(), indent=2)
    if args.report:
        Path(args.report).write_text(out)
    print(f"tpr={report.tpr:.3f} fpr={report.fpr:.3f} "
          f"falls {report.true_falls}/{report.total_falls} "
          f"false_alarms={report.false_alarms}")
    return 0


def cmd_eval(args) -> int:
    truth = formats.read_truth_jsonl(args.truth)
    records = [r for r in formats.DecisionLog(args.journal).read()
               if r.get("kind", "decision") == "decision"]
    metas = {}
    for sft in Path(args.segments).glob("*.json"):
        meta = json.loads(sft.read_text())
        metas[sft.stem] = meta
    decisions, intervals = [], []
    for rec in records:
        meta = metas.get(rec["segment_id"])
        if meta is None:
            continue
        decisions.append(DecisionEvent(
            t=rec["t"], segment_id=rec["segment_id"], e=rec["e"],
            alpha=rec["alpha"], median=rec.get("gamma", 0.0),
            decision=Decision(rec["decision"]),
            model_version=rec["model_version"], alarm_id=rec.get("alarm_id")))
        intervals.append((meta["t_start"], meta["t_end"]))
    report = score_decisions(decisions, intervals, truth,
                             window_s=float(args.window) if args.window else None)
    print(json.dumps(report.to_json(), indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sifall",
                                     description="WiFi-CSI fall detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scenario to a CSI trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("frontend", help="segment a trace into spectrograms")
    p.add_argument("--trace", required=True)
    p.add_argument("--out-segments", required=True)
    p.add_argument("--gamma", default=None)
    p.add_argument("--theta", default=2.5, type=float)
    p.add_argument("--beta", default=None)
    p.add_argument("--accel-mode", default="ridge", choices=("fd", "ridge"))
    p.set_defaults(fn=cmd_frontend)

    p = sub.add_parser("train", help="pretrain the autoencoder on segments")
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-errors", default=None)
    p.add_argument("--epochs", default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net", default="default", choices=sorted(NET_PRESETS))
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("serve", help="run the gateway HTTP service")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--errors", default=None)
    p.add_argument("--port", default=8471)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net", default="default", choices=sorted(NET_PRESETS))
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("replay", help="replay a trace through the detector")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--errors", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--window", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net", default="default", choices=sorted(NET_PRESETS))
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("eval", help="score a decision journal against truth")
    p.add_argument("--journal", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--segments", required=True)
    p.add_argument("--window", default=None)
    p.set_defaults(fn=cmd_eval)

    parser.add_argument("--config", default=None,
                        help="key=value file with flag defaults")
    args = parser.parse_args(argv)
    _apply_config(args, load_config_file(getattr(args, "config", None)))
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
