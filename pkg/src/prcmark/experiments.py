"""Reproducible end-to-end experiments with CSV reporting.

A run takes each synthetic video through: window assignment -> sign-modulated
embedding -> temporal/spatial attacks -> simulated inversion -> per-frame
decode -> temporal matching -> rank-test detection. Everything derives from
one global seed, so a run is bit-reproducible (wall-time column aside).
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import spawn
from .channel import AttackSpec, ChannelParams, apply_spatial, apply_temporal, invert
from .errors import InvalidConfig, PrcmarkError
from .latents import LatentShape, embed_video, sample_video
from .matching import detect, decode_video, temporal_match
from .prc import PrcKey, PrcParams, keygen
from .schedule import MessageSchedule, assign_window, build_schedule

_SEED_WINDOW, _SEED_EMBED, _SEED_ATTACK, _SEED_CHANNEL, _SEED_DETECT = 1, 2, 3, 4, 5


@dataclass
class ExperimentConfig:
    params: PrcParams
    shape: LatentShape
    schedule_len: int = 256
    schedule_seed: Optional[int] = None  # None: derived from the global seed
    frames: int = 16
    count: int = 8
    i2v: bool = False
    channel: ChannelParams = field(default_factory=lambda: ChannelParams(rho=1.0))
    attacks: list = field(default_factory=list)
    null_count: int = 1000
    tau: float = 0.005
    reference: str = "window"  # or "full_list"
    slack: int = 8
    seed: int = 0
    workers: int = 1
    watermarked: bool = True

    def validate(self) -> None:
        try:
            self.params.validate()
            self.channel.validate()
        except PrcmarkError as exc:
            raise InvalidConfig(str(exc)) from exc
        if self.shape.n != self.params.n:
            raise InvalidConfig(
                f"latent shape {self.shape.dims()} gives n = {self.shape.n}, "
                f"key expects n = {self.params.n}"
            )
        if self.frames < 1 or self.count < 1:
            raise InvalidConfig("frames and count must be positive")
        if self.frames > self.schedule_len - 1:
            raise InvalidConfig(
                f"frames = {self.frames} needs schedule_len > frames "
                f"(got {self.schedule_len})"
            )
        if self.reference not in ("window", "full_list"):
            raise InvalidConfig(f"unknown detection reference {self.reference!r}")
        if not 0.0 < self.tau < 1.0 or self.null_count < 1:
            raise InvalidConfig("detection needs null_count >= 1 and tau in (0, 1)")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")


def config_from_dict(obj: dict) -> ExperimentConfig:
    """Build a config from the JSON structure used by the CLI."""
    if not isinstance(obj, dict):
        raise InvalidConfig("config root must be a JSON object")
    try:
        shape_d = obj.get("shape", {"c": 4, "h": 64, "w": 64})
        shape = LatentShape(int(shape_d["c"]), int(shape_d["h"]), int(shape_d["w"]))
        key_d = dict(obj.get("key", {}))
        key_d.setdefault("n", shape.n)
        params = PrcParams(
            n=int(key_d["n"]),
            k_msg=int(key_d.get("k_msg", 512)),
            k_pad=int(key_d.get("k_pad", 64)),
            r=None if key_d.get("r") is None else int(key_d["r"]),
            t=int(key_d.get("t", 3)),
            eta=float(key_d.get("eta", 0.0)),
            fpr=float(key_d.get("fpr", 1e-6)),
            max_bp_iters=int(key_d.get("max_bp_iters", 100)),
            llr_clamp=float(key_d.get("llr_clamp", 0.38)),
        )
        sched_d = obj.get("schedule", {})
        video_d = obj.get("video", {})
        chan_d = obj.get("channel", {})
        det_d = obj.get("detection", {})
        config = ExperimentConfig(
            params=params,
            shape=shape,
            schedule_len=int(sched_d.get("length", 256)),
            schedule_seed=sched_d.get("seed"),
            frames=int(video_d.get("frames", 16)),
            count=int(video_d.get("count", 8)),
            i2v=bool(video_d.get("i2v", False)),
            channel=ChannelParams(
                rho=float(chan_d.get("rho", 1.0)),
                mode=str(chan_d.get("mode", "soft")),
                i2v_first_frame=bool(video_d.get("i2v", False)),
            ),
            attacks=[AttackSpec.from_json(a) for a in obj.get("attacks", [])],
            null_count=int(det_d.get("null_count", 1000)),
            tau=float(det_d.get("tau", 0.005)),
            reference=str(det_d.get("reference", "window")),
            slack=int(det_d.get("slack", 8)),
            seed=int(obj.get("seed", 0)),
            workers=int(obj.get("workers", 1)),
            watermarked=bool(video_d.get("watermarked", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidConfig(f"malformed config: {exc}") from exc
    config.validate()
    return config


def config_to_dict(config: ExperimentConfig) -> dict:
    p = config.params
    return {
        "shape": {"c": config.shape.c, "h": config.shape.h, "w": config.shape.w},
        "key": {
            "n": p.n, "k_msg": p.k_msg, "k_pad": p.k_pad, "r": p.r, "t": p.t,
            "eta": p.eta, "fpr": p.fpr, "max_bp_iters": p.max_bp_iters,
            "llr_clamp": p.llr_clamp,
        },
        "schedule": {"length": config.schedule_len, "seed": config.schedule_seed},
        "video": {
            "frames": config.frames, "count": config.count, "i2v": config.i2v,
            "watermarked": config.watermarked,
        },
        "channel": {"rho": config.channel.rho, "mode": config.channel.mode},
        "attacks": [vars(a) if not isinstance(a, dict) else a for a in config.attacks],
        "detection": {
            "null_count": config.null_count, "tau": config.tau,
            "reference": config.reference, "slack": config.slack,
        },
        "seed": config.seed,
        "workers": config.workers,
    }


@dataclass
class RunRecord:
    video: int
    frames_out: int
    start: int
    attack: str
    rho: float
    bit_accuracy: Optional[float]
    frames_decoded: Optional[float]
    p_value: float
    decision: bool
    matching_accuracy: Optional[float]
    edit_cost: float
    wall_time: float


def _sub_seed(seed: int, tag: int, video: int) -> int:
    return int(spawn(seed, tag, video).integers(0, 2**63))


def _attack_label(attacks) -> str:
    if not attacks:
        return "none"
    parts = []
    for a in attacks:
        if a.kind == "swap":
            parts.append(f"swap({a.i},{a.j})")
        elif a.kind == "insert":
            parts.append(f"insert({a.position},{a.count})")
        elif a.kind == "drop":
            parts.append("drop(" + ",".join(map(str, a.indices)) + ")")
        else:
            parts.append(f"{a.spatial_kind}({a.severity:g})")
    return "+".join(parts)


def run_video(
    key: PrcKey,
    sched: MessageSchedule,
    config: ExperimentConfig,
    video_idx: int,
    watermarked: bool = True,
) -> RunRecord:
    t0 = time.perf_counter()
    f = config.frames
    offset = 1 if config.i2v else 0
    chan = ChannelParams(
        rho=config.channel.rho,
        mode=config.channel.mode,
        seed=_sub_seed(config.seed, _SEED_CHANNEL, video_idx),
        i2v_first_frame=config.i2v,
    )
    if watermarked:
        window = assign_window(
            sched, f - offset, spawn(config.seed, _SEED_WINDOW, video_idx)
        )
        video = embed_video(
            key,
            window.messages,
            config.shape,
            _sub_seed(config.seed, _SEED_EMBED, video_idx),
            skip_first=config.i2v,
        )
        start = window.start
    else:
        video = sample_video(
            config.shape, f, _sub_seed(config.seed, _SEED_EMBED, video_idx)
        )
        start = -1
    prov = list(range(f))
    attack_rng = spawn(config.seed, _SEED_ATTACK, video_idx)
    for spec in config.attacks:
        if spec.kind == "spatial":
            chan = apply_spatial(chan, spec)
        else:
            video, prov = apply_temporal(video, spec, attack_rng, prov)
    inverted = invert(video, chan)
    decoded = decode_video(key, inverted)
    truth = None
    if watermarked:
        truth = [
            -1 if (src < 0 or (config.i2v and src == 0)) else start + src - offset
            for src in prov
        ]
    tmm = temporal_match(sched, decoded, slack=config.slack, truth=truth)
    if config.reference == "full_list":
        reference = list(sched.entries)
        free_ends = True
    elif watermarked:
        reference = list(window.messages)
        free_ends = False
    else:
        ref_len = min(f, sched.length - tmm.start)
        reference = list(sched.entries[tmm.start : tmm.start + ref_len])
        free_ends = False
    report = detect(
        reference,
        decoded,
        config.null_count,
        config.tau,
        spawn(config.seed, _SEED_DETECT, video_idx),
        free_ref_ends=free_ends,
    )
    bit_acc = None
    frames_dec = None
    if watermarked:
        scores = []
        decs = []
        for j, tr in enumerate(truth):
            if tr < 0:
                continue
            if decoded[j] is None:
                scores.append(0.5)
                decs.append(0.0)
            else:
                scores.append(float(np.mean(decoded[j] == sched.entries[tr])))
                decs.append(1.0)
        bit_acc = float(np.mean(scores)) if scores else None
        frames_dec = float(np.mean(decs)) if decs else None
    return RunRecord(
        video=video_idx,
        frames_out=len(decoded),
        start=start,
        attack=_attack_label(config.attacks),
        rho=chan.rho,
        bit_accuracy=bit_acc,
        frames_decoded=frames_dec,
        p_value=report.p_value,
        decision=report.decision,
        matching_accuracy=tmm.matching_accuracy,
        edit_cost=report.edit_distance,
        wall_time=time.perf_counter() - t0,
    )


def run_experiment(
    config: ExperimentConfig,
    key: Optional[PrcKey] = None,
    sched: Optional[MessageSchedule] = None,
    watermarked: Optional[bool] = None,
) -> tuple[list, dict]:
    """Run `count` videos; returns (records, aggregate)."""
    config.validate()
    if watermarked is None:
        watermarked = config.watermarked
    if key is None:
        key = keygen(config.params, config.seed)
    if sched is None:
        sched_seed = (
            config.schedule_seed
            if config.schedule_seed is not None
            else _sub_seed(config.seed, 0x5EED, 0)
        )
        sched = build_schedule(config.schedule_len, config.params.k_msg, sched_seed)
    workers = int(os.environ.get("PRCMARK_WORKERS", config.workers))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(
                    lambda v: run_video(key, sched, config, v, watermarked),
                    range(config.count),
                )
            )
    else:
        records = [
            run_video(key, sched, config, v, watermarked) for v in range(config.count)
        ]
    return records, aggregate_records(records)


def aggregate_records(records: list) -> dict:
    def mean_of(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    return {
        "videos": len(records),
        "bit_accuracy": mean_of([r.bit_accuracy for r in records]),
        "frames_decoded": mean_of([r.frames_decoded for r in records]),
        "p_value": mean_of([r.p_value for r in records]),
        "detection_rate": mean_of([1.0 if r.decision else 0.0 for r in records]),
        "matching_accuracy": mean_of([r.matching_accuracy for r in records]),
        "edit_cost": mean_of([r.edit_cost for r in records]),
        "wall_time": float(np.sum([r.wall_time for r in records])),
    }


_CSV_COLUMNS = [
    "video", "frames_out", "start", "attack", "rho", "bit_accuracy",
    "frames_decoded", "p_value", "decision", "matching_accuracy", "edit_cost",
    "wall_time",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_run_csv(path, records: list, config: ExperimentConfig,
                  aggregate: Optional[dict] = None) -> None:
    """CSV with the resolved config echoed as a header comment."""
    lines = ["# prcmark run", "# config: " + json.dumps(config_to_dict(config))]
    lines.append(",".join(_CSV_COLUMNS))
    for r in records:
        lines.append(",".join(_fmt(getattr(r, c)) for c in _CSV_COLUMNS))
    if aggregate is not None:
        agg_row = {
            "video": "mean", "frames_out": "", "start": "", "attack": "", "rho": "",
            "bit_accuracy": aggregate["bit_accuracy"],
            "frames_decoded": aggregate["frames_decoded"],
            "p_value": aggregate["p_value"],
            "decision": aggregate["detection_rate"],
            "matching_accuracy": aggregate["matching_accuracy"],
            "edit_cost": aggregate["edit_cost"],
            "wall_time": aggregate["wall_time"],
        }
        lines.append(",".join(_fmt(agg_row[c]) for c in _CSV_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


SWEEP_AXES = ("rho", "t", "k_msg", "f", "L")


def sweep_value_config(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    import copy

    if axis not in SWEEP_AXES:
        raise InvalidConfig(f"unknown sweep axis {axis!r}; pick one of {SWEEP_AXES}")
    cfg = copy.deepcopy(config)
    if axis == "rho":
        cfg.channel.rho = float(value)
    elif axis == "t":
        cfg.params.t = int(value)
    elif axis == "k_msg":
        delta = int(value) - cfg.params.k_msg
        cfg.params.k_msg = int(value)
        if cfg.params.r is not None:
            cfg.params.r = max(0, cfg.params.r - delta)
    elif axis == "f":
        cfg.frames = int(value)
    elif axis == "L":
        cfg.schedule_len = int(value)
    cfg.validate()
    return cfg


def run_sweep(config: ExperimentConfig, axis: str, values: list) -> list:
    """One aggregate row per axis value."""
    if not values:
        raise InvalidConfig("sweep needs a non-empty list of axis values")
    rows = []
    for value in values:
        cfg = sweep_value_config(config, axis, value)
        _, agg = run_experiment(cfg)
        agg["axis"] = axis
        agg["value"] = value
        rows.append(agg)
    return rows


def write_sweep_csv(path, rows: list, config: ExperimentConfig, axis: str) -> None:
    cols = ["axis", "value", "videos", "bit_accuracy", "frames_decoded", "p_value",
            "detection_rate", "matching_accuracy", "edit_cost", "wall_time"]
    lines = ["# prcmark sweep: " + axis,
             "# config: " + json.dumps(config_to_dict(config))]
    lines.append(",".join(cols))
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def fit_rho(
    key: PrcKey,
    target_rate: float = 0.999,
    trials: int = 48,
    seed: int = 0,
    steps: int = 10,
) -> dict:
    """Smallest rho (worst channel) whose per-frame decode rate still meets
    the target, found by bisection on the induced sign-flip rate.
    """
    from .channel import flip_probability, rho_for_flip

    def rate_at_flip(p: float) -> float:
        good = 0
        for i in range(trials):
            rng = spawn(seed, 0xF17, i, int(p * 1e6))
            msg = rng.integers(0, 2, size=key.params.k_msg, dtype=np.uint8)
            from .prc import decode, encode

            cw = encode(key, msg, rng).astype(np.float64)
            cw[rng.random(key.params.n) < p] *= -1.0
            out = decode(key, cw)
            if out.message is not None and np.array_equal(out.message, msg):
                good += 1
        return good / trials

    lo, hi = 0.0, 0.45  # flip rate bounds; rate is ~1 at lo, ~0 at hi
    for _ in range(steps):
        mid = (lo + hi) / 2
        if rate_at_flip(mid) >= target_rate:
            lo = mid
        else:
            hi = mid
    return {
        "flip_threshold": lo,
        "rho": rho_for_flip(lo),
        "target_rate": target_rate,
        "trials_per_step": trials,
        "rate_at_threshold": rate_at_flip(lo),
    }
