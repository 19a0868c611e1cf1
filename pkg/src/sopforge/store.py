"""Bit-exact persistence: TVID video container, checkpoints, runs, history logs.

TVID v1 layout (all little-endian):

    magic   6 bytes  "TVID1\\0"
    version u16      1
    t, h, w u32 each
    payload t*h*w float32, frame-major then row-major

Frames are float32 in memory, so every write/read pair is a bitwise round
trip. JSON records are canonical: sorted keys, compact separators, shortest
round-trip float repr, -0.0 normalised to 0.0.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .agents import ROLE_SPECS, AgentId, AgentParams
from .core import EnhancedPrompt, Frame, Video
from .errors import (
    BadMagic,
    BadVersion,
    CorruptRecord,
    ManifestMismatch,
    ShapeMismatch,
    TruncatedPayload,
)

TVID_MAGIC = b"TVID1\x00"
TVID_VERSION = 1
_HEADER = struct.Struct("<6sHIII")

CHECKPOINT_FORMAT_VERSION = 1


# ── canonical JSON ────────────────────────────────────────────────────────────

def _sanitize(obj):
    if isinstance(obj, float):
        if obj == 0.0:
            return 0.0  # folds -0.0
        return obj
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.floating):
        return _sanitize(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_sanitize(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# ── TVID ──────────────────────────────────────────────────────────────────────

def tvid_bytes(v: Video) -> bytes:
    header = _HEADER.pack(TVID_MAGIC, TVID_VERSION, v.t, v.height, v.width)
    payload = v.to_array().astype("<f4").tobytes()
    return header + payload


def write_tvid(v: Video, sink) -> int:
    """Write to a path or binary file object; returns the byte count."""
    data = tvid_bytes(v)
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        _atomic_write(Path(sink), data)
    return len(data)


def parse_tvid(data: bytes) -> Video:
    if len(data) < _HEADER.size:
        raise TruncatedPayload(f"only {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, t, h, w = _HEADER.unpack_from(data)
    if magic != TVID_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != TVID_VERSION:
        raise BadVersion(f"unsupported version {version}")
    expected = t * h * w * 4
    payload = data[_HEADER.size :]
    if len(payload) != expected:
        raise TruncatedPayload(f"payload is {len(payload)} bytes, header implies {expected}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(t, h, w)
    return Video.from_array(arr)


def read_tvid(source) -> Video:
    if hasattr(source, "read"):
        return parse_tvid(source.read())
    return parse_tvid(Path(source).read_bytes())


def frame_to_tvid_bytes(f: Frame) -> bytes:
    return tvid_bytes(Video((f,)))


def frame_from_tvid_bytes(data: bytes) -> Frame:
    video = parse_tvid(data)
    return video.frames[0]


# ── checkpoints ───────────────────────────────────────────────────────────────

def write_checkpoint(thetas: dict[AgentId, AgentParams], zs: dict[AgentId, np.ndarray],
                     meta: dict, directory) -> None:
    """manifest.json + weights.bin; float32 little-endian in manifest order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    chain = sorted(int(a) for a in thetas)
    blobs: list[bytes] = []
    tensors = []
    offset = 0
    for agent in chain:
        params = thetas[AgentId(agent)]
        for spec in ROLE_SPECS[AgentId(agent)]:
            raw = params.tensors[spec.name].astype("<f4").tobytes()
            tensors.append(
                {
                    "name": spec.name,
                    "agent_id": agent,
                    "shape": list(spec.shape),
                    "byte_offset": offset,
                    "byte_len": len(raw),
                }
            )
            blobs.append(raw)
            offset += len(raw)
    modulation = {}
    for agent in chain:
        raw = np.asarray(zs[AgentId(agent)]).astype("<f4").tobytes()
        modulation[str(agent)] = {"byte_offset": offset, "byte_len": len(raw)}
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "chain": chain,
        "tensors": tensors,
        "modulation": modulation,
        "train_meta": meta,
    }
    _atomic_write(directory / "weights.bin", b"".join(blobs))
    _atomic_write(directory / "manifest.json", (canonical_json(manifest) + "\n").encode())


def _check_spans(spans: list[tuple[int, int]], total: int):
    for off, ln in spans:
        if off < 0 or ln < 0 or off + ln > total:
            raise ManifestMismatch(f"span ({off}, {ln}) outside weights file of {total} bytes")
    ordered = sorted(spans)
    for (o1, l1), (o2, _) in zip(ordered, ordered[1:]):
        if o1 + l1 > o2:
            raise ManifestMismatch("overlapping tensor spans in manifest")


def read_checkpoint(directory):
    """Load (thetas, zs, meta); self-describing, validates layout and shapes."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        weights = (directory / "weights.bin").read_bytes()
    except (OSError, ValueError) as exc:
        raise CorruptRecord(f"unreadable checkpoint: {exc}") from exc
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ManifestMismatch(f"unsupported format_version {manifest.get('format_version')}")
    chain = [AgentId(a) for a in manifest["chain"]]
    entries = manifest["tensors"]
    spans = [(e["byte_offset"], e["byte_len"]) for e in entries]
    spans += [(m["byte_offset"], m["byte_len"]) for m in manifest["modulation"].values()]
    _check_spans(spans, len(weights))

    by_agent: dict[AgentId, dict[str, np.ndarray]] = {a: {} for a in chain}
    for e in entries:
        agent = AgentId(e["agent_id"])
        shape = tuple(e["shape"])
        expected = next((s for s in ROLE_SPECS[agent] if s.name == e["name"]), None)
        if expected is None or expected.shape != shape:
            raise ShapeMismatch(f"tensor {e['name']} has shape {shape}, expected {expected}")
        if e["byte_len"] != int(np.prod(shape)) * 4:
            raise ManifestMismatch(f"byte_len of {e['name']} does not match its shape")
        arr = np.frombuffer(
            weights, dtype="<f4", count=int(np.prod(shape)), offset=e["byte_offset"]
        ).reshape(shape)
        by_agent[agent][e["name"]] = arr.copy()
    thetas = {}
    for agent in chain:
        missing = {s.name for s in ROLE_SPECS[agent]} - set(by_agent[agent])
        if missing:
            raise ManifestMismatch(f"agent {int(agent)} is missing tensors {sorted(missing)}")
        thetas[agent] = AgentParams(agent, by_agent[agent])
    zs = {}
    for key, span in manifest["modulation"].items():
        agent = AgentId(int(key))
        if span["byte_len"] != 16 * 4:
            raise ManifestMismatch("modulation embeddings must hold 16 float32 values")
        zs[agent] = np.frombuffer(
            weights, dtype="<f4", count=16, offset=span["byte_offset"]
        ).copy()
    if set(zs) != set(thetas):
        raise ManifestMismatch("modulation entries do not match the chain")
    return thetas, zs, manifest["train_meta"]


# ── pipeline runs ─────────────────────────────────────────────────────────────

_STAGE_ARTIFACT_FILE = {
    pl.StageId.FIRST_FRAME: "stage_first_frame.tvid",
    pl.StageId.EDIT_FRAME: "stage_edit_frame.tvid",
    pl.StageId.GENERATE_VIDEO: "stage_generate_video.tvid",
    pl.StageId.CONNECT: "stage_connect.tvid",
}


def persist_run(run: pl.PipelineRun, directory) -> None:
    """run.json plus TVID blobs for every frame/video artifact and input."""
    directory = Path(directory)
    art_dir = directory / "artifacts"
    art_dir.mkdir(parents=True, exist_ok=True)

    artifacts_json = {}
    for stage, artifact in run.artifacts.items():
        if isinstance(artifact, EnhancedPrompt):
            artifacts_json[stage.value] = {
                "kind": "enhanced_prompt",
                "text": artifact.text,
                "vector": [float(x) for x in artifact.vector],
            }
        elif isinstance(artifact, Frame):
            name = _STAGE_ARTIFACT_FILE[stage]
            _atomic_write(art_dir / name, frame_to_tvid_bytes(artifact))
            artifacts_json[stage.value] = {"kind": "frame", "file": name}
        elif isinstance(artifact, Video):
            name = _STAGE_ARTIFACT_FILE[stage]
            _atomic_write(art_dir / name, tvid_bytes(artifact))
            artifacts_json[stage.value] = {"kind": "video", "file": name}

    inputs_json: dict = {"prompt": run.inputs.prompt}
    if run.inputs.frame is not None:
        _atomic_write(art_dir / "input_frame.tvid", frame_to_tvid_bytes(run.inputs.frame))
        inputs_json["frame"] = "input_frame.tvid"
    video_files = []
    for i, v in enumerate(run.inputs.videos):
        name = f"input_video_{i}.tvid"
        _atomic_write(art_dir / name, tvid_bytes(v))
        video_files.append(name)
    inputs_json["videos"] = video_files

    record = {
        "run_id": run.run_id,
        "task": run.task.value,
        "stage": run.stage.value,
        "status": run.status.value,
        "retry_counts": {s.value: c for s, c in run.retry_counts.items()},
        "config": {
            "seed": run.config.seed,
            "t_frames": run.config.t_frames,
            "m_frames": run.config.m_frames,
            "retry_noise_sigma": run.config.retry_noise_sigma,
        },
        "inputs": inputs_json,
        "artifacts": artifacts_json,
        "history": run.history,
        "seq": run._seq,
    }
    _atomic_write(directory / "run.json", (canonical_json(record) + "\n").encode())


def load_run(directory) -> pl.PipelineRun:
    directory = Path(directory)
    art_dir = directory / "artifacts"
    try:
        record = json.loads((directory / "run.json").read_text())
    except (OSError, ValueError) as exc:
        raise CorruptRecord(f"unreadable run record: {exc}") from exc

    def read_blob(name: str) -> bytes:
        path = art_dir / name
        if not path.exists():
            raise CorruptRecord(f"missing artifact file {name}")
        return path.read_bytes()

    try:
        inputs = pl.RunInputs(
            prompt=record["inputs"]["prompt"],
            frame=(
                frame_from_tvid_bytes(read_blob(record["inputs"]["frame"]))
                if record["inputs"].get("frame")
                else None
            ),
            videos=tuple(
                parse_tvid(read_blob(name)) for name in record["inputs"]["videos"]
            ),
        )
        cfg = pl.PipelineConfig(
            seed=record["config"]["seed"],
            t_frames=record["config"]["t_frames"],
            m_frames=record["config"]["m_frames"],
            retry_noise_sigma=record["config"]["retry_noise_sigma"],
        )
        artifacts: dict[pl.StageId, object] = {}
        for stage_name, desc in record["artifacts"].items():
            stage = pl.StageId(stage_name)
            if desc["kind"] == "enhanced_prompt":
                artifacts[stage] = EnhancedPrompt(desc["text"], np.array(desc["vector"]))
            elif desc["kind"] == "frame":
                artifacts[stage] = frame_from_tvid_bytes(read_blob(desc["file"]))
            elif desc["kind"] == "video":
                artifacts[stage] = parse_tvid(read_blob(desc["file"]))
            else:
                raise CorruptRecord(f"unknown artifact kind {desc['kind']!r}")
        run = pl.PipelineRun(
            run_id=record["run_id"],
            task=pl.TaskKind(record["task"]),
            inputs=inputs,
            config=cfg,
            stage=pl.StageId(record["stage"]),
            status=pl.RunStatus(record["status"]),
            retry_counts={pl.StageId(s): c for s, c in record["retry_counts"].items()},
            artifacts=artifacts,
            history=record["history"],
            _seq=record["seq"],
        )
    except KeyError as exc:
        raise CorruptRecord(f"run record missing field {exc}") from exc
    return run


# ── training history log ──────────────────────────────────────────────────────

def append_history(record: dict, log) -> None:
    """Append one canonical JSON line to a path or text file object."""
    line = canonical_json(record) + "\n"
    if hasattr(log, "write"):
        log.write(line)
    else:
        with open(log, "a", encoding="utf-8") as fh:
            fh.write(line)


def read_history(source) -> list[dict]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]
