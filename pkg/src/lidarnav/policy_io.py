"""Portable policy format: a JSON manifest plus a raw float32 weight blob.

The manifest pins down everything inference needs away from the training
codebase: network shape, robot profile, lidar geometry, normalization
constants, the tensor layout (name, shape, byte offset) and a CRC-32 of
the blob.  Tensors are serialized little-endian float32 in a fixed order,
so exports are byte-reproducible and loads are checksum-verified.
"""
from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .env import observation_vector
from .nn import HiddenState, NetworkShape, PolicyWeights, ShapeMismatchError
from .robot import Action, Pose, RobotProfile, clamp_action
from .world import LidarConfig

FORMAT_VERSION = 1


class UnsupportedVersionError(ValueError):
    """Manifest format_version is not one this build can read."""


class ChecksumMismatchError(RuntimeError):
    """Weight blob does not match the manifest checksum."""


@dataclass(frozen=True)
class TensorEntry:
    name: str
    shape: tuple[int, ...]
    offset: int             # bytes into the blob


@dataclass(frozen=True)
class PolicyManifest:
    format_version: int
    network: NetworkShape
    profile: RobotProfile
    lidar: LidarConfig
    goal_dist_max: float
    goal_radius: float
    tensors: tuple[TensorEntry, ...]
    checksum_crc32: int
    byte_length: int
    weights_file: str
    dtype: str = "float32-le"


def _layout(shape: NetworkShape) -> tuple[tuple[TensorEntry, ...], int]:
    entries = []
    offset = 0
    for name, tshape in nn.tensor_spec(shape):
        entries.append(TensorEntry(name, tuple(tshape), offset))
        offset += int(np.prod(tshape)) * 4
    return tuple(entries), offset


def export_policy(weights: PolicyWeights, path, profile: RobotProfile,
                  lidar: LidarConfig, goal_dist_max: float,
                  goal_radius: float = 0.3) -> Path:
    """Write manifest JSON at ``path`` and the weight blob next to it.

    Returns the manifest path.  Parameters are cast to little-endian
    float32; exporting the same weights twice yields identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob_path = path.with_suffix(".bin")
    entries, total = _layout(weights.shape)
    blob = bytearray()
    for name, _ in nn.tensor_spec(weights.shape):
        blob += np.ascontiguousarray(weights[name], dtype="<f4").tobytes()
    assert len(blob) == total
    manifest = {
        "format_version": FORMAT_VERSION,
        "network": dataclasses.asdict(weights.shape),
        "profile": dataclasses.asdict(profile),
        "lidar": dataclasses.asdict(lidar),
        "normalization": {
            "goal_dist_max": goal_dist_max,
            "goal_radius": goal_radius,
            "v_range": list(profile.v_range),
            "w_range": list(profile.w_range),
        },
        "tensors": [{"name": e.name, "shape": list(e.shape), "offset": e.offset}
                    for e in entries],
        "dtype": "float32-le",
        "byte_length": total,
        "checksum_crc32": zlib.crc32(bytes(blob)) & 0xFFFFFFFF,
        "weights_file": blob_path.name,
    }
    with open(blob_path, "wb") as fh:
        fh.write(bytes(blob))
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def manifest_to_dict(manifest: PolicyManifest) -> dict:
    """The manifest as the plain dict written by export_policy."""
    return {
        "format_version": manifest.format_version,
        "network": _plain(dataclasses.asdict(manifest.network)),
        "profile": _plain(dataclasses.asdict(manifest.profile)),
        "lidar": _plain(dataclasses.asdict(manifest.lidar)),
        "normalization": {
            "goal_dist_max": manifest.goal_dist_max,
            "goal_radius": manifest.goal_radius,
            "v_range": list(manifest.profile.v_range),
            "w_range": list(manifest.profile.w_range),
        },
        "tensors": [{"name": e.name, "shape": list(e.shape), "offset": e.offset}
                    for e in manifest.tensors],
        "dtype": manifest.dtype,
        "byte_length": manifest.byte_length,
        "checksum_crc32": manifest.checksum_crc32,
        "weights_file": manifest.weights_file,
    }


def _manifest_from_dict(d: dict, path: Path) -> PolicyManifest:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format_version {version!r} is not supported (expected "
            f"{FORMAT_VERSION})")
    try:
        net = d["network"]
        shape = NetworkShape(input_dim=int(net["input_dim"]),
                             hidden=tuple(net["hidden"]),
                             recurrent=bool(net["recurrent"]),
                             recurrent_units=int(net["recurrent_units"]),
                             action_dim=int(net["action_dim"]))
        prof = d["profile"]
        profile = RobotProfile(name=prof["name"],
                               wheel_radius=float(prof["wheel_radius"]),
                               wheel_base=float(prof["wheel_base"]),
                               v_range=tuple(prof["v_range"]),
                               w_range=tuple(prof["w_range"]),
                               body_radius=float(prof["body_radius"]))
        lid = d["lidar"]
        lidar = LidarConfig(beam_count=int(lid["beam_count"]),
                            min_range=float(lid["min_range"]),
                            max_range=float(lid["max_range"]))
        norm = d["normalization"]
        entries = tuple(TensorEntry(t["name"], tuple(t["shape"]), int(t["offset"]))
                        for t in d["tensors"])
        manifest = PolicyManifest(
            format_version=int(version),
            network=shape,
            profile=profile,
            lidar=lidar,
            goal_dist_max=float(norm["goal_dist_max"]),
            goal_radius=float(norm.get("goal_radius", 0.3)),
            tensors=entries,
            checksum_crc32=int(d["checksum_crc32"]),
            byte_length=int(d["byte_length"]),
            weights_file=str(d["weights_file"]),
            dtype=str(d.get("dtype", "float32-le")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed policy manifest ({exc})") from exc
    if manifest.dtype != "float32-le":
        raise ValueError(f"{path}: unsupported tensor dtype {manifest.dtype!r}")
    expected, total = _layout(shape)
    if manifest.tensors != expected or manifest.byte_length != total:
        raise ShapeMismatchError(
            f"{path}: tensor layout does not match the declared network shape")
    return manifest


def load_policy(path) -> tuple[PolicyWeights, PolicyManifest]:
    """Read a manifest + blob pair, verifying version, checksum, and shapes.

    Loaded tensors are float64 upcasts of the stored float32 values, so an
    immediate re-export reproduces the blob byte for byte.
    """
    path = Path(path)
    with open(path) as fh:
        manifest = _manifest_from_dict(json.load(fh), path)
    blob_path = path.parent / manifest.weights_file
    if not blob_path.exists():
        raise FileNotFoundError(f"weight blob {blob_path} not found")
    blob = blob_path.read_bytes()
    if len(blob) != manifest.byte_length:
        raise ChecksumMismatchError(
            f"{blob_path}: expected {manifest.byte_length} bytes, got {len(blob)}")
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    if crc != manifest.checksum_crc32:
        raise ChecksumMismatchError(
            f"{blob_path}: CRC-32 {crc:#010x} does not match manifest "
            f"{manifest.checksum_crc32:#010x}")
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest.tensors:
        count = int(np.prod(entry.shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry.offset)
        tensors[entry.name] = arr.reshape(entry.shape).astype(np.float64)
    return PolicyWeights(manifest.network, tensors), manifest


def infer(weights: PolicyWeights, manifest: PolicyManifest, ranges: np.ndarray,
          pose: Pose, goal: tuple[float, float], prev_action: Action,
          hidden: HiddenState | None = None) -> tuple[Action, HiddenState]:
    """Deterministic mean-action inference from raw sensor inputs.

    Builds the observation exactly as the training env does (same encoding
    function), runs the network, and clamps the squashed mean into the
    profile's command ranges.
    """
    ranges = np.asarray(ranges, dtype=np.float64)
    if ranges.shape != (manifest.lidar.beam_count,):
        raise ValueError(
            f"expected {manifest.lidar.beam_count} ranges, got shape {ranges.shape}")
    ranges = np.clip(ranges, manifest.lidar.min_range, manifest.lidar.max_range)
    obs = observation_vector(ranges, pose, goal, prev_action, manifest.lidar,
                             manifest.profile, manifest.goal_dist_max)
    mean, _, hidden_out, _ = nn.forward(weights, obs, hidden)
    return clamp_action(mean, manifest.profile), hidden_out
