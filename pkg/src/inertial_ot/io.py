"""
On-disk dataset layout and small file helpers.

    <root>/dataset.json          config, seed, train/test sequence ids
    <root>/domain_<k>/imu.csv    t,ax,ay,az,gx,gy,gz,mx,my,mz
    <root>/domain_<k>/gt.csv     t,x,y,phi   (sensor-point pose, 5 Hz)
    <root>/domain_<k>/meta.json  domain index, offset_cm, seed, noise
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .sim import Arena, Dataset, DatasetConfig, DomainIndex, ImuStream, NoiseModel, Session

IMU_HEADER = "t,ax,ay,az,gx,gy,gz,mx,my,mz"
GT_HEADER = "t,x,y,phi"
FLOAT_FMT = "%.17g"


class DataError(RuntimeError):
    """Missing or malformed dataset files."""


def atomic_write_text(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _savetxt(path, arr, header):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, arr, fmt=FLOAT_FMT, delimiter=",", header=header, comments="")


def _loadtxt(path, header):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file {path}")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != header:
            raise DataError(f"{path}: expected header {header!r}, got {first!r}")
        arr = np.loadtxt(fh, delimiter=",", ndmin=2)
    return arr


def config_to_dict(config: DatasetConfig) -> dict:
    return asdict(config)


def config_from_dict(d) -> DatasetConfig:
    d = dict(d)
    d["arena"] = Arena(**d["arena"])
    d["noise"] = NoiseModel(**d["noise"])
    return DatasetConfig(**d)


def save_dataset(dataset: Dataset, root):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for s in dataset.sessions:
        d = root / f"domain_{s.domain.index}"
        d.mkdir(exist_ok=True)
        imu = np.column_stack([s.imu.t, s.imu.accel, s.imu.gyro, s.imu.mag])
        _savetxt(d / "imu.csv", imu, IMU_HEADER)
        _savetxt(d / "gt.csv", np.column_stack([s.gt_t, s.gt_pose]), GT_HEADER)
        write_json(d / "meta.json", {
            "domain_index": s.domain.index,
            "offset_cm": s.domain.offset_cm,
            "seed": s.seed,
            "noise": asdict(s.noise),
            "accel_bias": s.imu.accel_bias.tolist(),
            "gyro_bias": s.imu.gyro_bias.tolist(),
        })
        written += [d / "imu.csv", d / "gt.csv", d / "meta.json"]
    write_json(root / "dataset.json", {
        "format": 1,
        "seed": dataset.seed,
        "config": config_to_dict(dataset.config),
        "train_ids": dataset.train_ids.tolist(),
        "test_ids": dataset.test_ids.tolist(),
    })
    written.append(root / "dataset.json")
    return written


def load_dataset(root) -> Dataset:
    root = Path(root)
    index = root / "dataset.json"
    if not index.exists():
        raise DataError(f"no dataset at {root} (missing dataset.json)")
    try:
        info = json.loads(index.read_text(encoding="utf-8"))
        config = config_from_dict(info["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed {index}: {exc}") from exc
    sessions = []
    for k in range(config.n_domains):
        d = root / f"domain_{k}"
        imu = _loadtxt(d / "imu.csv", IMU_HEADER)
        gt = _loadtxt(d / "gt.csv", GT_HEADER)
        meta_path = d / "meta.json"
        if not meta_path.exists():
            raise DataError(f"missing file {meta_path}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        stream = ImuStream(imu[:, 0], imu[:, 1:4], imu[:, 4:7], imu[:, 7:10],
                           np.array(meta.get("accel_bias", [0, 0, 0]), dtype=float),
                           np.array(meta.get("gyro_bias", [0, 0, 0]), dtype=float))
        sessions.append(Session(DomainIndex(int(meta["domain_index"])), stream, gt[:, 0],
                                gt[:, 1:4], int(meta["seed"]), NoiseModel(**meta["noise"])))
    return Dataset(config, int(info["seed"]), sessions,
                   np.array(info["train_ids"], dtype=int), np.array(info["test_ids"], dtype=int))
