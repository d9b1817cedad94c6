"""(NCP, target) corpora: generation, JSON-lines storage and splitting.

On disk a dataset is a directory with ``manifest.json`` and ``records.jsonl``.
Complex matrices are flat row-major lists of ``[re, im]`` pairs; floats are
written with ``repr`` precision so a round trip is exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import SystemSpec, pulse_fidelity
from .grape import (
    DCP_THRESHOLD,
    NCP_THRESHOLD,
    OptimConfig,
    generate_dcp,
    generate_ncp,
    ncp_target,
)
from .quantum import RngSeed

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"


def encode_complex(m: np.ndarray) -> list[list[float]]:
    flat = np.asarray(m, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def decode_complex(data, shape: tuple[int, int]) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


def encode_pulses(p: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.asarray(p, dtype=float)]


@dataclass
class DatasetRecord:
    id: int
    seed: RngSeed
    u_target: np.ndarray
    ncp: np.ndarray
    ncp_fidelity: float
    dcp: np.ndarray | None = None
    dcp_fidelity: float | None = None
    drift_tag: str = "none"

    def __post_init__(self):
        if (self.dcp is None) != (self.dcp_fidelity is None):
            raise ValueError("dcp and dcp_fidelity must be given together")

    def target_superop(self) -> np.ndarray:
        return ncp_target(self.u_target)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "seed": [self.seed.seed, self.seed.stream],
            "u_target": encode_complex(self.u_target),
            "ncp": encode_pulses(self.ncp),
            "ncp_fidelity": self.ncp_fidelity,
            "dcp": None if self.dcp is None else encode_pulses(self.dcp),
            "dcp_fidelity": self.dcp_fidelity,
            "drift_tag": self.drift_tag,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetRecord":
        return cls(
            id=int(d["id"]),
            seed=RngSeed(*d["seed"]),
            u_target=decode_complex(d["u_target"], (2, 2)),
            ncp=np.asarray(d["ncp"], dtype=float),
            ncp_fidelity=float(d["ncp_fidelity"]),
            dcp=None if d.get("dcp") is None else np.asarray(d["dcp"], dtype=float),
            dcp_fidelity=None if d.get("dcp_fidelity") is None else float(d["dcp_fidelity"]),
            drift_tag=d.get("drift_tag", "none"),
        )


@dataclass
class DatasetManifest:
    system: dict
    global_seed: RngSeed
    counts: dict = field(default_factory=dict)
    splits: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version,
            "system": self.system,
            "global_seed": [self.global_seed.seed, self.global_seed.stream],
            "counts": self.counts,
            "splits": self.splits,
            "skipped": self.skipped,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetManifest":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format version {d.get('format_version')}")
        return cls(
            system=d["system"],
            global_seed=RngSeed(*d["global_seed"]),
            counts=d.get("counts", {}),
            splits=d.get("splits", {}),
            skipped=d.get("skipped", []),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _generate_one(args):
    rec_id, seed, sys_drift, ncp_cfg, dcp_cfg, with_dcp = args
    found = generate_ncp(seed, ncp_cfg, sys_drift)
    if found is None:
        return rec_id, None, "ncp"
    u, ncp, ncp_fid = found[:3]
    rec = DatasetRecord(rec_id, seed, u, ncp, ncp_fid, drift_tag=sys_drift.tag)
    if with_dcp:
        res = generate_dcp(sys_drift, ncp, rec.target_superop(), dcp_cfg)
        if res.fidelity < DCP_THRESHOLD:
            return rec_id, None, "dcp"
        rec.dcp = res.pulses
        rec.dcp_fidelity = res.fidelity
    return rec_id, rec, None


def generate_records(
    count: int,
    sys_drift: SystemSpec,
    global_seed: RngSeed,
    with_dcp: bool,
    ncp_cfg: OptimConfig | None = None,
    dcp_cfg: OptimConfig | None = None,
    workers: int = 1,
):
    """Admit ``count`` records; returns ``(records, skipped_ids)``.

    Record ``k`` uses seed ``(global_seed.seed, stream=k)``. A seed whose NCP or
    DCP misses its threshold is skipped and the next stream is tried.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    ncp_cfg = ncp_cfg or OptimConfig(target_fidelity=NCP_THRESHOLD)
    dcp_cfg = dcp_cfg or OptimConfig(target_fidelity=NCP_THRESHOLD)
    records: list[DatasetRecord] = []
    skipped: list[int] = []
    next_id = 0

    def tasks(n):
        nonlocal next_id
        out = [
            (k, RngSeed(global_seed.seed, k), sys_drift, ncp_cfg, dcp_cfg, with_dcp)
            for k in range(next_id, next_id + n)
        ]
        next_id += n
        return out

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while len(records) < count:
            batch = tasks(count - len(records))
            results = pool.map(_generate_one, batch, chunksize=4) if pool else map(_generate_one, batch)
            for rec_id, rec, reason in results:
                if rec is None:
                    logger.warning("record %d skipped (%s threshold not reached)", rec_id, reason)
                    skipped.append(rec_id)
                else:
                    records.append(rec)
    finally:
        if pool:
            pool.shutdown()
    return records, skipped


def build_dataset(
    count: int,
    sys_drift: SystemSpec,
    global_seed: RngSeed,
    with_dcp: bool,
    system_block: dict | None = None,
    ncp_cfg: OptimConfig | None = None,
    dcp_cfg: OptimConfig | None = None,
    workers: int = 1,
):
    """Generate ``count`` records and a manifest describing them."""
    records, skipped = generate_records(count, sys_drift, global_seed, with_dcp, ncp_cfg, dcp_cfg, workers)
    manifest = DatasetManifest(
        system=system_block or {"tag": sys_drift.tag, "horizon": sys_drift.horizon, "slots": sys_drift.slots},
        global_seed=global_seed,
        counts={"total": len(records)},
        splits={"all": [r.id for r in records]},
        skipped=skipped,
    )
    return manifest, records


def split(records: Sequence, train_fraction: float, seed: RngSeed):
    """Seeded shuffle into disjoint train/test lists."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n_train = int(round(train_fraction * len(records)))
    if n_train == 0 or n_train == len(records):
        raise ValueError(f"split of {len(records)} records at {train_fraction} leaves one side empty")
    order = seed.generator().permutation(len(records))
    train = [records[i] for i in sorted(order[:n_train])]
    test = [records[i] for i in sorted(order[n_train:])]
    return train, test


def assign_splits(manifest: DatasetManifest, train: Iterable, test: Iterable) -> None:
    manifest.splits = {"train": [r.id for r in train], "test": [r.id for r in test]}
    manifest.counts = {k: len(v) for k, v in manifest.splits.items()}


def write_dataset(path: Path | str, manifest: DatasetManifest, records: Sequence[DatasetRecord]) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    listed = sum(manifest.counts.values())
    if listed != len(records):
        raise ValueError(f"manifest counts {manifest.counts} do not match {len(records)} records")
    with open(path / RECORDS_NAME, "w") as fh:
        for rec in sorted(records, key=lambda r: r.id):
            fh.write(json.dumps(rec.to_json()) + "\n")
    with open(path / MANIFEST_NAME, "w") as fh:
        json.dump(manifest.to_json(), fh, indent=2)
        fh.write("\n")


def read_dataset(path: Path | str) -> tuple[DatasetManifest, list[DatasetRecord]]:
    path = Path(path)
    with open(path / MANIFEST_NAME) as fh:
        manifest = DatasetManifest.from_json(json.load(fh))
    with open(path / RECORDS_NAME) as fh:
        records = [DatasetRecord.from_json(json.loads(line)) for line in fh if line.strip()]
    if sum(manifest.counts.values()) != len(records):
        raise ValueError("manifest counts do not match the record file")
    return manifest, records


def select(records: Sequence[DatasetRecord], ids: Iterable[int]) -> list[DatasetRecord]:
    by_id = {r.id: r for r in records}
    return [by_id[i] for i in ids]


def verify_record(rec: DatasetRecord, sys_drift: SystemSpec) -> tuple[float, float | None]:
    """Recompute (ncp_fidelity, dcp_fidelity) from pulses and target."""
    y = rec.target_superop()
    ncp_f = pulse_fidelity(sys_drift.without_drift(), rec.ncp, y)
    dcp_f = None if rec.dcp is None else pulse_fidelity(sys_drift, rec.dcp, y)
    return ncp_f, dcp_f
