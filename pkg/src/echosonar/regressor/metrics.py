"""Error metrics: per-coordinate MAE (headline), Euclidean joint error, and breakdowns."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..skeleton import BONES, FINGER_JOINTS, FINGERS, JOINT_NAMES, N_JOINTS


def mae(pred, label) -> float:
    """Mean absolute error over samples and all 63 coordinates (mm)."""
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(label, dtype=np.float64))))


def mse(pred, label) -> float:
    return float(np.mean((np.asarray(pred, dtype=np.float64) - np.asarray(label, dtype=np.float64)) ** 2))


@dataclass
class MetricsReport:
    n_samples: int
    mae_mm: float
    mse_mm2: float
    euclid_mean_mm: float
    euclid_median_mm: float
    per_joint_mae: np.ndarray  # (21,)
    per_joint_euclid: np.ndarray  # (21,)

    def per_finger(self) -> dict:
        """Mean over the finger's joints (wrist and palm excluded)."""
        return {f: float(self.per_joint_mae[list(FINGER_JOINTS[f])].mean()) for f in FINGERS}

    def per_bone(self) -> dict:
        """A bone's error is the error of its distal joint."""
        return {b.label: float(self.per_joint_mae[b.child]) for b in BONES}

    def summary(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "mae_mm": self.mae_mm,
            "mse_mm2": self.mse_mm2,
            "euclid_mean_mm": self.euclid_mean_mm,
            "euclid_median_mm": self.euclid_median_mm,
        }

    def to_csv(self) -> str:
        """Long-format rows: ``group,name,mae_mm,euclid_mm``."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["group", "name", "mae_mm", "euclid_mm"])
        w.writerow(["overall", "all", repr(self.mae_mm), repr(self.euclid_mean_mm)])
        for j in range(N_JOINTS):
            w.writerow(["joint", JOINT_NAMES[j], repr(float(self.per_joint_mae[j])),
                        repr(float(self.per_joint_euclid[j]))])
        for f in FINGERS:
            idx = list(FINGER_JOINTS[f])
            w.writerow(["finger", f, repr(float(self.per_joint_mae[idx].mean())),
                        repr(float(self.per_joint_euclid[idx].mean()))])
        for b in BONES:
            w.writerow(["bone", b.label, repr(float(self.per_joint_mae[b.child])),
                        repr(float(self.per_joint_euclid[b.child]))])
        return out.getvalue()


def report(pred, label) -> MetricsReport:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, N_JOINTS, 3)
    label = np.asarray(label, dtype=np.float64).reshape(-1, N_JOINTS, 3)
    if pred.shape[0] == 0:
        raise InputError("cannot evaluate an empty dataset")
    if pred.shape != label.shape:
        raise InputError(f"prediction shape {pred.shape} != label shape {label.shape}")
    err = pred - label
    eu = np.linalg.norm(err, axis=-1)
    return MetricsReport(
        n_samples=pred.shape[0],
        mae_mm=float(np.mean(np.abs(err))),
        mse_mm2=float(np.mean(err**2)),
        euclid_mean_mm=float(eu.mean()),
        euclid_median_mm=float(np.median(eu)),
        per_joint_mae=np.abs(err).mean(axis=(0, 2)),
        per_joint_euclid=eu.mean(axis=0),
    )
