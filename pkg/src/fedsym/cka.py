"""Linear centered kernel alignment between model outputs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import SampleStore
from .errors import DegenerateInput, ShapeMismatch
from .flsim import forward


def linear_cka(X: np.ndarray, Y: np.ndarray) -> float:
    """||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) on column-centred inputs."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeMismatch(f"need 2-D inputs with equal row counts, got {X.shape} and {Y.shape}")
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    if not Xc.any() or not Yc.any():
        raise DegenerateInput("a centred input is all zeros")
    cross = np.linalg.norm(Yc.T @ Xc) ** 2
    denom = np.linalg.norm(Xc.T @ Xc) * np.linalg.norm(Yc.T @ Yc)
    return float(min(1.0, max(0.0, cross / denom)))


@dataclass
class CkaMatrix:
    values: np.ndarray
    labels: list

    def off_diagonal(self) -> np.ndarray:
        m = self.values.shape[0]
        return self.values[~np.eye(m, dtype=bool)]


def cka_matrix(models, testset: SampleStore, labels=None) -> CkaMatrix:
    """Pairwise linear CKA of the models' logits on the full test set."""
    models = list(models)
    if len(models) < 2:
        raise ValueError("need at least two models")
    outputs = [forward(m, testset.features) for m in models]
    m = len(models)
    vals = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            vals[i, j] = vals[j, i] = linear_cka(outputs[i], outputs[j])
    if labels is None:
        labels = [str(i) for i in range(m)]
    return CkaMatrix(vals, [str(x) for x in labels])


def cka_csv(mat: CkaMatrix) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["", *mat.labels])
    for label, row in zip(mat.labels, mat.values):
        w.writerow([label, *(f"{v:.6f}" for v in row)])
    return out.getvalue()
