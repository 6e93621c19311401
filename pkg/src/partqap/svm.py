"""One-vs-rest linear SVM trained by dual coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Row k of ``W`` and ``b[k]`` score class k against the rest."""

    W: np.ndarray
    b: np.ndarray
    C: float
    classes: np.ndarray

    def to_dict(self) -> dict:
        return {"C": self.C, "classes": self.classes.tolist(), "W": self.W.tolist(),
                "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        return cls(np.asarray(d["W"], float), np.asarray(d["b"], float), float(d["C"]),
                   np.asarray(d["classes"]))


def _binary_dual_cd(X: np.ndarray, y: np.ndarray, C: float, tol: float,
                    max_epochs: int, seed: int) -> np.ndarray:
    """Hinge-loss SVM, min 1/2 ||w||^2 + C sum max(0, 1 - y w.x), via the
    dual box QP; stops when the relative duality gap drops below ``tol``."""
    n, D = X.shape
    alpha = np.zeros(n)
    w = np.zeros(D)
    qdiag = np.einsum("ij,ij->i", X, X)
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            if qdiag[i] == 0:
                continue
            g = y[i] * (X[i] @ w) - 1.0
            a = min(max(alpha[i] - g / qdiag[i], 0.0), C)
            if a != alpha[i]:
                w += (a - alpha[i]) * y[i] * X[i]
                alpha[i] = a
        primal = 0.5 * (w @ w) + C * np.maximum(0.0, 1.0 - y * (X @ w)).sum()
        dual = alpha.sum() - 0.5 * (w @ w)
        if primal - dual <= tol * max(abs(primal), 1e-12):
            break
    return w


def train_svm(X, labels, C: float = 1.0, tol: float = 1e-4, bias: float = 1.0,
              max_epochs: int = 10000, seed: int = 0) -> SvmModel:
    """One binary model per class.  The bias is learned as the weight of a
    constant feature of value ``bias``, so it is regularized like the rest."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("training set holds a single class")
    Xa = np.hstack([X, np.full((X.shape[0], 1), bias)])
    Ws, bs = [], []
    for k in classes:
        y = np.where(labels == k, 1.0, -1.0)
        w = _binary_dual_cd(Xa, y, C, tol, max_epochs, seed)
        Ws.append(w[:-1])
        bs.append(w[-1] * bias)
    return SvmModel(W=np.array(Ws), b=np.array(bs), C=float(C), classes=classes)


def predict(model: SvmModel, X) -> np.ndarray:
    """n x classes matrix of raw decision values."""
    return np.atleast_2d(np.asarray(X, dtype=float)) @ model.W.T + model.b


def predict_labels(model: SvmModel, X) -> np.ndarray:
    return model.classes[np.argmax(predict(model, X), axis=1)]


def unit_rows(X) -> np.ndarray:
    """Scale every row to unit l2 norm (zero rows stay zero)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    nrm = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(nrm > 0, nrm, 1.0)
