"""Small input-validation helpers shared by the estimators."""

import os
import tempfile

import numpy as np

from .exceptions import ActionOffSimplex, ValidationError

SIMPLEX_TOL = 1e-9


def check_rng(seed):
    """Return a ``numpy.random.Generator`` for ``seed`` (int, None or Generator)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_simplex(weights, tol=SIMPLEX_TOL, name="weights"):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValidationError(f"{name} must be a 1-d vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ActionOffSimplex(f"{name} contains non-finite values")
    if np.any(w < -tol):
        raise ActionOffSimplex(f"{name} has negative components: {w}")
    if abs(w.sum() - 1.0) > tol:
        raise ActionOffSimplex(f"{name} sums to {w.sum()!r}, not 1")
    return w


def check_2d(X, n_features=None, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValidationError(f"{name} must be 2-d, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValidationError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_row_stochastic(M, tol=SIMPLEX_TOL, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValidationError(f"{name} must be 2-d")
    if np.any(M < -tol) or np.any(M > 1 + tol):
        raise ValidationError(f"{name} has entries outside [0, 1]")
    if not np.allclose(M.sum(axis=1), 1.0, rtol=0.0, atol=tol):
        raise ValidationError(f"{name} rows do not sum to 1")
    return M


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory + rename."""
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
