"""Model file reading and writing (JSON)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidModelError, ModelFileError
from .model import OscillatorModel, PolynomialPotential, QuadraticPotential


def _matrix(doc: dict, key: str, n: int) -> np.ndarray:
    if key not in doc:
        raise ModelFileError(key, "missing")
    try:
        a = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ModelFileError(key, "must be an array of arrays of numbers") from None
    if a.shape != (n, n):
        raise ModelFileError(key, f"expected {n}x{n} matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelFileError(key, "entries must be finite")
    return a


def _positive(doc: dict, key: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ModelFileError(key, "missing")
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not np.isfinite(val) or val <= 0:
        raise ModelFileError(key, "must be a positive number")
    return float(val)


def model_from_dict(doc: dict) -> OscillatorModel:
    if not isinstance(doc, dict):
        raise ModelFileError("<root>", "model document must be a JSON object")
    n = doc.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ModelFileError("n", "must be a positive integer")
    M = _matrix(doc, "M", n)
    B = _matrix(doc, "B", n)
    Sigma = _matrix(doc, "Sigma", n)
    pot = doc.get("potential")
    if not isinstance(pot, dict) or "type" not in pot:
        raise ModelFileError("potential", "must be an object with a 'type'")
    try:
        if pot["type"] == "quadratic":
            potential = QuadraticPotential(_matrix(pot, "K", n))
        elif pot["type"] == "polynomial":
            coeffs = pot.get("coeffs")
            if not isinstance(coeffs, list):
                raise ModelFileError("potential.coeffs", "must be a list of numbers")
            potential = PolynomialPotential(tuple(coeffs))
        else:
            raise ModelFileError("potential.type", f"unknown potential type {pot['type']!r}")
    except ModelFileError as exc:
        if not exc.field.startswith("potential"):
            raise ModelFileError(f"potential.{exc.field}", str(exc).split(": ", 1)[1]) from None
        raise
    except (InvalidModelError, TypeError, ValueError) as exc:
        raise ModelFileError("potential", str(exc)) from None
    T = _positive(doc, "T")
    k = _positive(doc, "k", 1.0)
    try:
        return OscillatorModel(M, B, Sigma, potential, T=T, k=k)
    except InvalidModelError as exc:
        field = str(exc).split(" ", 1)[0]
        raise ModelFileError(field if field in ("M", "B", "Sigma", "T", "k") else "<model>", str(exc)) from None


def load_model(path) -> OscillatorModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFileError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError("<file>", f"invalid JSON: {exc}") from None
    return model_from_dict(doc)


def model_to_dict(model: OscillatorModel) -> dict:
    doc = {
        "n": model.n,
        "M": model.M.tolist(),
        "B": model.B.tolist(),
        "Sigma": model.Sigma.tolist(),
        "k": model.k,
        "T": model.T,
    }
    if isinstance(model.potential, QuadraticPotential):
        doc["potential"] = {"type": "quadratic", "K": model.potential.K.tolist()}
    elif isinstance(model.potential, PolynomialPotential):
        doc["potential"] = {"type": "polynomial", "coeffs": list(model.potential.coeffs)}
    else:
        raise InvalidModelError("custom potentials cannot be serialised")
    return doc


def save_model(model: OscillatorModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def inertial_model() -> OscillatorModel:
    """Single inertial particle m = beta = sigma = K = 1 at T = 1/2."""
    return OscillatorModel([[1.0]], [[1.0]], [[1.0]], QuadraticPotential([[1.0]]), T=0.5)
