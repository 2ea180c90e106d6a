"""JSON encodings of states, density matrices, witness parameters and Kraus sets.

Complex numbers are written as ``[re, im]`` pairs throughout.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CohmeterError, DimensionMismatch, InvalidState
from .hilbert import DensityMatrix, ExcitationState, pure_density
from .witness import WitnessParams


class ParseError(CohmeterError):
    """Input is not valid JSON or lacks required fields."""


def _pair(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _complex_vector(items) -> np.ndarray:
    try:
        return np.array([complex(re, im) for re, im in items], dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"expected a list of [re, im] pairs: {exc}") from None


def _complex_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise ParseError("expected a non-empty list of rows")
    mat = [_complex_vector(row) for row in rows]
    if len({row.size for row in mat}) != 1:
        raise ParseError("rows have different lengths")
    return np.array(mat)


def matrix_to_rows(mat: np.ndarray) -> list:
    return [[_pair(z) for z in row] for row in np.asarray(mat)]


def _require(data: dict, *keys):
    if not isinstance(data, dict):
        raise ParseError("expected a JSON object")
    missing = [k for k in keys if k not in data]
    if missing:
        raise ParseError(f"missing field(s): {', '.join(missing)}")


def _check_n(data: dict, size: int):
    if data["n"] != size:
        raise DimensionMismatch(f"declared n={data['n']} but data has dimension {size}")


def state_to_json(state: ExcitationState) -> dict:
    return {"n": state.n, "amplitudes": [_pair(z) for z in state.amplitudes]}


def density_to_json(rho: DensityMatrix) -> dict:
    return {"n": rho.n, "rows": matrix_to_rows(rho.matrix)}


def params_to_json(params: WitnessParams) -> dict:
    return {"n": params.n, "pairs": [[_pair(a), _pair(b)] for a, b in params.pairs]}


def state_from_json(data: dict) -> ExcitationState:
    _require(data, "n", "amplitudes")
    amps = _complex_vector(data["amplitudes"])
    _check_n(data, amps.size)
    return ExcitationState(amps)


def density_from_json(data: dict) -> DensityMatrix:
    _require(data, "n", "rows")
    mat = _complex_matrix(data["rows"])
    _check_n(data, mat.shape[0])
    return DensityMatrix(mat)


def params_from_json(data: dict) -> WitnessParams:
    _require(data, "n", "pairs")
    try:
        alpha = _complex_vector([p[0] for p in data["pairs"]])
        beta = _complex_vector([p[1] for p in data["pairs"]])
    except (TypeError, IndexError, KeyError):
        raise ParseError("pairs must be a list of [[re, im], [re, im]] entries") from None
    _check_n(data, alpha.size // 2)
    return WitnessParams(alpha, beta)


def rho_from_json(data: dict) -> DensityMatrix:
    """Accept either encoding; pure states are turned into projectors."""
    if isinstance(data, dict) and "amplitudes" in data:
        return pure_density(state_from_json(data))
    if isinstance(data, dict) and "rows" in data:
        return density_from_json(data)
    raise ParseError("expected a state ('amplitudes') or density matrix ('rows') object")


def kraus_from_json(data: dict) -> list[np.ndarray]:
    _require(data, "n", "operators")
    ops = []
    for op in data["operators"]:
        _require(op, "rows")
        mat = _complex_matrix(op["rows"])
        if mat.shape != (data["n"], data["n"]):
            raise DimensionMismatch(f"operator shape {mat.shape} does not match n={data['n']}")
        ops.append(mat)
    if not ops:
        raise InvalidState("a Kraus set needs at least one operator")
    return ops


def kraus_to_json(n: int, matrices) -> dict:
    return {"n": n, "operators": [{"rows": matrix_to_rows(m)} for m in matrices]}


def load_json(path: str | Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
