"""Text and JSON specifications for matrices and estimators.

Matrix strings (``name:arg:...``)::

    identity:n          I_n
    diag-spike:n        e_1 e_1^T
    diag-flat:n         I_n / sqrt(n)
    offdiag:n           (J - I) / sqrt(n (n - 1))
    planted-p1:n[:eps[:seed]]   game-5 P1 matrix (Haar-random u, v)
    planted-p2:n:eps[:seed]     game-5 P2 matrix
    rotated:<inner>:seed        Q^T B Q with Q Haar-random from ``seed``

Anything ending in ``.json`` is read as a JSON matrix document; the schema
is the one produced by :func:`matrix_to_dict`.

Estimator strings: ``rademacher``, ``gaussian``, ``unit``, ``orthogonal`` or
``configured:<file.json>`` with ``{"k": k, "configurations": [{"probability",
"angles", "weights"}, ...]}``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .estimators import LinearEstimator, configured
from .oracle import DenseSymmetric, Diagonal, ImplicitMatrix, PlantedRank, Rotated
from .sampler import RandomSource, haar_orthogonal_matrix

#: stream id reserved for rotations generated from a matrix spec seed
ROTATION_STREAM = 7
#: stream id for planted directions generated from a matrix spec seed
PLANTED_STREAM = 5

DEFAULT_PLANTED_SEED = 0
BASE_ESTIMATORS = ("rademacher", "gaussian", "unit", "orthogonal")


class SpecError(ValueError):
    """Malformed or unknown matrix / estimator specification."""


def seeded_rotation(n: int, seed: int) -> np.ndarray:
    return haar_orthogonal_matrix(n, RandomSource(seed, ROTATION_STREAM))


# -- JSON round trip ----------------------------------------------------------


def matrix_to_dict(A: ImplicitMatrix) -> dict:
    if isinstance(A, Diagonal):
        return {"kind": "diagonal", "n": A.n, "values": A.values.tolist()}
    if isinstance(A, DenseSymmetric):
        return {"kind": "dense", "n": A.n, "entries": A.entries.tolist()}
    if isinstance(A, PlantedRank):
        factors = [{"coefficient": float(c), "direction": d.tolist()} for c, d in zip(A.coefficients, A.directions)]
        return {"kind": "planted", "n": A.n, "factors": factors}
    if isinstance(A, Rotated):
        doc = {"kind": "rotated", "n": A.n, "inner": matrix_to_dict(A.inner)}
        if A.seed is None:
            doc["rotation"] = A.rotation.tolist()
        else:
            doc["seed"] = A.seed
        return doc
    raise SpecError(f"cannot serialize {type(A).__name__}")


def matrix_from_dict(doc: dict) -> ImplicitMatrix:
    try:
        kind = doc["kind"]
        if kind == "diagonal":
            A = Diagonal(doc["values"])
        elif kind == "dense":
            A = DenseSymmetric(doc["entries"])
        elif kind == "planted":
            factors = doc["factors"]
            A = PlantedRank([f["coefficient"] for f in factors], [f["direction"] for f in factors])
        elif kind == "rotated":
            inner = matrix_from_dict(doc["inner"])
            if "seed" in doc and doc["seed"] is not None:
                seed = int(doc["seed"])
                A = Rotated(inner, seeded_rotation(inner.n, seed), seed)
            else:
                A = Rotated(inner, doc["rotation"])
        else:
            raise SpecError(f"unknown matrix kind {kind!r}")
    except KeyError as exc:
        raise SpecError(f"matrix document is missing field {exc}") from None
    if "n" in doc and int(doc["n"]) != A.n:
        raise SpecError(f"declared n={doc['n']} but data has n={A.n}")
    return A


def dump_matrix(A: ImplicitMatrix, path) -> None:
    Path(path).write_text(json.dumps(matrix_to_dict(A)) + "\n")


def load_matrix(path) -> ImplicitMatrix:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read matrix file {path}: {exc}") from None
    return matrix_from_dict(doc)


# -- builtin generators -------------------------------------------------------


def _int(text: str, what: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise SpecError(f"{what} must be an integer, got {text!r}") from None
    return v


def _dim(text: str) -> int:
    n = _int(text, "n")
    if n < 1:
        raise SpecError(f"n must be >= 1, got {n}")
    return n


def _planted(which: int, args: list[str]) -> ImplicitMatrix:
    from .lowerbound import GameParams, Hypothesis, PlantedPair

    if not args:
        raise SpecError("planted matrix needs n")
    n = _dim(args[0])
    if n < 2:
        raise SpecError("planted matrices need n >= 2")
    if which == 2 and len(args) < 2:
        raise SpecError("planted-p2 needs n:eps")
    eps = float(args[1]) if len(args) > 1 else 0.0
    seed = _int(args[2], "seed") if len(args) > 2 else DEFAULT_PLANTED_SEED
    if not 0 <= eps < 1 / 3:
        raise SpecError("epsilon ∈ (0, 1/3) required")
    alpha, beta = GameParams(eps).coefficients(Hypothesis(which))
    frame = haar_orthogonal_matrix(n, RandomSource(seed, PLANTED_STREAM))[:2]
    return PlantedPair(frame[0], alpha, frame[1], beta).matrix()


def parse_matrix(spec: str) -> ImplicitMatrix:
    """Build a matrix from a builtin string or a JSON file path."""
    spec = spec.strip()
    if spec.endswith(".json"):
        return load_matrix(spec)
    name, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    if name == "rotated":
        inner_spec, _, seed_text = rest.rpartition(":")
        if not inner_spec:
            raise SpecError("rotated needs rotated:<inner>:seed")
        seed = _int(seed_text, "seed")
        inner = parse_matrix(inner_spec)
        return Rotated(inner, seeded_rotation(inner.n, seed), seed)
    if name in ("planted-p1", "planted-p2"):
        return _planted(int(name[-1]), args)
    if len(args) != 1:
        raise SpecError(f"{name or spec!r} takes exactly one argument n")
    n = _dim(args[0])
    if name == "identity":
        return Diagonal(np.ones(n))
    if name == "diag-spike":
        v = np.zeros(n)
        v[0] = 1.0
        return Diagonal(v)
    if name == "diag-flat":
        return Diagonal(np.full(n, 1 / math.sqrt(n)))
    if name == "offdiag":
        if n < 2:
            raise SpecError("offdiag needs n >= 2")
        m = (np.ones((n, n)) - np.eye(n)) / math.sqrt(n * (n - 1))
        return DenseSymmetric(m)
    raise SpecError(f"unknown matrix kind {name!r}")


def standard_family(n: int = 16, seed: int = 7) -> dict[str, ImplicitMatrix]:
    """Five unit-Frobenius test matrices spanning diagonal, dense and planted shapes."""
    names = [
        f"diag-spike:{n}",
        f"diag-flat:{n}",
        f"offdiag:{n}",
        f"rotated:diag-spike:{n}:{seed}",
        f"planted-p1:{n}:0:{seed}",
    ]
    return {s: parse_matrix(s) for s in names}


# -- estimators ---------------------------------------------------------------


def load_configured(path) -> LinearEstimator:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read configuration file {path}: {exc}") from None
    try:
        mixture = [(c["probability"], c["angles"], c["weights"]) for c in doc["configurations"]]
        est = configured(mixture)
    except KeyError as exc:
        raise SpecError(f"configuration file is missing field {exc}") from None
    if "k" in doc and int(doc["k"]) != est.k:
        raise SpecError(f"declared k={doc['k']} but configurations have {est.k} weights")
    return est


def parse_estimator(spec: str, k: int | None = None) -> LinearEstimator:
    spec = spec.strip()
    if spec.startswith("configured:"):
        est = load_configured(spec.partition(":")[2])
        if k is not None and k != est.k:
            raise SpecError(f"--k {k} disagrees with the configuration's k={est.k}")
        return est
    if spec not in BASE_ESTIMATORS:
        raise SpecError(f"unknown estimator {spec!r}; expected one of {BASE_ESTIMATORS} or configured:<file>")
    if k is None:
        raise SpecError(f"estimator {spec!r} needs k")
    return LinearEstimator(spec, k)
