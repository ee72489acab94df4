"""Problem files: JSON with a metadata header and row-major flattened arrays."""
import hashlib
import json
import os
import tempfile

import numpy as np

from .quadratic import LinearGame, NPlayerQuadraticGame, QuadraticMinimaxGame, RobotControlGame
from .sine import SineNonCocoerciveGame

FORMAT = "pearlsgd-problem"
VERSION = 1

PROBLEM_TYPES = {cls.kind: cls for cls in (LinearGame, RobotControlGame, QuadraticMinimaxGame,
                                           NPlayerQuadraticGame, SineNonCocoerciveGame)}


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def problem_to_document(problem):
    data = problem.to_dict()
    arrays = {name: {"shape": list(np.shape(arr)),
                     "data": np.asarray(arr, dtype=np.float64).ravel(order="C").tolist()}
              for name, arr in data["arrays"].items()}
    return {"format": FORMAT, "version": VERSION, "kind": data["kind"],
            "metadata": _jsonable(data["metadata"]), "scalars": _jsonable(data["scalars"]),
            "arrays": arrays}


def problem_from_document(doc):
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    kind = doc["kind"]
    if kind not in PROBLEM_TYPES:
        raise ValueError(f"unknown problem kind {kind!r}")
    arrays = {name: np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
              for name, spec in doc["arrays"].items()}
    return PROBLEM_TYPES[kind].from_dict({"kind": kind, "metadata": doc["metadata"],
                                          "scalars": doc["scalars"], "arrays": arrays})


def dumps_problem(problem):
    return json.dumps(problem_to_document(problem), sort_keys=True, separators=(",", ":")) + "\n"


def problem_hash(problem):
    return hashlib.sha256(dumps_problem(problem).encode()).hexdigest()


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_problem(problem, path):
    atomic_write_text(path, dumps_problem(problem))


def load_problem(path):
    with open(path, encoding="utf-8") as fh:
        return problem_from_document(json.load(fh))
