"""JSON instance files and policy sidecars.

Instance document::

    {
      "format": "ambisddp-instance", "version": 1, "name": "...",
      "horizon": T,
      "x0": [...],
      "stages": [
        {"n_scen": N, "cost_x": [[...]] (N x d_x), "cost_y": [[...]] (N x d_y),
         "A": N x m x d_x, "B": N x m x d_y, "C": N x m x d_prev, "b": N x m,
         "relations": ["<=", ">=", "=", ...],
         "y_lower": [...], "y_upper": [...], "y_binary": [...], "x_upper": [...]},
        ...
      ],
      "supports": [{"realizations": N x d_omega, "reference_probs": [...]}, ...],
      "ambiguity": {"kind": "wasserstein_finite", "epsilon": 0.2, "norm": "l1"}
    }

Infinite bounds are written as ``null``. Floats are written with ``repr``
precision, so parse -> serialize -> parse reproduces every number exactly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ambiguity import AmbiguitySpec
from .errors import AmbiSddpError, ModelError
from .model import MultistageModel, ScenarioSupport, StageTemplate

FORMAT = "ambisddp-instance"


def _bounds_out(a):
    return [None if not np.isfinite(v) else float(v) for v in a]


def _bounds_in(a, default, where):
    if not isinstance(a, list):
        raise ModelError(f"field '{where}' must be a list")
    return np.array([default if v is None else float(v) for v in a], dtype=float)


def model_to_dict(model: MultistageModel, ambiguity: AmbiguitySpec | None = None) -> dict:
    stages = []
    for st in model.stages:
        stages.append({
            "n_scen": st.n_scen,
            "cost_x": st.cost_x.tolist(), "cost_y": st.cost_y.tolist(),
            "A": st.A.tolist(), "B": st.B.tolist(), "C": st.C.tolist(), "b": st.b.tolist(),
            "relations": st.relations.tolist(),
            "y_lower": _bounds_out(st.y_lower), "y_upper": _bounds_out(st.y_upper),
            "y_binary": [bool(v) for v in st.y_binary], "x_upper": st.x_upper.tolist(),
            "d_x": st.d_x, "d_y": st.d_y, "d_prev": st.d_prev,
        })
    doc = {
        "format": FORMAT, "version": 1, "name": model.name,
        "horizon": model.horizon, "x0": model.x0.tolist(), "stages": stages,
        "supports": [{"realizations": s.realizations.tolist(), "reference_probs": s.probs.tolist()}
                     for s in model.supports],
    }
    if ambiguity is not None:
        doc["ambiguity"] = {"kind": ambiguity.kind, "epsilon": ambiguity.epsilon, "norm": ambiguity.norm}
    return doc


def _get(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ModelError(f"missing field '{where}{key}'")
    return d[key]


def _array(value, shape, where):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"field '{where}' is not numeric") from None
    if a.size == 0:
        a = a.reshape(shape)
    if a.shape != shape:
        raise ModelError(f"field '{where}' has shape {a.shape}, expected {shape}")
    return a


def model_from_dict(doc: dict):
    """Parse an instance document. Returns ``(model, ambiguity or None)``."""
    if not isinstance(doc, dict):
        raise ModelError("instance document must be a JSON object")
    T = _get(doc, "horizon", "")
    if not isinstance(T, int) or T < 1:
        raise ModelError("field 'horizon' must be a positive integer")
    stages_doc = _get(doc, "stages", "")
    supports_doc = _get(doc, "supports", "")
    if not isinstance(stages_doc, list) or len(stages_doc) != T:
        raise ModelError(f"field 'stages' must list {T} stages")
    if not isinstance(supports_doc, list) or len(supports_doc) != T:
        raise ModelError(f"field 'supports' must list {T} supports")
    x0 = np.array(_get(doc, "x0", ""), dtype=float).ravel()
    stages = []
    d_prev = x0.size
    for t, sd in enumerate(stages_doc):
        w = f"stages[{t}]."
        n = _get(sd, "n_scen", w)
        cx = np.array(_get(sd, "cost_x", w), dtype=float)
        if cx.ndim != 2 or cx.shape[0] != n:
            raise ModelError(f"field '{w}cost_x' must be {n} x d_x")
        d_x = cx.shape[1]
        d_y = int(sd.get("d_y", np.array(_get(sd, "cost_y", w), dtype=float).reshape(n, -1).shape[1]))
        rel = _get(sd, "relations", w)
        if not isinstance(rel, list):
            raise ModelError(f"field '{w}relations' must be a list")
        m = len(rel)
        try:
            st = StageTemplate(
                n, cx, _array(_get(sd, "cost_y", w), (n, d_y), w + "cost_y"),
                _array(_get(sd, "A", w), (n, m, d_x), w + "A"),
                _array(_get(sd, "B", w), (n, m, d_y), w + "B"),
                _array(_get(sd, "C", w), (n, m, d_prev), w + "C"),
                _array(_get(sd, "b", w), (n, m), w + "b"), rel,
                y_lower=_bounds_in(sd.get("y_lower", [0.0] * d_y), -np.inf, w + "y_lower"),
                y_upper=_bounds_in(sd.get("y_upper", [None] * d_y), np.inf, w + "y_upper"),
                y_binary=np.array(sd.get("y_binary", [False] * d_y), dtype=bool),
                x_upper=_bounds_in(sd.get("x_upper", [1.0] * d_x), np.inf, w + "x_upper"),
                name=sd.get("name", ""))
        except AmbiSddpError as exc:
            raise ModelError(f"stage {t} ({w[:-1]}): {exc}") from None
        stages.append(st)
        d_prev = d_x
    supports = []
    for t, sp in enumerate(supports_doc):
        w = f"supports[{t}]."
        try:
            supports.append(ScenarioSupport(np.array(_get(sp, "realizations", w), dtype=float),
                                            np.array(_get(sp, "reference_probs", w), dtype=float)))
        except AmbiSddpError as exc:
            raise ModelError(f"field '{w[:-1]}': {exc}") from None
    model = MultistageModel(stages, supports, x0, name=doc.get("name", ""))
    amb = None
    if "ambiguity" in doc:
        a = doc["ambiguity"]
        try:
            amb = AmbiguitySpec(_get(a, "kind", "ambiguity."), float(_get(a, "epsilon", "ambiguity.")),
                                a.get("norm", "l1"))
        except AmbiSddpError as exc:
            raise ModelError(f"field 'ambiguity': {exc}") from None
    return model, amb


def dumps_model(model, ambiguity=None) -> str:
    return json.dumps(model_to_dict(model, ambiguity))


def save_model(path, model, ambiguity=None):
    Path(path).write_text(dumps_model(model, ambiguity), encoding="utf-8")


def load_model(path):
    """Read an instance file; malformed content raises ``ModelError`` naming the field."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"not valid JSON: {exc}") from None
    return model_from_dict(doc)


def save_policy(path, policy):
    Path(path).write_text(json.dumps(policy.to_dict()), encoding="utf-8")


def load_policy(path, model):
    from .sddp import Policy

    return Policy.from_dict(model, json.loads(Path(path).read_text(encoding="utf-8")))
