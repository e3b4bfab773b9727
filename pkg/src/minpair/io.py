"""Model files (JSON), result serialization and CSV writers.

Model file schema::

    {
      "n_states": 3,
      "actions": [[0, 1], [0], [0, 1]],
      "transitions": [
        {"x": 0, "a": 0, "row": [0.5, 0.5, 0.0]},
        {"x": 0, "a": 1, "row": {"support": [2], "probs": [1.0]}},
        ...
      ],
      "costs": [{"x": 0, "a": 0, "value": 1.0}, ...],
      "truncation_note": "optional text"
    }

Every admissible pair needs exactly one transition and one cost entry.
Unknown fields are rejected at every level.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .model import FiniteMdp, InvalidModelError, validate_model

MODEL_FIELDS = {"n_states", "actions", "transitions", "costs", "truncation_note"}
REQUIRED_FIELDS = MODEL_FIELDS - {"truncation_note"}


class ModelFileError(ValueError):
    pass


def _fail(msg):
    raise ModelFileError(f"mdp-core: model file: {msg}")


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        _fail(f"{where} must be an object")
    extra = set(obj) - set(allowed)
    if extra:
        _fail(f"unknown field(s) {sorted(extra)} in {where}")
    missing = set(required) - set(obj)
    if missing:
        _fail(f"missing field(s) {sorted(missing)} in {where}")


def model_from_dict(doc: dict) -> FiniteMdp:
    _check_keys(doc, MODEL_FIELDS, REQUIRED_FIELDS, "model")
    n = doc["n_states"]
    if not isinstance(n, int) or n < 1:
        _fail("n_states must be a positive integer")
    actions = doc["actions"]
    if not isinstance(actions, list) or len(actions) != n:
        _fail(f"actions must be a list of {n} lists")
    rows, costs = {}, {}
    for k, t in enumerate(doc["transitions"]):
        _check_keys(t, {"x", "a", "row"}, {"x", "a", "row"}, f"transitions[{k}]")
        key = (t["x"], t["a"])
        if key in rows:
            _fail(f"duplicate transition for pair {key}")
        row = t["row"]
        if isinstance(row, dict):
            _check_keys(row, {"support", "probs"}, {"support", "probs"}, f"transitions[{k}].row")
            if len(row["support"]) != len(row["probs"]):
                _fail(f"transitions[{k}].row: support and probs differ in length")
            rows[key] = dict(zip(row["support"], row["probs"]))
        elif isinstance(row, list):
            if len(row) != n:
                _fail(f"transitions[{k}].row has length {len(row)}, expected {n}")
            rows[key] = row
        else:
            _fail(f"transitions[{k}].row must be a list or a support/probs object")
    for k, c in enumerate(doc["costs"]):
        _check_keys(c, {"x", "a", "value"}, {"x", "a", "value"}, f"costs[{k}]")
        key = (c["x"], c["a"])
        if key in costs:
            _fail(f"duplicate cost for pair {key}")
        costs[key] = c["value"]
    try:
        model = FiniteMdp.from_rows(n, [tuple(a) for a in actions], rows, costs,
                                    doc.get("truncation_note", ""))
    except (KeyError, IndexError, TypeError) as exc:
        _fail(f"inconsistent pairs: {exc}")
    bad = validate_model(model)
    if bad:
        raise InvalidModelError(bad)
    return model


def load_model(path) -> FiniteMdp:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        _fail(f"{path}: not valid JSON ({exc})")
    return model_from_dict(doc)


def model_to_dict(model: FiniteMdp, sparse: bool = True) -> dict:
    trans, costs = [], []
    for k, (x, a) in enumerate(model.pairs):
        r = model.transition.getrow(k)
        if sparse:
            row = {"support": [int(i) for i in r.indices], "probs": [float(v) for v in r.data]}
        else:
            row = [float(v) for v in r.toarray().ravel()]
        trans.append({"x": int(x), "a": int(a), "row": row})
        costs.append({"x": int(x), "a": int(a), "value": float(model.cost[k])})
    out = {"n_states": model.n_states, "actions": [list(a) for a in model.actions],
           "transitions": trans, "costs": costs}
    if model.truncation_note:
        out["truncation_note"] = model.truncation_note
    return out


def dump_json(obj, path=None) -> str:
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def save_model(model: FiniteMdp, path) -> None:
    dump_json(model_to_dict(model), path)


def to_jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def occupation_to_dict(gamma) -> dict:
    return {"entries": [{"x": int(x), "a": int(a), "weight": w} for x, a, w in gamma.items()]}


def policy_rows(model: FiniteMdp, policy) -> list:
    w = policy.pair_weights(model)
    return [{"x": x, "probs": {str(a): float(w[model.state_ptr[x] + j])
                              for j, a in enumerate(model.actions[x])}}
            for x in range(model.n_states)]


def solution_to_dict(model: FiniteMdp, sol) -> dict:
    return {
        "rho_star": sol.rho_star,
        "lp_status": sol.lp_status,
        "gamma": occupation_to_dict(sol.gamma_star)["entries"],
        "policy": policy_rows(model, sol.policy),
        "state_marginal": sol.state_marginal,
        "duals": {"mass": sol.mass_dual, "balance": sol.dual_values},
        "invariance_residual": sol.pair.invariance_residual,
        "complementary_slackness": sol.complementary_slackness(),
    }


def fmt_value(v) -> str:
    """Infinite expected times render as ``inf(partial=..., depth=...)``."""
    if hasattr(v, "infinite"):
        return str(v)
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> str:
    """Fixed column order, repr floats, '\\n' line endings. Returns the text."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_value(v) for v in r])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def table(header, rows, width: int = 14) -> str:
    """Fixed-width text table."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            s = f"{float(v):.10g}"
        else:
            s = fmt_value(v)
        return s.rjust(width)
    lines = [" ".join(h.rjust(width) for h in header)]
    lines += [" ".join(cell(v) for v in r) for r in rows]
    return "\n".join(lines)
