"""On-disk formats: instance JSON, dataset CSV, predictor/report JSON, trace JSONL.

All JSON is written canonically (sorted keys, two-space indent, trailing
newline) with floats in shortest round-trip form, so save -> load -> save
reproduces files byte for byte and every stored number survives the trip
exactly.

Dataset CSV uses the header ``context_id,y_1,...,y_d``. In functional mode
(affine hypotheses) the context column holds '|'-separated feature values.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .generate import SamplingModel
from .model import (
    AffineHypothesis,
    Dataset,
    Instance,
    RandomizedPredictor,
    Receiver,
    Sample,
    SenderUtility,
    TabularHypothesis,
)
from .solver import DualVector


def dumps_canonical(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_canonical(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


# ---------------------------------------------------------------------------
# instance
# ---------------------------------------------------------------------------


def instance_to_dict(instance: Instance) -> dict:
    hypos = []
    for h in instance.hypotheses:
        if isinstance(h, TabularHypothesis):
            hypos.append(
                {"kind": "tabular", "values": {k: _floats(v) for k, v in h.values.items()}}
            )
        else:
            hypos.append({"kind": "affine", "matrix": _floats(h.matrix), "offset": _floats(h.offset)})
    sampling = None
    if isinstance(instance.sampling, SamplingModel):
        law = instance.sampling
        sampling = {
            "context_names": list(law.context_names),
            "context_probs": _floats(law.context_probs),
            "outcome_probs": _floats(law.outcome_probs),
            "lo": _floats(law.lo),
            "hi": _floats(law.hi),
            "fixture": law.fixture,
        }
    return {
        "kind": "instance",
        "d": instance.d,
        "joint_action_cap": instance.joint_action_cap,
        "outcome_box": {"lo": _floats(instance.outcome_lo), "hi": _floats(instance.outcome_hi)},
        "receivers": [
            {"action_weights": _floats(r.action_weights), "action_offsets": _floats(r.action_offsets)}
            for r in instance.receivers
        ],
        "sender": {"alphas": _floats(instance.sender.alphas), "betas": _floats(instance.sender.betas)},
        "hypotheses": hypos,
        "sampling": sampling,
    }


def instance_from_dict(doc: dict) -> Instance:
    if doc.get("kind") != "instance":
        raise ValueError("not an instance document")
    hypos = []
    for h in doc["hypotheses"]:
        if h["kind"] == "tabular":
            hypos.append(TabularHypothesis({k: np.asarray(v) for k, v in h["values"].items()}))
        elif h["kind"] == "affine":
            hypos.append(AffineHypothesis(matrix=h["matrix"], offset=h["offset"]))
        else:
            raise ValueError(f"unknown hypothesis kind {h['kind']!r}")
    sampling = None
    if doc.get("sampling") is not None:
        s = doc["sampling"]
        sampling = SamplingModel(
            context_names=tuple(s["context_names"]),
            context_probs=np.asarray(s["context_probs"]),
            outcome_probs=np.asarray(s["outcome_probs"]),
            lo=np.asarray(s["lo"]),
            hi=np.asarray(s["hi"]),
            fixture=s.get("fixture"),
        )
    return Instance(
        d=doc["d"],
        receivers=tuple(
            Receiver(action_weights=r["action_weights"], action_offsets=r["action_offsets"])
            for r in doc["receivers"]
        ),
        sender=SenderUtility(alphas=doc["sender"]["alphas"], betas=doc["sender"]["betas"]),
        hypotheses=tuple(hypos),
        joint_action_cap=doc["joint_action_cap"],
        outcome_lo=doc["outcome_box"]["lo"],
        outcome_hi=doc["outcome_box"]["hi"],
        sampling=sampling,
    )


def save_instance(instance: Instance, path) -> None:
    write_json(instance_to_dict(instance), path)


def load_instance(path) -> Instance:
    return instance_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# dataset CSV
# ---------------------------------------------------------------------------


def _context_to_field(ctx) -> str:
    if isinstance(ctx, str):
        return ctx
    return "|".join(repr(float(x)) for x in np.asarray(ctx))


def _context_from_field(field: str, functional: bool):
    if functional:
        return np.asarray([float(x) for x in field.split("|")])
    return field


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["context_id"] + [f"y_{j + 1}" for j in range(dataset.d)])
    for s in dataset.samples:
        writer.writerow([_context_to_field(s.context_id)] + [repr(float(y)) for y in s.outcome])
    return buf.getvalue()


def dataset_from_csv(text: str, functional: bool = False) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "context_id":
        raise ValueError("dataset CSV must start with a 'context_id,y_1,...' header")
    samples = []
    for row in reader:
        if not row:
            continue
        ctx = _context_from_field(row[0], functional)
        samples.append(Sample(ctx, [float(x) for x in row[1:]]))
    return Dataset(samples)


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(dataset))


def load_dataset(path, instance: Instance | None = None) -> Dataset:
    functional = instance is not None and not instance.is_tabular
    ds = dataset_from_csv(Path(path).read_text(), functional=functional)
    if instance is not None and ds.d != instance.d:
        raise ValueError(f"dataset dimension {ds.d} does not match instance dimension {instance.d}")
    return ds


# ---------------------------------------------------------------------------
# predictor (+ optional dual)
# ---------------------------------------------------------------------------


def predictor_to_dict(predictor: RandomizedPredictor, dual: DualVector | None = None) -> dict:
    doc = {
        "kind": "predictor",
        "n_hypotheses": int(predictor.weights.shape[0]),
        "weights": [
            {"hypothesis": int(k), "weight": float(predictor.weights[k])}
            for k in predictor.support
        ],
    }
    doc["dual"] = (
        None if dual is None else {"entries": _floats(dual.entries), "mass": float(dual.mass)}
    )
    return doc


def predictor_from_dict(doc: dict, instance: Instance | None = None):
    if doc.get("kind") != "predictor":
        raise ValueError("not a predictor document")
    n = doc["n_hypotheses"]
    if instance is not None and n != instance.n_hypotheses:
        raise ValueError(
            f"predictor was built for {n} hypotheses, instance has {instance.n_hypotheses}"
        )
    weights = np.zeros(n)
    for entry in doc["weights"]:
        k = entry["hypothesis"]
        if not 0 <= k < n:
            raise ValueError(f"predictor references unknown hypothesis id {k}")
        weights[k] = entry["weight"]
    predictor = RandomizedPredictor(weights)
    dual = None
    if doc.get("dual") is not None:
        dual = DualVector(np.asarray(doc["dual"]["entries"]), doc["dual"]["mass"])
    return predictor, dual


def save_predictor(predictor: RandomizedPredictor, path, dual: DualVector | None = None) -> None:
    write_json(predictor_to_dict(predictor, dual), path)


def load_predictor(path, instance: Instance | None = None):
    return predictor_from_dict(read_json(path), instance)


# ---------------------------------------------------------------------------
# solve trace
# ---------------------------------------------------------------------------


def trace_to_jsonl(trace) -> str:
    lines = []
    for t in range(trace.rounds):
        lines.append(
            json.dumps(
                {
                    "t": t + 1,
                    "hypothesis": int(trace.chosen[t]),
                    "lagrangian": float(trace.lagrangian[t]),
                    "gains": trace.gains[t].tolist(),
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def save_trace(trace, path) -> None:
    Path(path).write_text(trace_to_jsonl(trace))
