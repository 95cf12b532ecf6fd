"""
JSON and CSV codecs for specs, traces and summaries.

Floats are written with Python's shortest round-trip repr so a reload is
bit-exact; CSV rows end with a bare newline.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.errors import InvalidSpecError
from app.models.mdp import LinearMdpSpec
from app.models.trace import RunTrace

logger = logging.getLogger(__name__)

SPEC_VERSION = 1
BASE_COLUMNS = ["episode", "return", "regret_increment", "cumulative_regret", "switched", "snapshot_id"]


class SpecDocument(BaseModel):
    """On-disk linear MDP description; features are unpadded per state"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    spec_version: int = Field(SPEC_VERSION)
    d: int = Field(..., ge=1)
    horizon: int = Field(..., ge=1, alias="H")
    n_states: int = Field(..., ge=1)
    features: List[List[List[float]]]
    measures: List[List[List[float]]]
    reward_vecs: List[List[float]]
    initial_state: int = 0
    metadata: Dict[str, Any] = Field(default_factory=dict)
    hard_instance_meta: Optional[Dict[str, Any]] = None


def spec_to_dict(spec: LinearMdpSpec) -> Dict[str, Any]:
    features = [
        spec.features[x, : int(spec.n_actions[x])].tolist()
        for x in range(spec.n_states)
    ]
    metadata = {k: v for k, v in spec.metadata.items() if k != "hard_instance_meta"}
    doc: Dict[str, Any] = {
        "spec_version": SPEC_VERSION,
        "d": spec.d,
        "H": spec.horizon,
        "n_states": spec.n_states,
        "features": features,
        "measures": spec.measures.tolist(),
        "reward_vecs": spec.reward_vecs.tolist(),
        "initial_state": spec.initial_state,
        "metadata": metadata,
    }
    if "hard_instance_meta" in spec.metadata:
        doc["hard_instance_meta"] = spec.metadata["hard_instance_meta"]
    return doc


def dump_spec(spec: LinearMdpSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2)


def load_spec(text: str) -> LinearMdpSpec:
    """
    Parse and validate a spec document.

    Raises:
        InvalidSpecError: Malformed JSON, schema violation, unsupported
            version, or a spec that breaks the linear MDP invariants
    """
    try:
        doc = SpecDocument.model_validate_json(text)
    except ValidationError as e:
        raise InvalidSpecError([
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        ]) from e
    if doc.spec_version != SPEC_VERSION:
        raise InvalidSpecError(f"unsupported spec_version {doc.spec_version}")
    if len(doc.features) != doc.n_states:
        raise InvalidSpecError(f"features list has {len(doc.features)} states, expected {doc.n_states}")

    n_actions = np.array([len(rows) for rows in doc.features], dtype=int)
    if np.any(n_actions < 1):
        raise InvalidSpecError("every state needs at least one feasible action")
    features = np.zeros((doc.n_states, int(n_actions.max()), doc.d))
    for x, rows in enumerate(doc.features):
        block = np.asarray(rows, dtype=float)
        if block.shape != (len(rows), doc.d):
            raise InvalidSpecError(f"state {x} features are not length-{doc.d} vectors")
        features[x, : len(rows)] = block

    metadata = dict(doc.metadata)
    if doc.hard_instance_meta is not None:
        metadata["hard_instance_meta"] = doc.hard_instance_meta
    try:
        spec = LinearMdpSpec(
            d=doc.d,
            horizon=doc.horizon,
            n_states=doc.n_states,
            n_actions=n_actions,
            features=features,
            measures=np.asarray(doc.measures, dtype=float),
            reward_vecs=np.asarray(doc.reward_vecs, dtype=float),
            initial_state=doc.initial_state,
            metadata=metadata,
        )
    except ValueError as e:
        raise InvalidSpecError(f"ragged arrays: {e}") from e
    return spec.validate()


def read_spec(path: Union[str, Path]) -> LinearMdpSpec:
    return load_spec(Path(path).read_text(encoding="utf-8"))


def write_spec(spec: LinearMdpSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_spec(spec) + "\n", encoding="utf-8")
    return path


def trace_header(horizon: int) -> List[str]:
    return BASE_COLUMNS + [f"logdet_h{h}" for h in range(1, horizon + 1)]


def _float(value: float) -> str:
    return repr(float(value))


def trace_to_csv(trace: RunTrace) -> str:
    """CSV body of a validated trace"""
    trace.check()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(trace_header(trace.horizon))
    for record in trace.records:
        writer.writerow(
            [
                record.episode,
                _float(record.ret),
                _float(record.regret_increment),
                _float(record.cumulative_regret),
                int(record.switched),
                record.snapshot_id,
            ]
            + [_float(v) for v in record.logdets]
        )
    return buffer.getvalue()


def read_trace_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_json(payload: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path
