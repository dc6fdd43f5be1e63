"""
Documents - pydantic models for everything the toolkit reads or writes.

JSON is written with sorted keys and a fixed indent so equal content always
gives equal bytes; digests are SHA-256 over those bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from rmdp.config import Config
from rmdp.core import (
    AmbiguitySet,
    FiniteHorizonMDP,
    Kernel,
    PolicyMD,
    PolicyMR,
    RobustInstance,
    embed_md,
    validate_policy,
)
from rmdp.errors import InvalidInputError
from rmdp.generators import InfiniteHorizonInstance

logger = logging.getLogger("Documents")

ModelT = TypeVar("ModelT", bound=BaseModel)


class StageShape(BaseModel):
    num_states: int
    num_actions: int


class InstanceDocument(BaseModel):
    """kernels[k][t][s][a][s'] holds P_k,t(s'|s, a); a null cost marks a missing entry."""
    horizon: int
    stages: List[StageShape]
    costs: List[List[List[Optional[float]]]]
    kernels: List[List[List[List[List[float]]]]]
    initial_state: int = 0

    @classmethod
    def from_instance(cls, instance: RobustInstance) -> "InstanceDocument":
        mdp = instance.mdp
        return cls(
            horizon=mdp.horizon,
            stages=[StageShape(num_states=s, num_actions=a) for s, a in zip(mdp.num_states, mdp.num_actions)],
            costs=[[[None if np.isnan(c) else float(c) for c in row] for row in stage] for stage in mdp.cost],
            kernels=[[p.tolist() for p in kernel.trans] for kernel in instance.ambiguity],
            initial_state=instance.initial_state,
        )

    def to_instance(self) -> RobustInstance:
        """Build the instance; shape problems are left for core.validate to name."""
        cost = []
        for t, stage in enumerate(self.costs):
            width = self.stages[t].num_actions if t < len(self.stages) else max((len(r) for r in stage), default=0)
            table = np.full((len(stage), width), np.nan)
            for s, row in enumerate(stage):
                values = [np.nan if c is None else c for c in row][:width]
                table[s, : len(values)] = values
            cost.append(table)
        mdp = FiniteHorizonMDP(
            horizon=self.horizon,
            num_states=[stage.num_states for stage in self.stages],
            num_actions=[stage.num_actions for stage in self.stages],
            cost=cost,
        )
        kernels = []
        for k, tables in enumerate(self.kernels):
            try:
                kernels.append(Kernel(trans=[np.array(p, dtype=float) for p in tables]))
            except ValueError as e:
                raise InvalidInputError(f"kernel {k}: transition table is ragged ({e})")
        return RobustInstance(mdp=mdp, ambiguity=AmbiguitySet(kernels=tuple(kernels)), initial_state=self.initial_state)


class InfiniteHorizonDocument(BaseModel):
    kind: Literal["infinite"] = "infinite"
    gamma: float = Field(gt=0.0, lt=1.0)
    num_actions: List[int]
    stage_of_state: List[int]
    stage_offsets: List[int]
    costs: List[List[float]]
    kernels: List[List[List[List[float]]]]
    sink_state: int
    initial_state: int

    @classmethod
    def from_instance(cls, inst: InfiniteHorizonInstance) -> "InfiniteHorizonDocument":
        return cls(
            gamma=inst.gamma,
            num_actions=list(inst.num_actions),
            stage_of_state=list(inst.stage_of_state),
            stage_offsets=list(inst.stage_offsets),
            costs=inst.cost.tolist(),
            kernels=[k.tolist() for k in inst.kernels],
            sink_state=inst.sink_state,
            initial_state=inst.initial_state,
        )

    def to_instance(self) -> InfiniteHorizonInstance:
        return InfiniteHorizonInstance(
            gamma=self.gamma,
            num_actions=tuple(self.num_actions),
            stage_of_state=tuple(self.stage_of_state),
            cost=np.array(self.costs, dtype=float),
            kernels=tuple(np.array(k, dtype=float) for k in self.kernels),
            stage_offsets=tuple(self.stage_offsets),
            sink_state=self.sink_state,
            initial_state=self.initial_state,
        )


class PolicyDocument(BaseModel):
    kind: Literal["md", "mr"]
    act: Optional[List[List[int]]] = None
    dist: Optional[List[List[List[float]]]] = None

    @model_validator(mode="after")
    def _one_representation(self):
        if self.kind == "md" and self.act is None:
            raise ValueError("md policy documents need 'act'")
        if self.kind == "mr" and self.dist is None:
            raise ValueError("mr policy documents need 'dist'")
        return self

    @classmethod
    def from_policy(cls, policy: Union[PolicyMD, PolicyMR]) -> "PolicyDocument":
        if isinstance(policy, PolicyMD):
            return cls(kind="md", act=[list(stage) for stage in policy.as_tuple()])
        return cls(kind="mr", dist=[d.tolist() for d in policy.dist])

    def to_policy(self, mdp: FiniteHorizonMDP) -> PolicyMR:
        """Randomized form of the policy, checked against `mdp`."""
        if self.kind == "md":
            if len(self.act) != mdp.horizon:
                raise InvalidInputError(f"policy lists {len(self.act)} stages, expected {mdp.horizon}")
            for t, stage in enumerate(self.act):
                if len(stage) != mdp.num_states[t] or any(not 0 <= a < mdp.num_actions[t] for a in stage):
                    raise InvalidInputError(f"policy stage {t + 1}: actions {stage} do not fit the instance")
            policy = embed_md(PolicyMD(act=self.act, num_actions=mdp.num_actions))
        else:
            try:
                policy = PolicyMR(dist=[np.array(d, dtype=float) for d in self.dist])
            except ValueError as e:
                raise InvalidInputError(f"policy distribution is ragged ({e})")
        violations = validate_policy(mdp, policy)
        if violations:
            raise InvalidInputError("Invalid policy: " + "; ".join(violations))
        return policy


class RunManifest(BaseModel):
    subcommand: str
    flags: Dict[str, Any] = Field(default_factory=dict)
    input_digest: Optional[str] = None
    tool_version: str = Config.TOOL_VERSION
    duration_seconds: float = 0.0


class ReportDocument(BaseModel):
    """Solver or evaluation result; `details` holds solver-specific counters."""
    kind: str
    value: float
    worst_kernel_index: Optional[int] = None
    per_kernel_values: List[float] = Field(default_factory=list)
    policy: Optional[PolicyDocument] = None
    details: Dict[str, Any] = Field(default_factory=dict)


def dumps(model: BaseModel) -> str:
    return json.dumps(model.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_document(model: BaseModel, path) -> str:
    """Write `model` as canonical JSON and return the SHA-256 of the bytes written."""
    data = dumps(model).encode("utf-8")
    Path(path).write_bytes(data)
    logger.debug(f"Wrote {type(model).__name__} to {path}")
    return digest_bytes(data)


def read_document(path, model: Type[ModelT]) -> Tuple[ModelT, str]:
    """Parse `path` into `model`; raises FileNotFoundError or pydantic.ValidationError."""
    data = Path(path).read_bytes()
    return model.model_validate_json(data), digest_bytes(data)


def load_instance(path) -> Tuple[RobustInstance, str]:
    document, digest = read_document(path, InstanceDocument)
    return document.to_instance(), digest


def save_instance(instance: RobustInstance, path) -> str:
    return write_document(InstanceDocument.from_instance(instance), path)
