"""Mapping tables between MES decisions and simulator objects/events."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..fms.model import ASSEMBLY, CNC, CONVEYOR, CRANE, LASER, ROBOT, STATION1, STATION2, STATION3
from ..petri.net import SimEvent
from .xmlcodec import ActionCommand, StateUpdate


class UnknownObject(KeyError):
    pass


# simulator object registry: object name -> resource id used by the net
OBJECTS = {
    "CNC": CNC,
    "glue-assembly": ASSEMBLY,
    "robot": ROBOT,
    "conveyor": CONVEYOR,
    "ASRS": CRANE,
    "laser-qc": LASER,
}
OBJECT_OF = {res: name for name, res in OBJECTS.items()}

# MES route action -> simulator action name
ACTIONS = {
    "machine": "start-machining",
    "assemble": "start-assembly",
    "move-s1": "start-transport",
    "move-s2": "start-transport",
    "move-s3": "start-transport",
}

# transition -> (notification kind, route action, binding index of the token carrying res/order/part)
NOTIFY_POLICY = {
    "unload_s1": ("completed", "move-s1", 0),
    "cnc_end": ("completed", "machine", 0),
    "unload_s2": ("completed", "move-s2", 0),
    "asm_end": ("completed", "assemble", 0),
    "unload_s3": ("completed", "move-s3", 0),
    # failure/repair come from their dedicated trace events
    "cnc_fail": ("failure", "machine", 0),
    "cnc_repair": ("repair", "machine", 0),
}

TRANSITION_STATION = {
    "load_body": STATION1, "load_handle": STATION1, "load_cover": STATION1, "unload_s1": STATION1,
    "cnc_start": STATION1, "cnc_end": STATION1, "cnc_fail": STATION1, "cnc_repair": STATION1,
    "move_s2": STATION2, "unload_s2": STATION2, "asm_start": STATION2, "asm_end": STATION2,
    "move_s3": STATION3, "unload_s3": STATION3,
}


@dataclass(frozen=True)
class Notification:
    kind: str  # completed | failure | repair
    action: str
    resource: str
    order: int
    part: int
    time: int


def translate_decision(decision: dict, issued_at: int = 0) -> ActionCommand:
    """``decision`` is the payload of an execution command (task plus the
    allocated resource) as it reaches the hybrid agent."""
    task = decision["task"]
    res = decision["resource"]
    target = OBJECT_OF.get(res)
    if target is None:
        raise UnknownObject(res)
    action = ACTIONS.get(task["action"])
    if action is None:
        raise UnknownObject(f"no simulator action for {task['action']!r}")
    params = {
        "task_id": task["task_id"],
        "route_action": task["action"],
        "order": task["order_id"],
        "part": task.get("part_id", -1),
    }
    return ActionCommand(target, action, params, issued_at)


def command_color(cmd: ActionCommand) -> dict:
    """Token injected into the command place to unlock the guarded transition."""
    res = OBJECTS.get(cmd.target)
    if res is None:
        raise UnknownObject(cmd.target)
    p = cmd.params
    return {"action": p["route_action"], "order": p["order"], "part": p["part"], "res": res}


def translate_event(event: SimEvent) -> Union[Notification, StateUpdate]:
    """Completion/failure/repair become notifications; everything else
    passes through as a state update."""
    tid = event.transition_id
    policy = NOTIFY_POLICY.get(tid or "")
    if policy and (event.kind == policy[0] or (event.kind == "fire" and policy[0] == "completed")):
        kind, action, idx = policy
        c = event.payload["binding"][idx]["color"]
        return Notification(kind, action, c["res"], c["order"], c.get("part", -1), event.time)
    if event.kind == "fire":
        binding = event.payload["binding"]
        res = binding[0]["color"].get("res", "") if binding else ""
        return StateUpdate(OBJECT_OF.get(res, tid or ""), tid or "", event.time, {"binding": binding})
    obj = event.payload.get("place") or tid or event.kind
    return StateUpdate(obj, event.kind, event.time, event.payload)
