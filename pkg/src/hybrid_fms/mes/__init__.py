"""Multi-agent manufacturing execution layer."""
from .agents import Directory, handle_message
from .calendar import Allocation, OverlapConflict, ResourceCalendar, allocate, fifo_interval
from .database import Database, DatabaseRecord, query_database, write_database
from .messages import (
    PERFORMATIVES,
    ROLES,
    AgentId,
    AgentMessage,
    AvailabilityReply,
    MalformedTask,
    TaskAnnouncement,
    UnknownAgent,
)
from .ontology import CapabilityRecord, NoCapableStation, default_capabilities, match_capability
from .system import DivergenceError, MesSystem, StartResult, register_order, start_new_task
