from .config import LoadedConfig, dump_config, load_config, parse_config
from .model import *  # noqa: F401,F403
from .model import (
    BookOrder,
    FailureModel,
    FmsConfig,
    InvalidConfig,
    Part,
    RouteStep,
    StationSpec,
    UnknownKind,
    WORK_TRANSITIONS,
    build_fms_net,
    default_stations,
    initial_marking,
    part_census,
    part_route,
    release_orders,
    sample_failure,
)
