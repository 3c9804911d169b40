"""Hybrid agent: XML channel, framing, coupling and transport."""
from .coupling import Coupler, HybridAgent, JointTrace, LocalEndpoint, audit, step_coupled
from .framing import MAX_FRAME, BrokenStream, Deframer, FrameError, FramedSocket, OversizeFrame, deframe, frame
from .netxml import dumps_net, load_net, loads_net, save_net
from .translate import Notification, UnknownObject, translate_decision, translate_event
from .transport import HsaServer, RemoteEndpoint, serve_and_connect
from .xmlcodec import (
    ActionCommand,
    ActionSpec,
    AgentDescriptor,
    CurrentState,
    MalformedXml,
    MasDescriptor,
    MissingName,
    ObjectDescriptor,
    ObjectList,
    StateUpdate,
    Sync,
    UnknownElement,
    UnserializablePayload,
    XmlError,
    parse,
    serialize,
)
