from .eventlog import EventLog, EventRecord, ReplayError, canonical_digest, replay_into, state_digest
from .http import GatewayService, create_app
from .sessions import SessionStore

__all__ = [
    "EventLog",
    "EventRecord",
    "ReplayError",
    "canonical_digest",
    "replay_into",
    "state_digest",
    "GatewayService",
    "create_app",
    "SessionStore",
]
