"""
Run events for experiments, training and certification.

Every long-running piece of the library (dataset generation, training,
refinement, CLI commands) reports progress as structured events instead of
free-form prints. Events carry a human-readable description plus a details
dict, so the same stream can be echoed to a terminal or written as JSON
lines next to the run's artifacts.
"""

import json
import sys
import os
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


class EventType(Enum):
    """Kinds of events emitted during a run."""

    # === Run Flow ===
    RUN_START = "run_start"
    PHASE_START = "phase_start"
    PHASE_COMPLETE = "phase_complete"
    RUN_COMPLETE = "run_complete"
    ARTIFACT_WRITTEN = "artifact_written"

    # === Data ===
    DATASET_WRITTEN = "dataset_written"

    # === Training ===
    TRAINING_START = "training_start"
    EPOCH_COMPLETE = "epoch_complete"
    SNAPSHOT_SAVED = "snapshot_saved"
    CERTIFY_SNAPSHOT = "certify_snapshot"
    NUMERIC_ABORT = "numeric_abort"

    # === Certification ===
    REFINEMENT_PROGRESS = "refinement_progress"
    REFINEMENT_CONVERGED = "refinement_converged"
    REFINEMENT_BUDGET_EXHAUSTED = "refinement_budget_exhausted"
    BOUNDS_COMPUTED = "bounds_computed"
    EVIDENCE_OUTSIDE_DOMAIN = "evidence_outside_domain"


PRIORITIES = ("low", "normal", "high", "critical")

EventCallback = Callable[..., Any]


@dataclass
class RunEvent:
    """A single event in a run's stream."""

    # === Core Event Data ===
    timestamp: datetime
    source: str
    event_type: EventType
    description: str

    # === Optional Details ===
    details: Dict[str, Any] = field(default_factory=dict)

    # === Categorization ===
    priority: str = "normal"  # "low", "normal", "high", "critical"
    tags: List[str] = field(default_factory=list)

    step_number: int = 0

    def is_warning(self) -> bool:
        return self.priority in ("high", "critical")

    def to_dict(self) -> Dict[str, Any]:
        """Convert event to dictionary for JSON serialization"""
        return {
            'timestamp': self.timestamp.isoformat(),
            'source': self.source,
            'event_type': self.event_type.value,
            'description': self.description,
            'details': self.details,
            'priority': self.priority,
            'tags': self.tags,
            'step_number': self.step_number,
        }

    def __str__(self):
        time_str = self.timestamp.strftime("%H:%M:%S")
        marker = "!! " if self.priority == "critical" else "! " if self.priority == "high" else ""
        return f"[{time_str}] {marker}{self.source}: {self.description}"


def default_event_handler(source: str, event_type: EventType, description: str,
                          priority: str = "normal", details: Dict[str, Any] = None):
    """Fallback handler for components constructed without an emitter."""
    time_str = datetime.now().strftime("%H:%M:%S")
    print(f"[{time_str}] {source}: {description}")


class EventEmitter:
    """
    Collects run events and forwards them to listeners.

    Components receive ``emitter.emit`` as their ``emit_event_callback``.
    Listeners are plain callables taking the RunEvent, e.g. an echo to
    stderr or a JSON-lines file writer.
    """

    def __init__(self, echo: bool = True, min_echo_priority: str = "low"):
        self.events: List[RunEvent] = []
        self.event_listeners: List[Callable[[RunEvent], None]] = []
        self.current_step = 0
        self.echo = echo
        self.min_echo_priority = min_echo_priority

    def emit(self, source: str, event_type: EventType, description: str,
             priority: str = "normal", details: Dict[str, Any] = None,
             tags: List[str] = None) -> RunEvent:
        """
        Create and emit a new event.

        Args:
            source: Component that produced the event ("trainer", "refiner", ...)
            event_type: Type of event
            description: Human-readable description
            priority: Event importance level
            details: Structured data for programmatic use
            tags: Additional categorization tags

        Returns:
            The created event
        """
        if priority not in PRIORITIES:
            raise ValueError(f"Unknown event priority: {priority}")

        event = RunEvent(
            timestamp=datetime.now(),
            source=source,
            event_type=event_type,
            description=description,
            details=details or {},
            priority=priority,
            tags=tags or [],
            step_number=self.current_step,
        )

        self.events.append(event)
        self._broadcast_event(event)
        return event

    def increment_step(self):
        self.current_step += 1

    def add_listener(self, listener: Callable[[RunEvent], None]):
        self.event_listeners.append(listener)

    def _broadcast_event(self, event: RunEvent):
        if self.echo and PRIORITIES.index(event.priority) >= PRIORITIES.index(self.min_echo_priority):
            print(event, file=sys.stderr)
        for listener in self.event_listeners:
            listener(event)

    # === Convenience Methods for Common Events ===

    def run_start(self, command: str, details: Dict[str, Any]):
        return self.emit("cli", EventType.RUN_START, f"Starting '{command}'",
                         priority="normal", details=details, tags=["run", "start"])

    def phase_start(self, source: str, phase: str):
        return self.emit(source, EventType.PHASE_START, f"Phase '{phase}' started",
                         details={'phase': phase}, tags=["phase"])

    def phase_complete(self, source: str, phase: str, seconds: float):
        return self.emit(source, EventType.PHASE_COMPLETE,
                         f"Phase '{phase}' finished in {seconds:.2f}s",
                         details={'phase': phase, 'seconds': seconds}, tags=["phase"])

    def run_complete(self, command: str, exit_code: int):
        return self.emit("cli", EventType.RUN_COMPLETE,
                         f"'{command}' finished with exit code {exit_code}",
                         priority="normal" if exit_code == 0 else "high", details={'exit_code': exit_code},
                         tags=["run", "complete"])

    # === Queries ===

    def get_warnings(self) -> List[RunEvent]:
        return [event for event in self.events if event.is_warning()]

    def get_event_summary(self) -> Dict[str, int]:
        """Count events per type."""
        summary = {}
        for event in self.events:
            event_type = event.event_type.value
            summary[event_type] = summary.get(event_type, 0) + 1
        return summary


class JsonLinesEventWriter:
    """Listener that appends each event as one JSON line."""

    def __init__(self, path: str):
        self.path = path
        self._handle = open(path, "w", encoding="utf-8")

    def __call__(self, event: RunEvent):
        self._handle.write(json.dumps(event.to_dict(), sort_keys=True, default=str) + "\n")
        self._handle.flush()

    def close(self):
        if not self._handle.closed:
            self._handle.close()


def emitter_callback(emitter: Optional[EventEmitter]) -> EventCallback:
    """Callback suitable for ``emit_event_callback`` parameters."""
    if emitter is None:
        return default_event_handler

    def _callback(source, event_type, description, priority="normal", details=None):
        return emitter.emit(source, event_type, description, priority=priority, details=details)

    return _callback
