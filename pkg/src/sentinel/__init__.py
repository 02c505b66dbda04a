"""Closed-loop WSN security operations at desk scale.

A deterministic wireless-sensor-network simulator feeds a miniature
service-management pipeline: import sets land in a CMDB, a detector chain
turns telemetry into events, events are deduplicated into alerts, alerts
open incidents, and response actions are dispatched back into the running
simulation. Everything observable is journaled and replayable.
"""

__version__ = "0.1.0"
