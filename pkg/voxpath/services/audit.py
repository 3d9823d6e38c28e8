"""Audit trail of command runs as JSON lines."""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Optional

from voxpath.config import get_settings
from voxpath.models import AuditEvent

logger = logging.getLogger(__name__)


class AuditService:
    """Appends one event per command step to a JSONL file."""

    def __init__(self, jsonl_path: Optional[str] = None, enabled: Optional[bool] = None):
        settings = get_settings()
        self.jsonl_path = jsonl_path or settings.audit_jsonl_path
        self.enabled = settings.audit_enabled if enabled is None else enabled

    def log(
        self,
        command: str,
        action: str,
        status: str,
        seed: Optional[int] = None,
        details: Optional[dict] = None,
    ) -> AuditEvent:
        """Record an event in the JSONL file and the standard logger."""
        event = AuditEvent(
            timestamp=datetime.now(timezone.utc).isoformat(),
            command=command,
            action=action,
            status=status,
            seed=seed,
            details=details or {},
        )

        if self.enabled:
            try:
                self._write_jsonl(event)
            except OSError as e:
                logger.error(f"Failed to write audit event to JSONL: {e}")

        log_msg = f"[{event.command}] {event.action}: {event.status}"
        if status in ("success", "running"):
            logger.info(log_msg)
        else:
            logger.warning(log_msg)
        return event

    def _write_jsonl(self, event: AuditEvent) -> None:
        os.makedirs(os.path.dirname(self.jsonl_path) or ".", exist_ok=True)
        with open(self.jsonl_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event.model_dump(), default=str) + "\n")

    def log_started(self, command: str, seed: Optional[int], details: dict) -> AuditEvent:
        return self.log(command, action="started", status="running", seed=seed, details=details)

    def log_finished(self, command: str, seed: Optional[int], outputs: dict) -> AuditEvent:
        return self.log(command, action="finished", status="success", seed=seed, details=outputs)

    def log_failed(self, command: str, category: str, error: str) -> AuditEvent:
        return self.log(
            command, action="failed", status=category, details={"error": error}
        )


# Singleton instance
_audit_service: Optional[AuditService] = None


def get_audit_service() -> AuditService:
    """Get or create audit service singleton."""
    global _audit_service
    if _audit_service is None:
        _audit_service = AuditService()
    return _audit_service


def reset_audit_service() -> None:
    global _audit_service
    _audit_service = None
