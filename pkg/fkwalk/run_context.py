import contextvars
import hashlib
import json
from typing import Any

log_context: contextvars.ContextVar = contextvars.ContextVar("log_context", default={})


class RunLoggingContext:
    """
    Context manager for logging run context.

    Stores lightweight run metadata (run_id, command) in a contextvar so that every log
    record emitted while a solver command runs can be correlated with the run record
    written next to its outputs.

    :ivar command: Name of the management command being run.
    :ivar run_id: Short digest of the canonical run record, or "-" when there is none.
    """

    def __init__(self, command: str, run_record: dict[str, Any] | None = None):
        self.command = command
        self.run_id = self.hash_run_record(run_record)
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "RunLoggingContext":
        self._token = log_context.set({"run_id": self.run_id, "command": self.command})
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        # Always clean up context, even on exceptions
        if self._token:
            log_context.reset(self._token)
            self._token = None

    @staticmethod
    def hash_run_record(run_record: dict[str, Any] | None) -> str:
        """
        Hashes the canonical JSON form of a run record and truncates the result for
        readability. Two runs with the same configuration and seed share a run id.

        :param run_record: The canonical run record, as produced by ``RunConfig.to_dict``
        :type run_record: dict | None
        :return: The first 8 hex characters of the SHA-256 digest, or "-" without a record
        :rtype: str
        """
        if not run_record:
            return "-"
        canonical = json.dumps(run_record, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()[:8]  # truncate for readability
