import logging

from fkwalk.run_context import log_context


class RunLogFilter(logging.Filter):
    """
    Custom logging filter for enriching log records with run context.

    Injects the run id and the command name of the solver run in progress, taken
    from the run context, into every record so the formatter can print them.

    :ivar run_id: Short digest of the run record, "-" outside a run.
    :type run_id: str
    :ivar command: Name of the running command, "-" outside a run.
    :type command: str
    """

    def filter(self, record):
        ctx = log_context.get() or {}
        record.run_id = ctx.get("run_id", "-")
        record.command = ctx.get("command", "-")
        return True
