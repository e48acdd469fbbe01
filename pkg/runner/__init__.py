from .config import RunConfig, load_config, parse_config

from .artifacts import config_hash, read_artifact, write_artifact
from .commands import RunWorker, cmd_fit, cmd_predict, cmd_rank, cmd_simulate
from .jobs import Job, JobOutcome, run_jobs

__all__ = [
    "Job",
    "JobOutcome",
    "RunConfig",
    "RunWorker",
    "cmd_fit",
    "cmd_predict",
    "cmd_rank",
    "cmd_simulate",
    "config_hash",
    "load_config",
    "parse_config",
    "read_artifact",
    "run_jobs",
    "write_artifact",
]
