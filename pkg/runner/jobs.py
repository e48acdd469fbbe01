"""Fan independent (series, model, seed) runs out over worker processes."""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

from logger import Logger
from volatility.errors import ConfigError, InvalidConfig, VolatilityError
from .commands import RunWorker, run_dir
from .config import RunConfig

JOB_COMMANDS = ("fit", "predict", "run")


@dataclass(frozen=True)
class Job:
    command: str
    config: RunConfig

    @property
    def label(self) -> str:
        return run_dir(self.config)


@dataclass(frozen=True)
class JobOutcome:
    label: str
    exit_code: int
    message: str = ""
    train_ll: Optional[float] = None
    val_ll: Optional[float] = None
    test_ll: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


def expand_seeds(configs: Sequence[RunConfig], seeds: Optional[Sequence[int]]) -> List[RunConfig]:
    """One config per (config, seed); without seeds each config keeps its own."""
    if not seeds:
        return list(configs)
    return [replace(c, run=replace(c.run, seed=seed)) for c in configs for seed in seeds]


def execute_job(job: Job, log_level: Optional[str] = None) -> JobOutcome:
    """Run one job; toolkit errors become a failed outcome instead of propagating."""
    if job.command not in JOB_COMMANDS:
        raise ValueError(f"Unknown job command '{job.command}'")
    worker = RunWorker(job.config, log_level)
    try:
        fit = worker.fit() if job.command in ("fit", "run") else None
        predict = worker.predict() if job.command in ("predict", "run") else None
    except VolatilityError as e:
        worker.logger.error(f"❌ {job.label}: {e}")
        return JobOutcome(job.label, e.exit_code, str(e))
    except FileNotFoundError as e:
        worker.logger.error(f"❌ {job.label}: file not found: {e.filename}")
        return JobOutcome(job.label, ConfigError.exit_code, f"file not found: {e.filename}")
    return JobOutcome(
        job.label,
        0,
        train_ll=fit.train_ll if fit else None,
        val_ll=fit.val_ll if fit else None,
        test_ll=predict.test_ll if predict else None,
    )


def run_jobs(jobs: Sequence[Job], n_jobs: int = 1, log_level: Optional[str] = None) -> List[JobOutcome]:
    """Execute jobs serially or on ``n_jobs`` processes; outcomes keep the input order."""
    logger = Logger(log_level or "INFO", "jobs")
    labels = [job.label for job in jobs]
    duplicates = sorted({label for label in labels if labels.count(label) > 1})
    if duplicates:
        raise InvalidConfig(f"Jobs must write to distinct output directories, repeated: {duplicates}")

    if n_jobs <= 1 or len(jobs) <= 1:
        return [execute_job(job, log_level) for job in jobs]

    outcomes: List[Optional[JobOutcome]] = [None] * len(jobs)
    logger.info(f"⚙️ Running {len(jobs)} jobs on {n_jobs} workers")
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = {pool.submit(execute_job, job, log_level): i for i, job in enumerate(jobs)}
        for future in as_completed(futures):
            i = futures[future]
            outcomes[i] = future.result()
            status = "✅" if outcomes[i].ok else "❌"
            logger.info(f"{status} {outcomes[i].label}")
    return outcomes
