import os
import sys
from loguru import logger

log_level = os.environ.get("FCMVC_LOG_LEVEL", "INFO").upper()


def _cgroup_cores() -> int | None:
    """CPU quota from cgroup v2 (`quota period`), None when unlimited or absent."""
    if not os.path.exists("/sys/fs/cgroup/cpu.max"):
        logger.debug("file /sys/fs/cgroup/cpu.max not found, using os.cpu_count()")
        return None
    with open("/sys/fs/cgroup/cpu.max", "r") as f:
        parts = f.readline().split()
    if len(parts) != 2:
        logger.warning("file /sys/fs/cgroup/cpu.max does not have 2 values, using os.cpu_count()")
        return None
    if parts[0] == "max":
        logger.debug("file /sys/fs/cgroup/cpu.max has max value, using os.cpu_count()")
        return None
    return max(1, int(parts[0]) // int(parts[1]))


def _resolve_workers() -> int:
    env = os.environ.get("FCMVC_WORKERS")
    if env:
        return max(1, int(env))
    return _cgroup_cores() or os.cpu_count() or 1


num_workers = _resolve_workers()


def configure_logging(level: str | None = None, serialize: bool = False) -> None:
    """Install the single stderr sink used by the command line.

    Library modules only emit records; the sink is owned by the entry point.
    """
    logger.remove()
    logger.add(
        sys.stderr,
        level=(level or log_level).upper(),
        serialize=serialize,
        format="<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
        "{name}:{function} - <level>{message}</level> | {extra}",
    )
