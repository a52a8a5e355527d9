"""Episode scheduling, link emulation, logging, comparison and CLI."""
from .compare import CompareReport, compare, sweep
from .config import SimConfig, config_hash, load_config
from .episode import run_episode
from .link import LinkModel, link_send
from .runlog import RunLog, read_log, write_log

__all__ = ["CompareReport", "compare", "sweep", "SimConfig", "config_hash", "load_config", "run_episode",
           "LinkModel", "link_send", "RunLog", "read_log", "write_log"]
