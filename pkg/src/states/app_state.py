"""
State management module for the HDLSS score bias toolkit.
Contains the command configuration and the observable run state.
"""
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple


@dataclass
class CliConfig:
    """
    Fully resolved command configuration (defaults < env < config file < flags)
    """
    command: str = ""
    target: Optional[str] = None
    model: str = "spike"
    d: Optional[int] = None
    n: Optional[int] = None
    m: int = 2
    n_test: Optional[int] = None
    beta: float = 0.3
    a: float = 0.15
    probs: Tuple[float, float, float] = (0.5, 0.3, 0.2)
    sigma_sq: Tuple[float, ...] = (0.02, 0.01)
    k: int = 3
    reps: Optional[int] = None
    seed: int = 0
    center: Optional[bool] = None
    estimators: Optional[Tuple[str, ...]] = None
    estimator: str = "asymptotic"
    train: Optional[str] = None
    test: Optional[str] = None
    out: Optional[str] = None
    threads: int = 1
    format: str = "csv"
    full_precision: bool = False
    manifest: bool = False
    rotate_frame: bool = False
    log_level: str = "INFO"
    config: Optional[str] = None

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class RunStatus:
    """
    Represents the current status of a Monte-Carlo run
    """
    is_running: bool = False
    experiment: str = ""
    message: str = ""
    completed: int = 0
    total: int = 0
    excluded: int = 0
    exclusions: List[str] = field(default_factory=list)


class AppState:
    """
    Run state manager; views register as observers
    """
    def __init__(self):
        self.status = RunStatus()
        self._observers = []

    def add_observer(self, observer):
        """Add an observer to be notified of state changes"""
        self._observers.append(observer)

    def remove_observer(self, observer):
        """Remove an observer"""
        if observer in self._observers:
            self._observers.remove(observer)

    def notify_observers(self):
        """Notify all observers of state changes"""
        for observer in self._observers:
            observer.update()

    def start_run(self, experiment: str, total: int):
        """Mark the start of an experiment with `total` repetitions"""
        self.status.is_running = True
        self.status.experiment = experiment
        self.status.completed = 0
        self.status.total = total
        self.status.message = f"Running {experiment}..."
        self.notify_observers()

    def record_repetition(self, rep: int, excluded_reason: Optional[str] = None):
        """Count a finished repetition, flagging it when excluded"""
        self.status.completed += 1
        if excluded_reason is not None:
            self.status.excluded += 1
            self.status.exclusions.append(f"{self.status.experiment} rep {rep}: {excluded_reason}")
        self.notify_observers()

    def finish_run(self):
        """Mark the current experiment as finished"""
        self.status.is_running = False
        self.status.message = f"Finished {self.status.experiment}"
        self.notify_observers()

    def reset(self):
        """Clear counters between commands"""
        self.status = RunStatus()
        self.notify_observers()
