"""Trust establishment between healthcare agents before federated learning."""

from .errors import TrustFLError
from .harness import RunReport, emit_report, load_scenario, run_scenario, validate_config

__version__ = "0.1.0"

__all__ = ["TrustFLError", "RunReport", "emit_report", "load_scenario", "run_scenario", "validate_config"]
