"""Context-aware sensing-power control for wearable PPG monitoring.

Modules: ``vitals`` (signal processing and error calibration), ``riskmodel``
(error, abnormality and cost functions), ``markov`` (activity and battery
chains), ``policy`` (myopic and finite-horizon MDP controllers), ``sim``
(trace-driven simulation and experiments) and ``cli``.
"""

from .domain import ACTIVITIES, DEFAULT_LEVELS, Activity, PowerLevel

__version__ = "0.1.0"

__all__ = ["ACTIVITIES", "DEFAULT_LEVELS", "Activity", "PowerLevel", "__version__"]
