"""Stream-level digital predistortion for beamforming transmitter arrays."""

from .config import ScenarioConfig, load_config
from .errors import (ArrayDpdError, ConditioningError, ConfigurationError, DivergenceError, InputError,
                     SingularityError)

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig", "load_config", "ArrayDpdError", "ConditioningError", "ConfigurationError",
    "DivergenceError", "InputError", "SingularityError", "__version__",
]
