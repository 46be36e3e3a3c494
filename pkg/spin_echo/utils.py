import hashlib
import json
import math
import os
from typing import Any, Callable, Dict, Iterable, Optional

from spin_echo.exceptions import ImproperlyConfigured, InvalidArgumentError

TRUTHY_VALUES = {"y", "yes", "t", "true", "on", "1"}
FALSY_VALUES = {"n", "no", "f", "false", "off", "0"}


def get_from_env(
    key: str,
    default: Any = None,
    *,
    optional: bool = False,
    type_cast: Optional[Callable] = None,
) -> Any:
    """
    Reads a setting from the environment. Empty values fall back to `default`;
    when there is no default the variable is required unless `optional` is set.
    """
    value = os.getenv(key)

    if value is None or value == "":
        if optional:
            return None
        if default is not None:
            return default
        raise ImproperlyConfigured(f'The environment variable "{key}" is required.')

    if type_cast is not None:
        return type_cast(value)

    return value


def str_to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    normalized = str(value).strip().lower()
    if normalized in TRUTHY_VALUES:
        return True
    if normalized in FALSY_VALUES:
        return False
    raise ValueError(f"Invalid truth value {value!r}")


def require_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    return value


def require_non_negative(name: str, value: float) -> float:
    if math.isnan(value) or value < 0:
        raise InvalidArgumentError(f"{name} must be non-negative, got {value!r}")
    return value


def require_all_finite(name: str, values: Iterable[float]) -> None:
    for value in values:
        require_finite(name, value)


def config_hash(payload: Dict[str, Any]) -> str:
    """
    Stable sha256 of a resolved configuration. Keys are sorted so the hash only
    depends on content.
    """
    encoded = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()
