# Ensure built-in estimators register themselves on import
from . import diagonal as _diagonal  # noqa: F401
from . import glasso as _glasso  # noqa: F401
from . import pcdag as _pcdag  # noqa: F401
