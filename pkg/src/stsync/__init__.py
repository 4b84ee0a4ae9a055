"""Space-and-time synchronised tracking and formation guidance.

Modules: :mod:`reference` (time-free reference paths and speed plans),
:mod:`kinematics`, :mod:`ptime` (prescribed-time scaling), :mod:`controller`,
:mod:`sim`, :mod:`scenario`, :mod:`cascade_bench` and :mod:`cli`.
"""

from importlib import resources

from ._jit import NUMBA_ENABLED

__version__ = "0.1.0"


def table1_path():
    """Path of the bundled four-vehicle moving-target scenario."""
    return resources.files(__package__) / "data" / "table1.json"


__all__ = ["NUMBA_ENABLED", "table1_path", "__version__"]
