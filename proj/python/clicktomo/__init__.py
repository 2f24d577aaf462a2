"""Click-detector tomography, photon-statistics reconstruction and
Cramer-Rao error analysis. Thin re-export of the compiled module."""

try:
    from ._clicktomo import *  # noqa: F401,F403
    from ._clicktomo import __version__  # noqa: F401
except ImportError:
    # In-tree builds put the compiled module on sys.path directly.
    from _clicktomo import *  # noqa: F401,F403
    from _clicktomo import __version__  # noqa: F401
