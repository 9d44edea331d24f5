"""Python bindings for the usm reconstruction library."""

try:
    from ._usm import *  # noqa: F401,F403
    from ._usm import __version__  # noqa: F401
except ImportError:  # running against a build tree where _usm is top-level
    from _usm import *  # noqa: F401,F403
    from _usm import __version__  # noqa: F401
