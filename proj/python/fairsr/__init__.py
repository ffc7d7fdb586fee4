"""Fairness-aware sequential recommendation: Python bindings for the C++ core."""

try:
    from ._fairsr import *  # noqa: F401,F403  (installed package layout)
    from ._fairsr import __version__  # noqa: F401
except ImportError:  # extension built in-tree and put on sys.path directly
    from _fairsr import *  # noqa: F401,F403
    from _fairsr import __version__  # noqa: F401
