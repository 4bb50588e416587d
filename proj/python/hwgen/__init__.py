"""Styled handwritten text generation toolkit (python surface).

The heavy lifting lives in the compiled extension `_hwgen`; this package
re-exports it. When built as a wheel the extension sits inside the package,
during development it is importable from the CMake build directory.
"""

try:
    from hwgen._hwgen import *  # noqa: F401,F403  (wheel layout)
    from hwgen import _hwgen as _ext
except ImportError:  # pragma: no cover - build-tree layout
    from _hwgen import *  # noqa: F401,F403
    import _hwgen as _ext

__version__ = "0.1.0"
__all__ = [name for name in dir(_ext) if not name.startswith("_")]
