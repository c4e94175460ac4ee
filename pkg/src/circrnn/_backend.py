"""Kernel backend selection.

At import the compiled ``_ckernels`` extension is used when it is
importable, otherwise the NumPy ``_pykernels``.  ``CIRC_RNN_BACKEND``
(``auto`` | ``compiled`` | ``python``) overrides the choice.
"""

import contextlib
import importlib
import os

from . import _pykernels

_MODULES = {"compiled": "circrnn._ckernels", "python": "circrnn._pykernels"}


def load(name):
    """Return the kernel module for ``name``; ImportError if unavailable."""
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; expected one of {sorted(_MODULES)}")
    return importlib.import_module(_MODULES[name])


def available():
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _initial():
    choice = os.environ.get("CIRC_RNN_BACKEND", "auto").strip().lower() or "auto"
    if choice == "auto":
        try:
            return load("compiled")
        except ImportError:
            return _pykernels
    return load(choice)


kernels = _initial()


def name():
    return kernels.NAME


def set_backend(backend):
    """Switch the process-wide kernel backend; returns the previous name."""
    global kernels
    previous = kernels.NAME
    kernels = load(backend)
    return previous


@contextlib.contextmanager
def use_backend(backend):
    previous = set_backend(backend)
    try:
        yield kernels
    finally:
        set_backend(previous)
