"""Select the compiled image-source kernel, falling back to numpy."""
import os

from . import _ism_py

BACKEND = "python"
accumulate_images = _ism_py.accumulate_images

if os.environ.get("SPEAKERDIST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ism import accumulate_images  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["BACKEND", "accumulate_images"]
