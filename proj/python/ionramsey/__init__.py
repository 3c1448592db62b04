"""Trapped-ion Ramsey simulator and non-linearity estimator.

Thin re-export of the compiled core; every operation lives in C++ and this
package adds nothing on top, so simulation results are identical across the
CLI, C++, and Python entry points.
"""

from ionramsey._core import *  # noqa: F401,F403
from ionramsey._core import __doc__ as _core_doc

__doc__ = _core_doc or __doc__
__version__ = "0.1.0"
