"""Continuous time random walks, their scaling limits and the fractional
Fokker-Planck / Kolmogorov equations governing them.

Modules
-------
model            coefficient fields, waiting-time tails, presets
ctrw_chain       the pre-limit discrete chain at scale ``c``
limit_sampler    space-time pair ``(A_r, D_r)`` and its time-changed limits
frac_ops         fractional and memory operators on space-time grids
forward_solver   Fokker-Planck solver for uncoupled models
backward_solver  backward (potential) equation solver
validation       Monte Carlo estimators and statistical checks
cli              config-driven command line
"""

__version__ = "0.1.0"

from .backward_solver import *  # noqa: F401,F403,E402
from .ctrw_chain import *  # noqa: F401,F403,E402
from .errors import *  # noqa: F401,F403,E402
from .forward_solver import *  # noqa: F401,F403,E402
from .frac_ops import *  # noqa: F401,F403,E402
from .grids import GridField, GridMeasure, SpaceTimeGrid  # noqa: E402
from .limit_sampler import *  # noqa: F401,F403,E402
from .model import *  # noqa: F401,F403,E402
from .validation import *  # noqa: F401,F403,E402
