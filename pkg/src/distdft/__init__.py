"""Distributed multidimensional DFTs over cyclically distributed tensors.

The package runs on a simulated multi-rank runtime (one thread per rank) and
provides:

* column-major tensor helpers and local DFT kernels,
* elemental-cyclic tensor distributions over a processor grid,
* redistribution between distributions as all-to-alls on grid-mode fibres,
* 1D and 3D parallel DFT algorithms built from those pieces,
* an alpha-beta cost model and advisor for choosing a decomposition.
"""

from .errors import *  # noqa: F401,F403
from .tensor import *  # noqa: F401,F403
from .kernels import *  # noqa: F401,F403
from .distribution import *  # noqa: F401,F403
from .runtime import *  # noqa: F401,F403
from .redist import *  # noqa: F401,F403
from .parallel import *  # noqa: F401,F403
from .cost import *  # noqa: F401,F403

__version__ = "0.1.0"
