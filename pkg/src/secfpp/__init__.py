"""secfpp: secure federated prompt personalization at desk scale.

Building blocks:

* :mod:`secfpp.field`      -- prime-field arithmetic and quantization
* :mod:`secfpp.lcc`        -- Lagrange-coded multi-secret sharing
* :mod:`secfpp.reduce`     -- shared-basis dimension reduction
* :mod:`secfpp.cluster`    -- secure adaptive clustering (SecPC)
* :mod:`secfpp.protocol`   -- the full SecFPP round loop and audit
* :mod:`secfpp.infotheory` -- leakage analysis and MI estimation
* :mod:`secfpp.bench`      -- phase timings and byte accounting
* :mod:`secfpp.cli`        -- ``secfpp run|mi|bench|audit|selftest``
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
