"""Hot numeric kernels: numba-jitted implementations with a pure-numpy fallback.

The backend is chosen once at import from the ``DYNENS_BACKEND`` environment
variable (``"numba"``, ``"numpy"``, or unset for auto: numba when importable,
numpy otherwise) and can be switched at runtime with :func:`set_backend`.

Both backends are deterministic given identical inputs. They are *not*
guaranteed bit-identical to each other (BLAS vs. scalar-loop summation order),
so reproducibility artifacts record which backend produced them.
"""

import os

from . import _numpy_backend

_BACKENDS = {"numpy": _numpy_backend}
_active_name = "numpy"
_active = _numpy_backend


def _load_numba_backend():
    if "numba" not in _BACKENDS:
        from . import _numba_backend

        _BACKENDS["numba"] = _numba_backend
    return _BACKENDS["numba"]


def available_backends() -> tuple[str, ...]:
    """Names of backends usable on this machine."""
    names = ["numpy"]
    try:
        _load_numba_backend()
        names.append("numba")
    except ImportError:
        pass
    return tuple(names)


def set_backend(name: str) -> str:
    """Select the kernel backend ("numba" or "numpy"). Returns the active name."""
    global _active, _active_name
    if name == "numpy":
        _active = _BACKENDS["numpy"]
    elif name == "numba":
        _active = _load_numba_backend()
    else:
        raise ValueError(f"unknown kernel backend {name!r}; expected 'numba' or 'numpy'")
    _active_name = name
    return _active_name


def get_backend() -> str:
    """Name of the backend kernels currently dispatch to."""
    return _active_name


def masked_loglik(particles, H, b, r, y):
    """Diagonal-Gaussian log density of masked measurement y under each particle.

    particles: (N, d) states; H: (s, d); b, r, y: (s,). Returns (N,) log densities
    of N(y; H x_i + b, diag(r)).
    """
    return _active.masked_loglik(particles, H, b, r, y)


def resample_indices(cum_weights, u0):
    """Systematic-resampling ancestor indices for strata u0 + i/N, i = 0..N-1."""
    return _active.resample_indices(cum_weights, u0)


def weighted_mean(particles, weights):
    """Weighted average of particle rows: sum_i w_i x_i."""
    return _active.weighted_mean(particles, weights)


def _init_from_env():
    choice = os.environ.get("DYNENS_BACKEND", "").strip().lower()
    if choice in ("numpy", "numba"):
        set_backend(choice)
    elif choice == "":
        try:
            set_backend("numba")
        except ImportError:
            set_backend("numpy")
    else:
        raise ValueError(f"DYNENS_BACKEND={choice!r} not understood; use 'numba' or 'numpy'")


_init_from_env()
