"""Input validation helpers shared by the public functions and estimators."""

import numbers

import numpy as np

from .exceptions import ConfigError


def check_scalar(value, name, *, lo=None, hi=None, lo_open=False, hi_open=False):
    """Validate a finite real scalar against optional bounds and return it as float."""
    if isinstance(value, bool) or not isinstance(value, (numbers.Real, np.floating, np.integer)):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise ConfigError(f"{name}={value} is below the allowed range ({'>' if lo_open else '>='} {lo})")
    if hi is not None and (value > hi or (hi_open and value == hi)):
        raise ConfigError(f"{name}={value} is above the allowed range ({'<' if hi_open else '<='} {hi})")
    return value


def check_probability_array(values, name, atol=1e-12):
    """Check that every entry lies in [0, 1] up to ``atol``; returns a float array."""
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite values")
    if np.any(arr < -atol) or np.any(arr > 1 + atol):
        raise ConfigError(f"{name} must lie in [0, 1]")
    return arr


def check_cutoff(cutoff, minimum=2):
    if isinstance(cutoff, bool) or not isinstance(cutoff, (numbers.Integral, np.integer)):
        raise ConfigError(f"cutoff must be an integer, got {cutoff!r}")
    if cutoff < minimum:
        raise ConfigError(f"cutoff must be >= {minimum}, got {cutoff}")
    return int(cutoff)


def check_conditions(X):
    """Validate an experiment-condition matrix with columns (T, eta, n0).

    Returns a float array of shape (n_samples, 3).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ConfigError(f"expected an array of shape (n, 3) with columns (T, eta, n0), got {X.shape}")
    if X.shape[0] == 0:
        raise ConfigError("no conditions supplied")
    if not np.all(np.isfinite(X)):
        raise ConfigError("conditions contain non-finite values")
    T, eta, n0 = X.T
    if np.any((T < 0) | (T > 1)):
        raise ConfigError("T must lie in [0, 1]")
    if np.any((eta <= 0) | (eta > 1)):
        raise ConfigError("eta must lie in (0, 1]")
    if np.any(n0 < 0):
        raise ConfigError("n0 must be non-negative")
    return X


def as_grid(values, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(f"{name} grid must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} grid contains non-finite values")
    return arr
