"""Weighted eigensum primitives with a compiled fast path.

The compiled extension ``_csums`` is used when it imports; otherwise the
numpy implementation below is selected. Set ``RFRISK_PURE_PYTHON=1`` to
force the numpy path (used by the benchmark and the backend parity tests).
"""
import os

import numpy as np


def weighted_sums_numpy(lam, vsq, w, gamma):
    """Return ``(z, q, b1, b2, c1)`` at regularizer ``gamma``.

    Parameters
    ----------
    lam, vsq, w : ndarray of float64
        Node eigenvalues, squared target coefficients and quadrature weights.
    gamma : float
        Positive regularizer.

    Returns
    -------
    tuple of float
        ``z = sum w L``, ``q = sum w L^2``, ``b1 = sum w v^2 G``,
        ``b2 = sum w v^2 G^2`` and ``c1 = sum w v^2 lam/(lam+gamma)^2`` with
        ``L = lam/(lam+gamma)`` and ``G = gamma/(lam+gamma)``.
    """
    d = lam + gamma
    learn = lam / d
    resid = gamma / d
    wv = w * vsq
    return (float(w @ learn), float(w @ (learn * learn)), float(wv @ resid),
            float(wv @ (resid * resid)), float(wv @ (learn / d)))


def weighted_z_numpy(lam, w, gamma):
    return float(w @ (lam / (lam + gamma)))


BACKEND = "numpy"
weighted_sums = weighted_sums_numpy
weighted_z = weighted_z_numpy

if os.environ.get("RFRISK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._csums import weighted_sums, weighted_z  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass
