"""Matrix kernels used by the distribution and estimation code.

Three operations cover everything the rest of the package needs: the matrix
exponential, the convolution integral that drives the E-step, and analytic
functions of a matrix (inverse, fractional powers, the exponential integral,
and Laplace transforms of the supported time transforms).
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import expm as _scipy_expm
from scipy.special import exp1, gamma as _gamma

from .exceptions import DomainError, InvalidInputError

__all__ = ["mexp", "conv_integral", "conv_integrals", "matrix_function"]

#: eigenvector condition number beyond which the spectral route is distrusted
EIG_COND_LIMIT = 1e8

#: nodes for the fallback contour quadrature
CONTOUR_NODES = 512


def _check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def mexp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of ``a``.

    Accepts a single ``(p, p)`` matrix or a stack ``(..., p, p)``; stacks are
    exponentiated slice by slice.
    """
    a = _check_square(a)
    return _scipy_expm(a)


def conv_integral(t: np.ndarray, b: np.ndarray, z: float) -> np.ndarray:
    """Integral of ``expm(t*(z-u)) @ b @ expm(t*u)`` for u in ``[0, z]``.

    Evaluated exactly (up to the accuracy of one matrix exponential) as the
    upper-right block of ``expm([[t, b], [0, t]] * z)``.
    """
    out = conv_integrals(t, b, np.asarray([z], dtype=float))
    return out[0]


def conv_integrals(t: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Stacked :func:`conv_integral` over a vector of upper limits ``z``."""
    t = _check_square(t, "t")
    b = _check_square(b, "b")
    if t.shape != b.shape:
        raise InvalidInputError("t and b must have matching shapes")
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise InvalidInputError("z must be one-dimensional")
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise InvalidInputError("upper limits must be finite and nonnegative")
    p = t.shape[0]
    if z.size == 0:
        return np.zeros((0, p, p))
    block = np.zeros((2 * p, 2 * p))
    block[:p, :p] = t
    block[:p, p:] = b
    block[p:, p:] = t
    stacked = block[None, :, :] * z[:, None, None]
    return mexp(stacked)[:, :p, p:]


def _laplace_of_transform(family: str, param: float | None) -> Callable:
    """Laplace transform of the time transform ``g`` for a named family.

    Returns a callable usable on complex arrays with positive real part.
    """
    if family == "identity":
        return lambda s: 1.0 / s**2
    if family == "gompertz":
        beta = float(param)
        if beta <= 0:
            raise InvalidInputError("gompertz rate parameter must be positive")
        return lambda s: np.exp(s / beta) * exp1(s / beta) / (beta * s)
    if family == "weibull":
        theta = float(param)
        if theta <= 0:
            raise InvalidInputError("weibull shape parameter must be positive")
        return lambda s: _gamma(1.0 + 1.0 / theta) / s ** (1.0 + 1.0 / theta)
    raise InvalidInputError(f"unknown transform family {family!r}")


_CUT_FUNCTIONS = {"exp1", "power", "laplace_g"}


def _resolve_function(f, params: dict) -> tuple[Callable, bool]:
    """Map a function id (or callable) to a complex-capable callable.

    The boolean marks functions with a branch cut on the closed negative real
    axis, which constrains the fallback contour.
    """
    if callable(f):
        return f, bool(params.get("branch_cut", False))
    if f == "inverse":
        return lambda s: 1.0 / s, False
    if f == "exp":
        return np.exp, False
    if f == "power":
        alpha = float(params["alpha"])
        return lambda s: s**alpha, True
    if f == "exp1":
        return exp1, True
    if f == "laplace_g":
        fn = _laplace_of_transform(params["family"], params.get("param"))
        return fn, True
    raise InvalidInputError(f"unknown matrix function id {f!r}")


def _contour_value(a: np.ndarray, fn: Callable, eigvals: np.ndarray,
                   branch_cut: bool) -> np.ndarray:
    """Cauchy-integral evaluation on a circle enclosing the spectrum."""
    center = eigvals.mean()
    radius = 1.1 * np.max(np.abs(eigvals - center)) + 1e-3 * (1.0 + abs(center))
    if branch_cut:
        # distance from the disk to the cut (-inf, 0]
        if center.real <= 0:
            cut_dist = abs(center.imag)
        else:
            cut_dist = abs(center)
        if radius >= cut_dist:
            raise DomainError(
                "contour for a branch-cut function would cross the negative "
                "real axis; spectrum too spread or too close to zero")
    p = a.shape[0]
    angles = 2.0 * np.pi * np.arange(CONTOUR_NODES) / CONTOUR_NODES
    nodes = center + radius * np.exp(1j * angles)
    acc = np.zeros((p, p), dtype=complex)
    eye = np.eye(p)
    for w, ang in zip(nodes, np.exp(1j * angles)):
        acc += fn(w) * ang * np.linalg.solve(w * eye - a, eye)
    return acc * radius / CONTOUR_NODES


def matrix_function(a: np.ndarray, f, **params) -> np.ndarray:
    """Evaluate an analytic scalar function on a square matrix.

    ``f`` is one of the ids ``"inverse"``, ``"power"`` (with ``alpha``),
    ``"exp"``, ``"exp1"``, ``"laplace_g"`` (with ``family`` and ``param``), or
    a callable acting on complex arrays.  Diagonalizable input with a well
    conditioned eigenbasis goes through the spectral formula; otherwise a
    512-node contour quadrature around the spectrum is used.  Complex
    intermediates are allowed; the imaginary part of the result must stay
    below 1e-9 and is discarded.
    """
    a = _check_square(a)
    if a.ndim != 2:
        raise InvalidInputError("matrix_function expects a single matrix")
    fn, branch_cut = _resolve_function(f, params)
    eigvals, eigvecs = np.linalg.eig(a)

    with np.errstate(divide="ignore", invalid="ignore"):
        fvals = np.asarray(fn(eigvals))
    if not np.all(np.isfinite(fvals.view(float))):
        raise DomainError("function is singular on the spectrum")

    cond = np.linalg.cond(eigvecs)
    if cond < EIG_COND_LIMIT:
        out = eigvecs @ np.diag(fvals) @ np.linalg.inv(eigvecs)
    else:
        out = _contour_value(a, fn, eigvals, branch_cut)

    imag_max = np.abs(out.imag).max() if np.iscomplexobj(out) else 0.0
    scale = max(1.0, np.abs(out.real).max() if np.iscomplexobj(out) else np.abs(out).max())
    if imag_max > 1e-9 * scale:
        raise DomainError(f"imaginary residue {imag_max:.2e} exceeds tolerance")
    return out.real if np.iscomplexobj(out) else out
