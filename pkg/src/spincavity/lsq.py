"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with a numerical Jacobian."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray


class RankDeficiencyError(np.linalg.LinAlgError):
    """The normal equations are singular; ``parameter`` is the least determined one."""

    def __init__(self, parameter: str, condition: float):
        super().__init__(f"normal equations are singular in parameter '{parameter}' (cond ~ {condition:.3g})")
        self.parameter = parameter
        self.condition = condition


@dataclass(frozen=True)
class LeastSquaresResult:
    params: NDArray
    covariance: NDArray
    stderr: NDArray
    rss: float
    dof: int
    converged: bool
    n_iter: int
    gradient_norm: float
    message: str
    names: tuple[str, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.params)))


def numerical_jacobian(fun: Callable[[NDArray], NDArray], p: NDArray, r0: NDArray | None = None,
                       rel_step: float = 1e-6, abs_step: float = 1e-9) -> NDArray:
    """Central-difference Jacobian with step ``max(rel_step*|p|, abs_step)``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for j in range(p.size):
        h = max(rel_step * abs(p[j]), abs_step)
        up = p.copy()
        dn = p.copy()
        up[j] += h
        dn[j] -= h
        cols.append((fun(up) - fun(dn)) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((0 if r0 is None else r0.size, 0))


def _check_rank(J: NDArray, names: Sequence[str], rcond: float) -> tuple[NDArray, NDArray]:
    norms = np.linalg.norm(J, axis=0)
    big = norms.max() if norms.size else 0.0
    if big == 0:
        raise RankDeficiencyError(names[0], np.inf)
    for j, nj in enumerate(norms):
        if nj <= rcond * big:
            raise RankDeficiencyError(names[j], np.inf)
    Js = J / norms
    _, s, Vt = np.linalg.svd(Js, full_matrices=False)
    if s[-1] <= rcond * s[0]:
        worst = int(np.argmax(np.abs(Vt[-1])))
        raise RankDeficiencyError(names[worst], s[0] / max(s[-1], 1e-300))
    return norms, (s, Vt)


def least_squares(
    model: Callable[[NDArray, NDArray], NDArray],
    x,
    y,
    p0,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    names: Sequence[str] | None = None,
    sigma=None,
    max_iter: int = 200,
    xtol: float = 1e-8,
    gtol: float = 1e-10,
    rcond: float = 1e-8,
) -> LeastSquaresResult:
    """Minimise ``sum(((model(p, x) - y)/sigma)**2)``.

    Parameters
    ----------
    model : callable
        ``model(params, x)`` returning an array shaped like ``y``.
    bounds : (lower, upper), optional
        Box constraints; trial steps are projected onto the box.
    names : sequence of str, optional
        Parameter names used in error messages and :meth:`LeastSquaresResult.as_dict`.

    Returns
    -------
    LeastSquaresResult
        ``converged`` is False when ``max_iter`` is reached. The covariance
        is ``(J^T J)^-1`` at the optimum scaled by ``rss/(n - p)``.

    Raises
    ------
    RankDeficiencyError
        If the normal equations are singular at the start or at the optimum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float)
    npar = p.size
    names = tuple(names) if names is not None else tuple(f"p{j}" for j in range(npar))
    if len(names) != npar:
        raise ValueError("names must match the number of parameters")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data must be finite")
    w = 1.0 / np.asarray(sigma, dtype=float) if sigma is not None else 1.0
    if bounds is None:
        lo = np.full(npar, -np.inf)
        hi = np.full(npar, np.inf)
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        if np.any(p < lo) or np.any(p > hi):
            raise ValueError("initial parameters lie outside the bounds")
    if y.size < npar:
        raise ValueError(f"{y.size} data points cannot determine {npar} parameters")

    def resid(q):
        return (np.asarray(model(q, x), dtype=float) - y) * w

    r = resid(p)
    rss = float(r @ r)
    J = numerical_jacobian(resid, p, r)
    _check_rank(J, names, rcond)
    lam = None
    converged = False
    message = "iteration cap reached"
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < gtol or rss == 0.0:
            converged = True
            message = "gradient below tolerance"
            break
        JTJ = J.T @ J
        d = np.diag(JTJ).copy()
        d[d <= 0] = 1.0
        if lam is None:
            lam = 1e-3
        accepted = False
        while True:
            try:
                step = np.linalg.solve(JTJ + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                if lam > 1e16:
                    raise RankDeficiencyError(names[int(np.argmin(d))], np.inf) from None
                continue
            trial = np.clip(p + step, lo, hi)
            small = np.linalg.norm(trial - p) <= xtol * (np.linalg.norm(p) + xtol)
            r_new = resid(trial)
            rss_new = float(r_new @ r_new)
            if small:
                # take the last short step when it helps, then stop
                if np.isfinite(rss_new) and rss_new <= rss:
                    p, r, rss = trial, r_new, rss_new
                converged = True
                message = "relative step below tolerance"
                break
            if np.isfinite(rss_new) and rss_new < rss:
                p, r, rss = trial, r_new, rss_new
                lam = max(lam / 10, 1e-12)
                accepted = True
                break
            lam *= 4
            if lam > 1e16:
                converged = True
                message = "no further decrease possible"
                break
        if converged:
            break
        if accepted:
            J = numerical_jacobian(resid, p, r)
    J = numerical_jacobian(resid, p, r)
    g = J.T @ r
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    norms, (s, Vt) = _check_rank(J, names, rcond)
    dof = y.size - npar
    s2 = rss / dof if dof > 0 else 0.0
    # (J^T J)^-1 via SVD of the column-normalised Jacobian
    inv = (Vt.T / s**2) @ Vt
    cov = inv / np.outer(norms, norms) * s2
    stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    return LeastSquaresResult(
        params=p,
        covariance=cov,
        stderr=stderr,
        rss=rss,
        dof=dof,
        converged=converged,
        n_iter=it,
        gradient_norm=gnorm,
        message=message,
        names=names,
    )
