"""Limited-memory BFGS with a strong Wolfe line search.

The line search brackets a step satisfying the strong Wolfe conditions
and then zooms in on it with safeguarded cubic interpolation
(Nocedal & Wright, *Numerical Optimization*, 2nd ed., Algorithms 3.5 and
3.6). Search directions come from the two-loop recursion (Algorithm 7.4)
with the usual ``s.y / y.y`` initial inverse-Hessian scaling.

"""

from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from cse_expansion import config
from cse_expansion.exceptions import DomainError

if TYPE_CHECKING:
    from cse_expansion.typing import FloatArray, GradientMode, ObjectiveFunction

__all__ = ("OptimizeReport", "OptimizerOptions", "lbfgs_minimize")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerOptions:
    """Settings of :func:`lbfgs_minimize`.

    Use :meth:`from_config` to start from the ``cse.optimizer``
    configuration.

    """

    memory: int = 10
    gradient_tolerance: float = 1e-10
    max_iterations: int = 2000
    sufficient_decrease: float = 1e-4
    curvature: float = 0.9
    max_line_search: int = 25
    gradient_mode: GradientMode = "analytic"
    roundoff_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 < self.sufficient_decrease < self.curvature < 1.0:
            raise DomainError(
                "line-search constants must satisfy 0 < sufficient_decrease < curvature "
                f"< 1, got {self.sufficient_decrease} and {self.curvature}"
            )
        if self.memory < 1:
            raise DomainError(f"memory must be at least 1, got {self.memory}")
        if self.max_iterations < 0 or self.max_line_search < 1:
            raise DomainError("iteration limits must be positive")
        if self.gradient_tolerance <= 0.0:
            raise DomainError("gradient_tolerance must be positive")
        if self.roundoff_tolerance < 0.0:
            raise DomainError("roundoff_tolerance must be nonnegative")
        if self.gradient_mode not in ("analytic", "finite-difference"):
            raise DomainError(f"unknown gradient mode {self.gradient_mode!r}")

    @classmethod
    def from_config(cls, **overrides) -> OptimizerOptions:
        options = cls(
            memory=config.get("optimizer.memory"),
            gradient_tolerance=config.get("optimizer.gradient-tolerance"),
            max_iterations=config.get("optimizer.max-iterations"),
            sufficient_decrease=config.get("optimizer.sufficient-decrease"),
            curvature=config.get("optimizer.curvature"),
            max_line_search=config.get("optimizer.max-line-search"),
            gradient_mode=config.get("optimizer.gradient-mode"),
            roundoff_tolerance=config.get("optimizer.roundoff-tolerance"),
        )
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(options, **overrides)


@dataclass(frozen=True, eq=False)
class OptimizeReport:
    """Result of :func:`lbfgs_minimize`.

    ``x`` is the best point found, even when the run stopped early;
    ``message`` says why it stopped.

    """

    x: FloatArray
    fun: float
    grad: FloatArray
    n_iterations: int
    n_evaluations: int
    converged: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


def _cubic_interpolate(x1, f1, g1, x2, f2, g2, bounds=None):
    """Minimizer of the cubic through two points with slopes, clipped."""
    if bounds is not None:
        xmin_bound, xmax_bound = bounds
    else:
        xmin_bound, xmax_bound = (x1, x2) if x1 <= x2 else (x2, x1)

    d1 = g1 + g2 - 3 * (f1 - f2) / (x1 - x2)
    d2_square = d1**2 - g1 * g2
    if d2_square >= 0:
        d2 = np.sqrt(d2_square)
        if x1 <= x2:
            min_pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2 * d2))
        else:
            min_pos = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2 * d2))
        if np.isfinite(min_pos):
            return min(max(min_pos, xmin_bound), xmax_bound)
    return (xmin_bound + xmax_bound) / 2.0


def _secant_interpolate(x1, g1, x2, g2, bounds=None):
    """Zero of the slope interpolated linearly between two points, clipped.

    Used where objective differences are within roundoff and only the
    slopes carry information.

    """
    if bounds is not None:
        xmin_bound, xmax_bound = bounds
    else:
        xmin_bound, xmax_bound = (x1, x2) if x1 <= x2 else (x2, x1)
    if g1 != g2:
        pos = x1 - g1 * (x2 - x1) / (g2 - g1)
        if np.isfinite(pos):
            return min(max(pos, xmin_bound), xmax_bound)
    return (xmin_bound + xmax_bound) / 2.0


def _strong_wolfe(
    fun: ObjectiveFunction,
    x: FloatArray,
    alpha: float,
    d: FloatArray,
    loss: float,
    grad: FloatArray,
    gtd: float,
    c1: float,
    c2: float,
    tolerance_change: float,
    max_ls: int,
    roundoff: float = 0.0,
):
    """Strong Wolfe search along `d` starting from step `alpha`.

    Returns ``(loss, grad, alpha, n_evaluations, done)`` for the lowest
    point of the final bracket; ``done`` tells whether both Wolfe
    conditions hold there.

    Objective changes of at most `roundoff` are treated as noise: such
    trial points are judged by their slope alone (the approximate Wolfe
    conditions of Hager and Zhang) and interpolated with secants.

    """

    def flat(f_a, f_b):
        return abs(f_a - f_b) <= roundoff

    def too_high(f_new, step):
        return not flat(f_new, loss) and f_new > loss + c1 * step * gtd

    def interpolate(x1, f1, g1, x2, f2, g2, bounds=None):
        if flat(f1, f2):
            return _secant_interpolate(x1, g1, x2, g2, bounds=bounds)
        return _cubic_interpolate(x1, f1, g1, x2, f2, g2, bounds=bounds)

    d_norm = float(np.max(np.abs(d)))
    loss_new, grad_new = fun(x + alpha * d)
    ls_func_evals = 1
    gtd_new = float(grad_new @ d)

    # bracket an interval containing a point satisfying the Wolfe criteria
    t_prev, f_prev, g_prev, gtd_prev = 0.0, loss, grad, gtd
    done = False
    ls_iter = 0
    while ls_iter < max_ls:
        if too_high(loss_new, alpha) or (
            ls_iter > 1 and loss_new >= f_prev and not flat(loss_new, f_prev)
        ):
            bracket = [t_prev, alpha]
            bracket_f = [f_prev, loss_new]
            bracket_g = [g_prev, grad_new]
            bracket_gtd = [gtd_prev, gtd_new]
            break

        if abs(gtd_new) <= -c2 * gtd:
            bracket = [alpha]
            bracket_f = [loss_new]
            bracket_g = [grad_new]
            done = True
            break

        if gtd_new >= 0:
            bracket = [t_prev, alpha]
            bracket_f = [f_prev, loss_new]
            bracket_g = [g_prev, grad_new]
            bracket_gtd = [gtd_prev, gtd_new]
            break

        # extrapolate
        min_step = alpha + 0.01 * (alpha - t_prev)
        max_step = alpha * 10
        tmp = alpha
        alpha = interpolate(
            t_prev, f_prev, gtd_prev, alpha, loss_new, gtd_new, bounds=(min_step, max_step)
        )
        t_prev, f_prev, g_prev, gtd_prev = tmp, loss_new, grad_new, gtd_new

        loss_new, grad_new = fun(x + alpha * d)
        ls_func_evals += 1
        gtd_new = float(grad_new @ d)
        ls_iter += 1

    if ls_iter == max_ls:
        bracket = [0.0, alpha]
        bracket_f = [loss, loss_new]
        bracket_g = [grad, grad_new]
        bracket_gtd = [gtd, gtd_new]

    # zoom until the bracket holds a Wolfe point or collapses
    insuf_progress = False
    low_pos, high_pos = (0, 1) if bracket_f[0] <= bracket_f[-1] else (1, 0)
    while not done and ls_iter < max_ls:
        if abs(bracket[1] - bracket[0]) * d_norm < tolerance_change:
            break

        alpha = interpolate(
            bracket[0], bracket_f[0], bracket_gtd[0], bracket[1], bracket_f[1], bracket_gtd[1]
        )

        # keep trial steps at least a tenth of the bracket away from its ends
        eps = 0.1 * (max(bracket) - min(bracket))
        if min(max(bracket) - alpha, alpha - min(bracket)) < eps:
            if insuf_progress or alpha >= max(bracket) or alpha <= min(bracket):
                if abs(alpha - max(bracket)) < abs(alpha - min(bracket)):
                    alpha = max(bracket) - eps
                else:
                    alpha = min(bracket) + eps
                insuf_progress = False
            else:
                insuf_progress = True
        else:
            insuf_progress = False

        loss_new, grad_new = fun(x + alpha * d)
        ls_func_evals += 1
        gtd_new = float(grad_new @ d)
        ls_iter += 1

        if too_high(loss_new, alpha) or (
            loss_new >= bracket_f[low_pos] and not flat(loss_new, bracket_f[low_pos])
        ):
            bracket[high_pos] = alpha
            bracket_f[high_pos] = loss_new
            bracket_g[high_pos] = grad_new
            bracket_gtd[high_pos] = gtd_new
            low_pos, high_pos = (0, 1) if bracket_f[0] <= bracket_f[1] else (1, 0)
        else:
            if abs(gtd_new) <= -c2 * gtd:
                done = True
            elif gtd_new * (bracket[high_pos] - bracket[low_pos]) >= 0:
                bracket[high_pos] = bracket[low_pos]
                bracket_f[high_pos] = bracket_f[low_pos]
                bracket_g[high_pos] = bracket_g[low_pos]
                bracket_gtd[high_pos] = bracket_gtd[low_pos]

            bracket[low_pos] = alpha
            bracket_f[low_pos] = loss_new
            bracket_g[low_pos] = grad_new
            bracket_gtd[low_pos] = gtd_new

    return bracket_f[low_pos], bracket_g[low_pos], bracket[low_pos], ls_func_evals, done


def _two_loop(grad: FloatArray, history: deque, h_diag: float) -> FloatArray:
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    r = h_diag * q
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


def lbfgs_minimize(
    fun: ObjectiveFunction,
    x0: FloatArray,
    options: OptimizerOptions | None = None,
    callback: Optional[Callable[[FloatArray, float], None]] = None,
) -> OptimizeReport:
    """Minimize a smooth function with L-BFGS.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (value, gradient)``; must be deterministic.
    x0 : array_like
        Finite starting point.
    options : OptimizerOptions, optional
        Defaults to :meth:`OptimizerOptions.from_config`.
    callback : callable, optional
        Called as ``callback(x, value)`` on the starting point and after
        every accepted step.

    Returns
    -------
    OptimizeReport
        Converged when the gradient 2-norm dropped below the tolerance.
        A failed line search ends the run with the best point so far and
        a diagnostic message instead of raising.

    """
    if options is None:
        options = OptimizerOptions.from_config()
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise DomainError("starting point must be finite")

    loss, grad = fun(x)
    grad = np.asarray(grad, dtype=np.float64)
    n_evals = 1
    if callback is not None:
        callback(x, loss)

    history: deque = deque(maxlen=options.memory)
    h_diag = 1.0
    converged = False
    message = f"maximum number of iterations ({options.max_iterations}) reached"
    iteration = 0
    for iteration in range(options.max_iterations + 1):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < options.gradient_tolerance:
            converged = True
            message = "gradient norm below tolerance"
            break
        if iteration == options.max_iterations:
            break

        d = _two_loop(grad, history, h_diag)
        gtd = float(grad @ d)
        if gtd >= 0.0:
            # quasi-Newton direction lost descent; restart from steepest descent
            history.clear()
            h_diag = 1.0
            d = -grad
            gtd = float(grad @ d)
        alpha = min(1.0, 1.0 / float(np.sum(np.abs(grad)))) if not history else 1.0
        roundoff = options.roundoff_tolerance * abs(loss)

        loss_new, grad_new, alpha, evals, done = _strong_wolfe(
            fun,
            x,
            alpha,
            d,
            loss,
            grad,
            gtd,
            c1=options.sufficient_decrease,
            c2=options.curvature,
            tolerance_change=np.finfo(float).eps * max(1.0, float(np.max(np.abs(x)))),
            max_ls=options.max_line_search,
            roundoff=roundoff,
        )
        n_evals += evals
        if alpha == 0.0 or loss_new > loss + roundoff or (loss_new >= loss and not done):
            message = (
                f"line search failed at iteration {iteration} "
                f"(objective {loss:.3e}, gradient norm {grad_norm:.3e})"
            )
            break

        s = alpha * d
        y = grad_new - grad
        ys = float(y @ s)
        if ys > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            history.append((s, y, 1.0 / ys))
            h_diag = ys / float(y @ y)

        x = x + s
        loss, grad = loss_new, np.asarray(grad_new, dtype=np.float64)
        if callback is not None:
            callback(x, loss)
        if iteration % 50 == 0:
            logger.debug(
                "L-BFGS iteration %d: f = %.6e, |g| = %.3e", iteration, loss, grad_norm
            )

    if not converged:
        warnings.warn(f"L-BFGS stopped: {message}", stacklevel=2)
    logger.info(
        "L-BFGS finished after %d iterations (%d evaluations): f = %.6e; %s",
        iteration,
        n_evals,
        loss,
        message,
    )
    return OptimizeReport(
        x=x,
        fun=float(loss),
        grad=grad,
        n_iterations=iteration,
        n_evaluations=n_evals,
        converged=converged,
        message=message,
    )
