"""Inexact general directions method with convergent step-size rules.

Directions only need to satisfy angle/length conditions measured on the
inexact gradient; with a relative gradient-error level zeta below the
direction-quality ratio, the same conditions hold for the exact gradient
with converted constants, so the classical descent analysis applies
unchanged.  Three step rules are provided: uniformly bounded, diminishing,
and Armijo backtracking, plus the plain fixed step used by the
aerodynamic experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, EvaluationError


@dataclass(frozen=True)
class DirectionSpec:
    """Direction-quality constants and the relative gradient-error level."""

    c1p: float = 1.0
    c2p: float = 1.0
    zeta: float = 0.0

    def __post_init__(self):
        if self.c1p <= 0 or self.c2p <= 0:
            raise ValueError("direction constants must be positive")
        if self.c1p > self.c2p:
            raise ValueError("c1' <= c2' is required (Cauchy-Schwarz)")
        if not 0.0 <= self.zeta < self.c1p / self.c2p:
            raise ValueError("zeta must lie in [0, c1'/c2')")


@dataclass(frozen=True)
class ConvertedConstants:
    """Exact-gradient direction constants implied by inexact ones."""

    c1: float
    c2: float

    @property
    def curvature_cap(self) -> float:
        """C = c1 / c2^2, the sufficient-decrease slope bound."""
        return self.c1 / self.c2**2


def convert_constants(spec: DirectionSpec) -> ConvertedConstants:
    """c1 = (c1' - zeta c2') / (1 + zeta)^2 and c2 = c2' / (1 - zeta)."""
    z = spec.zeta
    c1 = (spec.c1p - z * spec.c2p) / (1.0 + z) ** 2
    c2 = spec.c2p / (1.0 - z)
    return ConvertedConstants(c1=c1, c2=c2)


def gradient_comparison_bounds(zeta: float, g_bar_norm: float):
    """Interval containing the exact gradient norm given the inexact one."""
    if not 0.0 <= zeta < 1.0:
        raise ValueError("zeta must lie in [0, 1)")
    return ((1.0 - zeta) * g_bar_norm, (1.0 + zeta) * g_bar_norm)


# ---- step rules -------------------------------------------------------------


@dataclass(frozen=True)
class FixedStep:
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("fixed step must be positive")


@dataclass(frozen=True)
class BoundedStep:
    """Constant step inside the admissible interval [t_bar, (2c1-gamma)/(c2^2 L)]."""

    gamma: float
    lipschitz: float
    t_bar: float | None = None

    def validate(self, constants: ConvertedConstants) -> float:
        upper = (2.0 * constants.c1 - self.gamma) / (constants.c2**2 * self.lipschitz)
        if not 0.0 < self.gamma < 2.0 * constants.c1:
            raise ValueError("gamma must lie in (0, 2 c1)")
        t = upper if self.t_bar is None else self.t_bar
        if not 0.0 < t <= upper:
            raise ValueError(f"t_bar must lie in (0, {upper:.6g}]")
        return t


@dataclass(frozen=True)
class DiminishingStep:
    """t_k = t0 / (k + 1): vanishing but not summable."""

    t0: float = 1.0

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("t0 must be positive")

    def step_at(self, k: int) -> float:
        return self.t0 / (k + 1.0)


@dataclass(frozen=True)
class ArmijoStep:
    t0: float = 1.0
    theta: float = 0.5
    sigma: float = 0.1
    max_backtracks: int = 60

    def __post_init__(self):
        if self.t0 <= 0 or not 0.0 < self.theta < 1.0 or self.sigma <= 0:
            raise ValueError("require t0 > 0, theta in (0,1), sigma > 0")

    def validate(self, constants: ConvertedConstants):
        if self.sigma >= constants.curvature_cap:
            raise ValueError(
                f"sigma must lie in (0, C) with C = {constants.curvature_cap:.6g}"
            )


def armijo_backtrack(objective, z, s, f_z=None, rule: ArmijoStep = ArmijoStep()):
    """Largest t in {t0 theta^i} with F(z + t s) <= F(z) - t sigma ||s||^2.

    An objective raising ``EvaluationError`` at a trial point counts as a
    failed decrease and backtracking continues.
    """
    if f_z is None:
        f_z = objective(z)
    s = np.asarray(s, dtype=float)
    s_sq = float(s @ s)
    t = rule.t0
    for _ in range(rule.max_backtracks + 1):
        try:
            f_trial = objective(z + t * s)
        except EvaluationError:
            f_trial = np.inf
        if f_trial <= f_z - t * rule.sigma * s_sq:
            return t, f_trial
        t *= rule.theta
    raise ConvergenceError(
        f"Armijo backtracking exhausted {rule.max_backtracks} halvings"
    )


# ---- direction policies -----------------------------------------------------


def steepest_descent(g_bar):
    return -np.asarray(g_bar, dtype=float)


def scaled_descent(scaling):
    """Diagonal-scaled descent; c1' = min(d), c2' = max(d) for the spec."""
    d = np.asarray(scaling, dtype=float)
    if np.any(d <= 0):
        raise ValueError("scaling must be positive")

    def policy(g_bar):
        return -d * np.asarray(g_bar, dtype=float)

    return policy


def adversarial_gradient(exact_grad, zeta, aux_direction):
    """Worst-case inexact gradient: rotated by the maximal angle.

    Returns g_bar on the Apollonius circle {g_bar : ||g_bar - g|| = zeta
    ||g_bar||} at the tangency point, so the error budget is met with
    equality and the angle to the exact gradient is asin(zeta).
    """
    g = np.asarray(exact_grad, dtype=float)
    gn = np.linalg.norm(g)
    if gn == 0.0 or zeta == 0.0:
        return g.copy()
    ghat = g / gn
    aux = np.asarray(aux_direction, dtype=float)
    perp = aux - (aux @ ghat) * ghat
    pn = np.linalg.norm(perp)
    if pn < 1e-14 * np.linalg.norm(aux):
        return g.copy()
    perp /= pn
    angle = np.arcsin(zeta)
    direction = np.cos(angle) * ghat + np.sin(angle) * perp
    return (gn / np.sqrt(1.0 - zeta**2)) * direction


# ---- the iteration ----------------------------------------------------------


@dataclass
class DescentRecord:
    k: int
    objective: float
    grad_norm: float
    step: float
    extra: float = 0.0


@dataclass
class DescentResult:
    z: np.ndarray
    objective: float
    history: list[DescentRecord] = field(default_factory=list)
    termination: str = "max_iters"
    iterates: list = field(default_factory=list)

    @property
    def grad_norms(self):
        return np.array([r.grad_norm for r in self.history])

    @property
    def objectives(self):
        return np.array([r.objective for r in self.history])


def run_descent(
    objective,
    gradient_oracle,
    z0,
    step_rule,
    direction_policy=steepest_descent,
    direction_spec: DirectionSpec | None = None,
    grad_tol: float = 1e-8,
    max_iters: int = 1000,
    keep_iterates: bool = False,
):
    """Iterate z <- z + t s until the inexact gradient norm reaches tol.

    ``objective`` and ``gradient_oracle`` may raise ``EvaluationError``;
    under Armijo a failed trial point is absorbed as a rejected step, under
    the other rules a failure terminates the run with a diagnostic.
    """
    z = np.asarray(z0, dtype=float).copy()
    f = objective(z)
    result = DescentResult(z=z, objective=f)
    constants = convert_constants(direction_spec) if direction_spec is not None else None
    if isinstance(step_rule, BoundedStep):
        if constants is None:
            raise ValueError("bounded steps need a DirectionSpec for admissibility")
        t_const = step_rule.validate(constants)
    if isinstance(step_rule, ArmijoStep) and constants is not None:
        step_rule.validate(constants)

    for k in range(max_iters + 1):
        g_bar = np.asarray(gradient_oracle(z), dtype=float)
        gn = float(np.linalg.norm(g_bar))
        if keep_iterates:
            result.iterates.append(z.copy())
        if gn <= grad_tol:
            result.history.append(DescentRecord(k=k, objective=f, grad_norm=gn, step=0.0))
            result.termination = "grad_tol"
            break
        if k == max_iters:
            result.history.append(DescentRecord(k=k, objective=f, grad_norm=gn, step=0.0))
            result.termination = "max_iters"
            break

        s = direction_policy(g_bar)
        if direction_spec is not None:
            _check_direction(direction_spec, g_bar, s)

        if isinstance(step_rule, ArmijoStep):
            try:
                t, f_new = armijo_backtrack(objective, z, s, f_z=f, rule=step_rule)
            except ConvergenceError:
                result.history.append(DescentRecord(k=k, objective=f, grad_norm=gn, step=0.0))
                result.termination = "armijo_stalled"
                break
        else:
            if isinstance(step_rule, FixedStep):
                t = step_rule.step
            elif isinstance(step_rule, BoundedStep):
                t = t_const
            elif isinstance(step_rule, DiminishingStep):
                t = step_rule.step_at(k)
            else:
                raise TypeError(f"unknown step rule {step_rule!r}")
            try:
                f_new = objective(z + t * s)
            except EvaluationError as exc:
                result.history.append(DescentRecord(k=k, objective=f, grad_norm=gn, step=t))
                result.termination = f"evaluation_failure: {exc}"
                break

        result.history.append(DescentRecord(k=k, objective=f, grad_norm=gn, step=t))
        z = z + t * s
        f = f_new

    result.z = z
    result.objective = f
    return result


def _check_direction(spec: DirectionSpec, g_bar, s):
    gn2 = float(g_bar @ g_bar)
    slack = 1e-10 * (1.0 + gn2)
    if -(g_bar @ s) + slack < spec.c1p * gn2:
        raise ConvergenceError("direction violates the angle condition")
    if np.linalg.norm(s) > spec.c2p * np.sqrt(gn2) * (1.0 + 1e-10) + slack:
        raise ConvergenceError("direction violates the length condition")


def save_history_csv(path, result: DescentResult, extra_name="extra"):
    with open(path, "w") as fh:
        fh.write(f"k,objective,grad_norm,step,{extra_name}\n")
        for r in result.history:
            fh.write(f"{r.k},{r.objective:.17g},{r.grad_norm:.17g},{r.step:.17g},{r.extra:.17g}\n")
