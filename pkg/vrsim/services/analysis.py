"""
Theory.

Closed-form quantities the simulators are checked against: the descent
coefficient β₁, predicted bounds on E‖∇f(x_ζ)‖², SFO counts and the uniform
stability bounds, for both architectures.
"""

from __future__ import annotations

import logging
import math

from vrsim.errors import TheoryError
from vrsim.models import Algorithm, Architecture, Convexity, ModelKind
from vrsim.schemas import AnyRunConfig, TheoryInputs, ceil_sqrt
from vrsim.services.data import Dataset
from vrsim.services.engine import make_streams
from vrsim.services.objective import ObjectiveModel

logger = logging.getLogger(__name__)

RULE_TOLERANCE = 1e-9


def _staleness_weight(inputs: TheoryInputs) -> float:
    """Δ² + q(Δ+1)/|S|."""
    delta = inputs.max_delay
    return delta**2 + inputs.q * (delta + 1) / inputs.batch


# ── β₁ ─────────────────────────────────────────────────


def beta1_dm(inputs: TheoryInputs) -> float:
    L, eta = inputs.smoothness, inputs.eta
    return eta / 2 - L * eta**2 / 2 - L**2 * eta**3 * _staleness_weight(inputs)


def beta1_sm(inputs: TheoryInputs) -> float:
    L, eta, d = inputs.smoothness, inputs.eta, inputs.dim
    return eta / (2 * d) - L * eta**2 / (2 * d) - L**2 * eta**3 / d**2 * _staleness_weight(inputs)


def beta1(inputs: TheoryInputs, arch: Architecture) -> float:
    return beta1_sm(inputs) if arch == Architecture.SHARED else beta1_dm(inputs)


# ── Gradient-norm bounds ───────────────────────────────


def _check_rule(inputs: TheoryInputs, factor: float) -> None:
    rule_eta = 1.0 / (factor * inputs.smoothness * (inputs.max_delay + 1))
    root = ceil_sqrt(inputs.n_samples)
    if abs(inputs.eta - rule_eta) > RULE_TOLERANCE * rule_eta:
        raise TheoryError(f"closed-form bound needs eta = 1/({factor:g}L(delta+1)) = {rule_eta:.6g}, got {inputs.eta:.6g}")
    if inputs.q != root or inputs.batch != root:
        raise TheoryError(f"closed-form bound needs q = |S| = ceil(sqrt(N)) = {root}, got q={inputs.q}, |S|={inputs.batch}")


def predicted_grad_bound_dm(inputs: TheoryInputs) -> float:
    """16L(Δ+1)(9Δ²+17Δ+9)·(f(x₀) − f*) / (K(7Δ²+13Δ+5)) under the step-size rule."""
    _check_rule(inputs, 4.0)
    L, delta = inputs.smoothness, inputs.max_delay
    numerator = 16 * L * (delta + 1) * (9 * delta**2 + 17 * delta + 9) * inputs.f_gap
    return numerator / (inputs.iterations * (7 * delta**2 + 13 * delta + 5))


def predicted_grad_bound_sm(inputs: TheoryInputs) -> float:
    """Shared-memory closed form under η = 1/(2L(Δ+1))."""
    _check_rule(inputs, 2.0)
    L, delta, d = inputs.smoothness, inputs.max_delay, inputs.dim
    lag = delta**2 + delta + 1
    denominator = 2 * d * (delta + 1) ** 2 - d * (delta + 1) - lag
    if denominator <= 0:
        raise TheoryError(f"beta1 is not positive at d={d}, delta={delta}; no bound")
    ratio = (2 * (delta + 1) ** 2 * d + lag) / denominator
    return 8 * L * d * (delta + 1) / inputs.iterations * ratio * inputs.f_gap


def general_grad_bound(inputs: TheoryInputs, arch: Architecture = Architecture.DISTRIBUTED) -> float:
    """Bound before the step-size substitution; holds for any η with β₁ > 0."""
    b1 = beta1(inputs, arch)
    if b1 <= 0:
        raise TheoryError(f"beta1 = {b1:.4g} is not positive; the configuration is outside the theorem")
    L, eta, K = inputs.smoothness, inputs.eta, inputs.iterations
    weight = _staleness_weight(inputs)
    d = inputs.dim if arch == Architecture.SHARED else 1
    eps1_sq = inputs.eps1**2
    if arch == Architecture.SHARED:
        eps_term = 2 / (b1 * d) * (eta + 2 * L**2 / d * weight * eta**3) + 4
    else:
        eps_term = 2 / b1 * (eta + 2 * L**2 * weight * eta**3) + 4
    gap_term = 4 * L**2 * weight * eta**2 / (K * b1 * d) + 2 / (K * b1)
    return eps_term * eps1_sq + gap_term * inputs.f_gap


def predicted_bound(inputs: TheoryInputs, arch: Architecture) -> tuple[float | None, str | None]:
    """Closed form when its hypothesis holds, otherwise the general bound, otherwise nothing."""
    closed = predicted_grad_bound_sm if arch == Architecture.SHARED else predicted_grad_bound_dm
    try:
        return closed(inputs), "closed-form"
    except TheoryError:
        pass
    try:
        return general_grad_bound(inputs, arch), "general"
    except TheoryError as exc:
        logger.warning("no predicted bound: %s", exc)
        return None, None


def iterations_for_epsilon(inputs: TheoryInputs, eps: float, arch: Architecture = Architecture.DISTRIBUTED) -> int:
    """Smallest K whose general bound guarantees E‖∇f(x_ζ)‖² ≤ ε²."""
    if eps <= 0:
        raise TheoryError("epsilon must be positive")
    at_one = general_grad_bound(inputs.model_copy(update={"iterations": 1}), arch)
    floor = general_grad_bound(inputs.model_copy(update={"iterations": 1, "f_gap": 0.0}), arch)
    if floor >= eps**2:
        raise TheoryError(f"estimator error eps1={inputs.eps1:g} alone exceeds eps^2; no K suffices")
    return max(1, math.ceil((at_one - floor) / (eps**2 - floor)))


def sfo_for_epsilon(inputs: TheoryInputs, eps: float, arch: Architecture = Architecture.DISTRIBUTED) -> int:
    K = iterations_for_epsilon(inputs, eps, arch)
    return sfo_paper(K, inputs.q, inputs.n_samples, inputs.batch)


def epsilon_report(inputs: TheoryInputs, eps: float, arch: Architecture) -> dict:
    """Iterations and SFO calls the general bound needs for an ε-accurate solution; null when unreachable."""
    try:
        return {
            "eps": eps,
            "iterations": iterations_for_epsilon(inputs, eps, arch),
            "sfo": sfo_for_epsilon(inputs, eps, arch),
        }
    except TheoryError as exc:
        logger.warning("no iteration count for eps=%g: %s", eps, exc)
        return {"eps": eps, "iterations": None, "sfo": None}


# ── SFO ────────────────────────────────────────────────


def sfo_paper(K: int, q: int, N: int, batch: int) -> int:
    """⌈K/q⌉·N + K·|S|."""
    if batch <= 0:
        raise TheoryError(f"batch size must be positive, got {batch}")
    if K < 0 or q <= 0 or N <= 0:
        raise TheoryError(f"invalid SFO arguments K={K}, q={q}, N={N}")
    return -(-K // q) * N + K * batch


def sfo_for_algorithm(algorithm: Algorithm, K: int, q: int, N: int, batch: int) -> int:
    if algorithm == Algorithm.ASYNC_SGD:
        return K * batch
    if algorithm == Algorithm.ASYNC_SVRG:
        return sfo_paper(K, q, N, 2 * batch)
    return sfo_paper(K, q, N, batch)


# ── Stability ──────────────────────────────────────────


def stability_bound(
    arch: Architecture, convexity: Convexity, eta: float, M: float, K: int, N: int, d: int = 1
) -> float:
    """Uniform-stability bound ε′ on the loss."""
    if min(eta, M, K, N, d) <= 0:
        raise TheoryError("stability bound needs positive eta, M, K, N and d")
    base = 2 * eta * M**2 * K
    scale = math.sqrt(d) if arch == Architecture.SHARED else 1.0
    if convexity == Convexity.QUADRATIC_SC:
        return base / (N * scale)
    return base / scale + base / (N * scale)


def stability_bound_statement_form(
    arch: Architecture, convexity: Convexity, eta: float, M: float, K: int, N: int, d: int = 1
) -> float:
    """The nonconvex bound as the theorem statement prints it, quadratic in K."""
    if convexity == Convexity.QUADRATIC_SC:
        return stability_bound(arch, convexity, eta, M, K, N, d)
    return stability_bound(arch, convexity, eta, M, K, N, d) * K


def convexity_of(kind: ModelKind, strong_convexity: float) -> Convexity:
    if kind == ModelKind.QUADRATIC and strong_convexity > 0:
        return Convexity.QUADRATIC_SC
    return Convexity.NONCONVEX


# ── Reports ────────────────────────────────────────────


def f_gap(config: AnyRunConfig, dataset: Dataset, model: ObjectiveModel) -> tuple[float, bool]:
    """f(x₀) − f* at the run's own x₀, and whether f* is estimated."""
    x0 = model.initial_point(config.x0, make_streams(config.seed).init)
    f_star, approximate = model.optimal_value(dataset)
    return max(model.full_loss(x0, dataset) - f_star, 0.0), approximate


def theory_inputs(config: AnyRunConfig, dataset: Dataset, model: ObjectiveModel, gap: float) -> TheoryInputs:
    params = config.resolve(dataset.n, model.smoothness)
    return TheoryInputs(
        smoothness=model.smoothness,
        lipschitz=model.lipschitz,
        strong_convexity=model.strong_convexity,
        n_samples=dataset.n,
        q=params.q,
        batch=params.batch,
        iterations=config.iterations,
        workers=config.worker_count,
        max_delay=config.max_delay,
        dim=model.dim,
        eta=params.eta,
        f_gap=gap,
    )


def theory_report(config: AnyRunConfig, dataset: Dataset, model: ObjectiveModel) -> dict:
    """Every closed-form quantity for one configuration, JSON-ready."""
    gap, gap_approximate = f_gap(config, dataset, model)
    inputs = theory_inputs(config, dataset, model, gap)
    arch = Architecture(config.arch)
    convexity = convexity_of(model.kind, model.strong_convexity)
    bound, kind = predicted_bound(inputs, arch)
    stability_args = (arch, convexity, inputs.eta, inputs.lipschitz, inputs.iterations, inputs.n_samples, inputs.dim)
    K, q, N, batch = inputs.iterations, inputs.q, inputs.n_samples, inputs.batch
    if model.approximate_constants:
        logger.warning("constants for the %s model are empirical; bounds are advisory", model.kind.value)
    report = {
        "arch": arch.value,
        "model": model.kind.value,
        "L": inputs.smoothness,
        "M": inputs.lipschitz,
        "mu": inputs.strong_convexity,
        "N": N,
        "d": inputs.dim,
        "P": inputs.workers,
        "delta": inputs.max_delay,
        "K": K,
        "q": q,
        "batch": batch,
        "eta": inputs.eta,
        "f_gap": gap,
        "f_gap_approximate": gap_approximate,
        "constants_approximate": model.approximate_constants,
        "beta1": beta1(inputs, arch),
        "beta1_dm": beta1_dm(inputs),
        "beta1_sm": beta1_sm(inputs),
        "predicted_bound": bound,
        "predicted_bound_kind": kind,
        "sfo": {algorithm.value: sfo_for_algorithm(algorithm, K, q, N, batch) for algorithm in Algorithm},
        "convexity": convexity.value,
        "stability_bound": stability_bound(*stability_args),
        "stability_bound_statement_form": stability_bound_statement_form(*stability_args),
        "iterate_stability_bound": stability_bound(*stability_args) / inputs.lipschitz,
    }
    if config.eps is not None:
        report["epsilon"] = epsilon_report(inputs, config.eps, arch)
    return report
