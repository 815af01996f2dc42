"""SMS-EGO style Bayesian optimization with one Gaussian process per objective."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .optimizers import FitnessOracle, OptimizationResult, _result
from .pareto import hypervolume_contributions, pareto_front, reference_point
from .space import Configuration, ParameterSpace, sample_uniform
from .surrogate import make_rng

JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class GPHyperparams:
    length_scale: float | Sequence[float] = 0.3
    signal_variance: float = 1.0
    noise_variance: float = 0.1


def matern52(a: np.ndarray, b: np.ndarray, length_scale, signal_variance: float) -> np.ndarray:
    a = np.atleast_2d(a) / length_scale
    b = np.atleast_2d(b) / length_scale
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    r = np.sqrt(np.maximum(d2, 0.0))
    s5r = np.sqrt(5.0) * r
    return signal_variance * (1.0 + s5r + 5.0 * d2 / 3.0) * np.exp(-s5r)


@dataclass
class GPModel:
    inputs: np.ndarray
    targets: np.ndarray  # as given, not standardized
    hyperparams: GPHyperparams
    y_mean: float
    y_scale: float
    chol: tuple = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0


def gp_fit(inputs, targets, hyperparams: GPHyperparams | None = None,
           standardize: bool = True) -> GPModel:
    """Condition a zero-mean Matérn-5/2 GP on (standardized) targets.

    Hyperparameters are fixed and refer to the standardized scale. If the
    regularized kernel matrix is not positive definite, jitter is added in
    steps up to 1e-6 before giving up.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if len(y) == 0 or len(X) != len(y):
        raise ValueError("need at least one training point and matching targets")
    hp = hyperparams or GPHyperparams()
    if standardize:
        y_mean = float(y.mean())
        y_scale = float(y.std()) if y.std() > 0 else 1.0
    else:
        y_mean, y_scale = 0.0, 1.0
    z = (y - y_mean) / y_scale
    K = matern52(X, X, hp.length_scale, hp.signal_variance)
    K[np.diag_indices_from(K)] += hp.noise_variance
    for jitter in JITTERS:
        try:
            chol = cho_factor(K + jitter * np.eye(len(K)), lower=True)
            break
        except LinAlgError:
            continue
    else:
        raise LinAlgError("kernel matrix is not positive definite even with jitter 1e-6")
    alpha = cho_solve(chol, z)
    return GPModel(X, y, hp, y_mean, y_scale, chol, alpha, jitter)


def gp_predict(model: GPModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation at one or more points."""
    Xs = np.atleast_2d(np.asarray(x, dtype=float))
    hp = model.hyperparams
    Ks = matern52(Xs, model.inputs, hp.length_scale, hp.signal_variance)
    mean = Ks @ model.alpha
    L = model.chol[0]
    v = solve_triangular(L, Ks.T, lower=True)
    var = np.maximum(hp.signal_variance - (v * v).sum(axis=0), 0.0)
    return model.y_mean + model.y_scale * mean, model.y_scale * np.sqrt(var)


def default_hyperparams(n_dims: int) -> GPHyperparams:
    # Targets are standardized, so their variance is 1 by construction.
    return GPHyperparams(length_scale=0.3, signal_variance=1.0, noise_variance=0.1)


@dataclass(frozen=True)
class Proposal:
    candidate: Configuration
    mean: tuple[float, float]
    std: tuple[float, float]
    optimistic: tuple[float, float]
    score: float


def sms_ego_scores(optimistic, front, ref) -> np.ndarray:
    """Hypervolume contribution of each optimistic point, or a penalty.

    Points that add no hypervolume get minus their smallest normalized excess
    over a front member, so the least dominated of them ranks highest.
    """
    opt = np.asarray(optimistic, dtype=float).reshape(-1, 2)
    f = np.asarray([p for p in front], dtype=float).reshape(-1, 2)
    gain = hypervolume_contributions(f, opt, ref)
    scale = np.asarray(ref, dtype=float) - f.min(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    excess = (np.clip(opt[:, None, :] - f[None, :, :], 0.0, None) / scale).sum(axis=-1)
    penalty = -excess.min(axis=1)
    return np.where(gain > 0, gain, penalty)


def sms_ego_propose(models: Sequence[GPModel], space: ParameterSpace, front, ref,
                    candidate_pool_size: int = 1000, gain: float = 1.0,
                    seed=None) -> Proposal:
    """Pick the best of a uniform candidate pool by optimistic hypervolume gain."""
    rng = make_rng(seed)
    pool = [sample_uniform(space, rng) for _ in range(candidate_pool_size)]
    U = space.normalize(pool)
    means, stds = zip(*(gp_predict(m, U) for m in models))
    mean = np.column_stack(means)
    std = np.column_stack(stds)
    optimistic = mean - gain * std
    scores = sms_ego_scores(optimistic, front, ref)
    best = int(np.argmax(scores))
    return Proposal(pool[best], tuple(mean[best]), tuple(std[best]),
                    tuple(optimistic[best]), float(scores[best]))


def bogp_optimize(space: ParameterSpace, oracle: FitnessOracle, budget: int,
                  init_design_size: int = 10, seed=0, candidate_pool_size: int = 1000,
                  gain: float = 1.0) -> OptimizationResult:
    """Uniform initial design, then fit two GPs / propose / evaluate until the budget."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    t0 = time.perf_counter()
    start = len(oracle.log)
    rng = make_rng(seed)
    for _ in range(min(init_design_size, budget)):
        oracle(sample_uniform(space, rng))
    gp_log = []
    iteration = 0
    while len(oracle.log) - start < budget:
        history = oracle.log[start:]
        X = space.normalize([e.config for e in history])
        Y = np.array([e.objectives for e in history], dtype=float)
        hp = default_hyperparams(len(space))
        models = [gp_fit(X, Y[:, j], hp) for j in range(2)]
        ref = reference_point(Y)
        front = pareto_front([tuple(y) for y in Y])
        proposal = sms_ego_propose(models, space, front, ref, candidate_pool_size, gain, rng)
        gp_log.append({
            "iteration": iteration,
            "length_scale": hp.length_scale,
            "signal_variance": hp.signal_variance,
            "noise_variance": hp.noise_variance,
            "target_scale": [m.y_scale for m in models],
            "jitter": [m.jitter for m in models],
            "score": proposal.score,
        })
        oracle(proposal.candidate)
        iteration += 1
    return _result("bogp", oracle, start, t0, gp_log=gp_log)
