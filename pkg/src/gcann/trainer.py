"""Maximum-likelihood training with projected ADAM, the two-phase alpha
schedule, alpha sweeps and the fewest-terms selection rule."""
from __future__ import annotations

import copy
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .data_pipeline import DEV, TRAIN, BiaxialDataset
from .energy_terms import FROZEN_INNER, N_TERMS, term_stress_integrals
from .objective import loss_and_grad, nll
from .stress_model import CovarianceMode, CovarianceParam, GaussianModel, realize_sigma

log = logging.getLogger(__name__)

# d = D_MAX * sigmoid(a) keeps Sigma_ii <= (1 - 1e-9)^2 < 1 for every finite a
D_MAX = 1.0 - 1e-9
SELECTION_MARGIN = 0.1
_TRIL = np.tril_indices(N_TERMS)


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, snapshot: GaussianModel, reason: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {reason}")
        self.epoch = epoch
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs_pretrain: int = 2000
    epochs_regularized: int = 2000
    batch_size: int = 1000
    alpha: float = 0.0
    mode: CovarianceMode = CovarianceMode.CORRELATED
    seed: int = 0
    zero_threshold: float = 1e-4
    weight_scale: float | None = None  # kPa per unit of the optimized mean; None = auto
    init_d: float = 0.2
    log_every: int = 0

    def __post_init__(self):
        self.mode = CovarianceMode.parse(self.mode)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if min(self.epochs_pretrain, self.epochs_regularized, self.batch_size) < 0 or self.batch_size == 0:
            raise ValueError("epoch and batch counts must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclass
class FitResult:
    model: GaussianModel
    train_nll: float
    dev_nll: float
    n_active_terms: int
    alpha: float
    history: list[tuple[int, str, float, float]] = field(default_factory=list, repr=False)
    lambda_max: float = float("nan")
    seed: int = 0


class Adam:
    """ADAM with a projection applied after every step."""

    def __init__(self, size: int, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Parameterization:
    """Flat unconstrained-ish vector <-> GaussianModel.

    Layout: [w_mu / scale (14), w_star (14), logit d (14), tril(chol) (105)].
    Entries that the mode does not use are carried but never updated.
    """

    def __init__(self, mode: CovarianceMode, weight_scale: float):
        self.mode = mode
        self.scale = float(weight_scale)
        n = N_TERMS
        self.size = 3 * n + len(_TRIL[0])
        mask = np.ones(self.size, dtype=bool)
        mask[n:2 * n][FROZEN_INNER] = False
        if mode is CovarianceMode.DETERMINISTIC:
            mask[2 * n:] = False
        elif mode is CovarianceMode.INDEPENDENT:
            mask[3 * n:] = False
        self.trainable = mask

    def initial(self, rng: np.random.Generator, init_d: float) -> np.ndarray:
        n = N_TERMS
        x = np.zeros(self.size)
        x[:n] = rng.uniform(0.0, 1.0, n)
        w_star = rng.uniform(0.0, 1.0, n)
        w_star[FROZEN_INNER] = 1.0
        x[n:2 * n] = w_star
        x[2 * n:3 * n] = logit(init_d / D_MAX)
        x[3 * n:] = np.eye(n)[_TRIL]
        return x

    def from_model(self, model: GaussianModel) -> np.ndarray:
        n = N_TERMS
        x = np.zeros(self.size)
        x[:n] = model.w_mu / self.scale
        x[n:2 * n] = model.w_star
        d = np.clip(model.covariance.d, 1e-12, D_MAX * (1 - 1e-12))
        x[2 * n:3 * n] = logit(d / D_MAX)
        x[3 * n:] = np.tril(model.covariance.chol_rows)[_TRIL]
        return x

    def to_model(self, x: np.ndarray) -> GaussianModel:
        n = N_TERMS
        chol = np.zeros((n, n))
        chol[_TRIL] = x[3 * n:]
        d = D_MAX * expit(x[2 * n:3 * n])
        if self.mode is CovarianceMode.DETERMINISTIC:
            d = np.zeros(n)
        return GaussianModel(x[:n] * self.scale, x[n:2 * n], CovarianceParam(self.mode, d, chol))

    def project(self, x: np.ndarray) -> np.ndarray:
        x[:2 * N_TERMS] = np.maximum(x[:2 * N_TERMS], 0.0)
        return x

    def chain(self, x: np.ndarray, grads) -> np.ndarray:
        n = N_TERMS
        g = np.zeros(self.size)
        g[:n] = grads.w_mu * self.scale
        g[n:2 * n] = grads.w_star
        sig = expit(x[2 * n:3 * n])
        g[2 * n:3 * n] = grads.d * D_MAX * sig * (1 - sig)
        g[3 * n:] = grads.chol_rows[_TRIL]
        return np.where(self.trainable, g, 0.0)


def term_scales(model: GaussianModel, lambda_max: float) -> np.ndarray:
    """Stress integral of each term at unit mean weight."""
    return term_stress_integrals(model.w_star, lambda_max)[0]


def active_mask(model: GaussianModel, lambda_max: float, zero_threshold: float) -> np.ndarray:
    contribution = model.w_mu * np.abs(term_scales(model, lambda_max))
    top = contribution.max()
    if top <= 0:
        return np.zeros(N_TERMS, dtype=bool)
    return contribution > zero_threshold * top


def snap_zeros(model: GaussianModel, lambda_max: float, zero_threshold: float) -> GaussianModel:
    out = model.copy()
    out.w_mu[~active_mask(model, lambda_max, zero_threshold)] = 0.0
    return out


@dataclass
class _State:
    x: np.ndarray
    opt: Adam
    rng: np.random.Generator
    epoch: int = 0
    history: list = field(default_factory=list)


class Trainer:
    """Runs the optimization for one dataset and one configuration."""

    def __init__(self, config: TrainConfig, data: BiaxialDataset, step_hook=None, out=None):
        self.config = config
        self.data = data
        self.obs = data.observations(TRAIN)
        self.lambda_max = data.max_stretch(TRAIN)
        self.step_hook = step_hook
        self.out = out

    def _auto_scale(self, w_star: np.ndarray) -> float:
        """kPa per optimized unit so that the initial mean stress matches the data RMS."""
        h, _ = self.obs.unit_stresses(w_star)
        model_rms = np.sqrt(np.mean((0.5 * h.sum(axis=1)) ** 2))
        data_rms = np.sqrt(np.mean(self.obs.stress ** 2))
        if not (model_rms > 0 and data_rms > 0):
            return 1.0
        return float(data_rms / model_rms)

    def initial_state(self, model: GaussianModel | None = None) -> _State:
        rng = np.random.default_rng(self.config.seed)
        self.param = Parameterization(self.config.mode, 1.0)
        if model is None:
            x = self.param.initial(rng, self.config.init_d)
            scale = self.config.weight_scale or self._auto_scale(x[N_TERMS:2 * N_TERMS])
            self.param.scale = scale
        else:
            self.param.scale = self.config.weight_scale or max(float(model.w_mu.max()), 1.0)
            x = self.param.from_model(model)
        return _State(x=x, opt=Adam(self.param.size, self.config.learning_rate), rng=rng)

    def run(self, state: _State, epochs: int, alpha: float, phase: str) -> _State:
        n = len(self.obs)
        bs = min(self.config.batch_size, n)
        for _ in range(epochs):
            state.epoch += 1
            perm = state.rng.permutation(n)
            total = reg_total = 0.0
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                model = self.param.to_model(state.x)
                try:
                    value, reg, grads = loss_and_grad(model, self.obs.subset(idx), alpha, self.lambda_max)
                except (OverflowError, FloatingPointError) as exc:
                    raise TrainingDivergence(state.epoch, model, str(exc)) from None
                if not (math.isfinite(value) and math.isfinite(reg)):
                    raise TrainingDivergence(state.epoch, model)
                g = self.param.chain(state.x, grads)
                state.x = self.param.project(state.opt.step(state.x, g))
                if self.step_hook is not None:
                    self.step_hook(state.epoch, phase, self.param.to_model(state.x))
                total += value * len(idx)
                reg_total += reg * len(idx)
            record = (state.epoch, phase, total / n, reg_total / n)
            state.history.append(record)
            every = self.config.log_every
            if every and state.epoch % every == 0:
                line = f"epoch={record[0]} phase={phase} loss={record[2]:.6f} penalty={record[3]:.6f}"
                print(line, file=self.out or sys.stdout, flush=True)
        return state

    def pretrain(self, model: GaussianModel | None = None) -> _State:
        return self.run(self.initial_state(model), self.config.epochs_pretrain, 0.0, "pretrain")

    def finish(self, state: _State, alpha: float) -> FitResult:
        state = self.run(state, self.config.epochs_regularized, alpha, "regularized")
        model = snap_zeros(self.param.to_model(state.x), self.lambda_max, self.config.zero_threshold)
        dev = nll(model, self.data, DEV) if self.data.split_curves(DEV) else float("nan")
        return FitResult(
            model=model,
            train_nll=nll(model, self.data, TRAIN),
            dev_nll=dev,
            n_active_terms=int(np.count_nonzero(model.w_mu)),
            alpha=alpha,
            history=list(state.history),
            lambda_max=self.lambda_max,
            seed=self.config.seed,
        )


def fit(config: TrainConfig, data: BiaxialDataset, step_hook=None, init: GaussianModel | None = None) -> FitResult:
    trainer = Trainer(config, data, step_hook)
    return trainer.finish(trainer.pretrain(init), config.alpha)


def sweep(alphas, base: TrainConfig, data: BiaxialDataset, step_hook=None) -> list[FitResult]:
    """Pretrain once with alpha = 0, then branch one regularized run per alpha."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one alpha")
    trainer = Trainer(base, data, step_hook)
    shared = trainer.pretrain()
    results = []
    for alpha in alphas:
        results.append(trainer.finish(copy.deepcopy(shared), float(alpha)))
        log.info("alpha=%g terms=%d train=%.4f dev=%.4f", alpha, results[-1].n_active_terms,
                 results[-1].train_nll, results[-1].dev_nll)
    return results


def select(results: list[FitResult], margin: float = SELECTION_MARGIN) -> FitResult:
    """Fewest active terms among fits whose dev NLL is within ``margin`` of the best."""
    if not results:
        raise ValueError("no results to select from")
    best = min(r.dev_nll for r in results)
    eligible = [r for r in results if r.dev_nll <= best + margin]
    return min(eligible, key=lambda r: (r.n_active_terms, r.dev_nll, r.alpha))


def sigma_diagonal_ok(model: GaussianModel) -> bool:
    return bool(np.all(np.diag(realize_sigma(model.covariance)) <= 1 - 1e-9))
