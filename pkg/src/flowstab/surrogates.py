"""Response surfaces for the rightmost eigenvalue over the random inputs.

Three surrogate families share one trained-on-scaled-data convention:
targets are standardized to zero mean and unit deviation over the design
set before fitting, predictions are mapped back afterwards.

* stochastic collocation: discrete projection of the samples onto an
  orthonormal chaos basis using sparse-grid weights;
* Gaussian process regression: constant-mean kriging with the squared
  exponential correlation ``exp(-0.5 |dxi|^2 / sigma_l)``, the scale
  ``sigma_l`` picked by profile likelihood;
* shallow network: one tanh layer of 20 units trained by
  Levenberg-Marquardt with evidence-based (Bayesian) regularization.

Surrogates are immutable after training and evaluation is pure, so
instances can be shared freely across worker processes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from .errors import TrainingError
from .gpc import GpcBasis
from .quadrature import SparseGrid

_JITTER_BASE = 1e-10
_JITTER_CAP = 1e-6
_LOG_BRACKET = (math.log(1e-2), math.log(1e2))
_SCAN_POINTS = 64

_MU0 = 0.005          # LM damping start
_MU_DEC = 0.1
_MU_INC = 10.0
_MU_MAX = 1e10
_GRAD_TOL = 1e-7
_MAX_ITERS = 1000
_HYPER_CAP = 1e10     # keeps alpha/beta finite when a fit becomes exact


@dataclass(frozen=True)
class Scaler:
    """Affine target standardization; ``sigma == 0`` means disabled."""

    mu: float
    sigma: float

    @classmethod
    def fit(cls, targets: np.ndarray) -> "Scaler":
        mu = float(np.mean(targets))
        sigma = float(np.std(targets, ddof=1)) if targets.size > 1 else 0.0
        return cls(mu, sigma)

    @property
    def factor(self) -> float:
        return self.sigma if self.sigma > 0.0 else 1.0

    def scale(self, values):
        return (np.asarray(values, dtype=float) - self.mu) / self.factor

    def descale(self, values):
        return np.asarray(values, dtype=float) * self.factor + self.mu


@dataclass(frozen=True)
class TrainingSet:
    """Design inputs with eigenvalue targets and their standardization."""

    inputs: np.ndarray            # (n, m)
    targets: np.ndarray           # (n,) real channel
    scaler: Scaler
    weights: np.ndarray | None = None   # source quadrature weights, if any

    @classmethod
    def from_samples(cls, inputs, targets, weights=None) -> "TrainingSet":
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        targets = np.asarray(targets, dtype=float).ravel()
        if inputs.shape[0] != targets.size:
            raise ValueError("inputs and targets disagree on sample count")
        if targets.size < 2:
            raise ValueError("need at least two samples")
        w = None if weights is None else np.asarray(weights, dtype=float)
        return cls(inputs, targets, Scaler.fit(targets), w)

    @property
    def n(self) -> int:
        return self.targets.size

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def scaled_targets(self) -> np.ndarray:
        return self.scaler.scale(self.targets)

    def subsample(self, stride: int) -> "TrainingSet":
        """Every ``stride``-th sample in index order, rescaled on the subset."""
        if stride < 1:
            raise ValueError("stride must be a positive integer")
        if stride == 1:
            return self
        return TrainingSet.from_samples(self.inputs[::stride],
                                        self.targets[::stride])


def stride_for_fraction(n: int, fraction: float) -> int:
    """Stride whose every-k-th selection keeps roughly ``fraction`` of ``n``."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    return max(1, round(1.0 / fraction))


# ---------------------------------------------------------------- collocation

@dataclass(frozen=True)
class ScSurrogate:
    """Chaos expansion fitted by discrete projection on a sparse grid."""

    basis: GpcBasis
    coeffs: np.ndarray                 # (n_terms,) real part
    imag_coeffs: np.ndarray | None = None

    def evaluate(self, points) -> np.ndarray:
        return self.basis.evaluate(points) @ self.coeffs

    def evaluate_imag(self, points) -> np.ndarray:
        if self.imag_coeffs is None:
            raise ValueError("surrogate tracks no imaginary channel")
        return self.basis.evaluate(points) @ self.imag_coeffs

    @property
    def mean(self) -> float:
        """E[surrogate]; the constant basis function carries the mean."""
        return float(self.coeffs[0])

    @property
    def variance(self) -> float:
        return float(np.sum(self.coeffs[1:] ** 2))


def sc_train(grid: SparseGrid, targets, degree: int) -> ScSurrogate:
    """Project node samples onto the total-degree basis with grid weights.

    Complex targets get an imaginary coefficient channel alongside the
    real one; evaluation of the surrogate stays real in either case.
    """
    targets = np.asarray(targets).ravel()
    if targets.size != grid.nodes.shape[0]:
        raise ValueError(
            f"{targets.size} targets for {grid.nodes.shape[0]} grid nodes")
    basis = GpcBasis.total_degree(grid.family, grid.dim, degree)
    table = basis.evaluate(grid.nodes)          # (n_q, n_terms)
    weighted = grid.weights[:, None] * table
    coeffs = weighted.T @ targets.real
    imag = weighted.T @ targets.imag if np.iscomplexobj(targets) else None
    return ScSurrogate(basis, coeffs, imag)


# ------------------------------------------------------------------- kriging

@dataclass(frozen=True)
class GpSurrogate:
    """Constant-mean Gaussian process conditioned on the design set.

    All internal state lives in scaled target units; ``evaluate`` and
    ``variance`` descale on the way out.
    """

    inputs: np.ndarray        # (n, m)
    scaler: Scaler
    sigma_l: float
    mu_hat: float             # scaled units
    sigma_f2: float           # residual quadratic form, scaled units
    alpha: np.ndarray         # C_d^{-1} (y - mu_hat)
    cinv_h: np.ndarray        # C_d^{-1} 1
    hch: float                # 1^T C_d^{-1} 1
    cho: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def _cross(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = np.sum((pts[:, None, :] - self.inputs[None, :, :]) ** 2, axis=2)
        return np.exp(-0.5 * d2 / self.sigma_l)

    def evaluate(self, points) -> np.ndarray:
        return self.scaler.descale(self.mu_hat + self._cross(points) @ self.alpha)

    def variance(self, points) -> np.ndarray:
        """Posterior variance of the t-predictive, in target units squared."""
        dof = self.n - 1 - 2
        if dof <= 0:
            raise TrainingError(
                f"posterior variance needs at least 4 design points, have {self.n}")
        r = self._cross(points)
        ctr = linalg.cho_solve((self.cho, True), r.T)
        q = 1.0 - r @ self.cinv_h
        raw = 1.0 - np.sum(r * ctr.T, axis=1) + q**2 / self.hch
        out = self.sigma_f2 / dof * np.maximum(raw, 0.0)
        return out * self.scaler.factor**2


def _chol_jittered(c: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor with an escalating diagonal nudge."""
    jitter = _JITTER_BASE * float(np.trace(c)) / c.shape[0]
    while True:
        try:
            return linalg.cholesky(c + jitter * np.eye(c.shape[0]), lower=True), jitter
        except linalg.LinAlgError:
            jitter *= 10.0
            if jitter > _JITTER_CAP:
                raise TrainingError(
                    "design correlation matrix stayed indefinite at the jitter cap")


def _gp_profile(d2: np.ndarray, y: np.ndarray, log_sl: float):
    """Profiled log-likelihood pieces for one correlation length."""
    n = y.size
    c = np.exp(-0.5 * d2 / math.exp(log_sl))
    cho, jitter = _chol_jittered(c)
    w = linalg.cho_solve((cho, True), y)
    v = linalg.cho_solve((cho, True), np.ones(n))
    hch = float(v.sum())
    mu = float(y @ v) / hch
    resid = y - mu
    quad = float(resid @ (w - mu * v))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho))))
    ll = -0.5 * (n - 1) * math.log(max(quad, 1e-300)) \
        - 0.5 * logdet - 0.5 * math.log(hch)
    return ll, (cho, jitter, v, hch, mu, resid, quad, w)


def gp_train(design: TrainingSet, sigma_l: float | None = None) -> GpSurrogate:
    """Fit the kriging surrogate, optimizing ``sigma_l`` unless given.

    The profile likelihood is swept on a log grid over [1e-2, 1e2] and
    the three best local peaks are refined by golden-section; a supplied
    ``sigma_l`` skips the search (useful for closed-form checks).
    """
    x = design.inputs
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    if np.min(d2 + np.eye(design.n)) <= 0.0:
        raise TrainingError("design points must be pairwise distinct")
    y = design.scaled_targets

    if sigma_l is None:
        if np.ptp(design.targets) == 0.0:
            sigma_l = 1.0   # constant targets: any length reproduces them
        else:
            sigma_l = math.exp(_optimize_length(d2, y))
    ll, (cho, jitter, v, hch, mu, resid, quad, w) = \
        _gp_profile(d2, y, math.log(sigma_l))
    return GpSurrogate(x, design.scaler, float(sigma_l), mu, quad,
                       w - mu * v, v, hch, cho, jitter)


def _optimize_length(d2: np.ndarray, y: np.ndarray) -> float:
    lo, hi = _LOG_BRACKET
    grid = np.linspace(lo, hi, _SCAN_POINTS)
    vals = np.array([_gp_profile(d2, y, t)[0] for t in grid])
    peaks = [i for i in range(_SCAN_POINTS)
             if (i == 0 or vals[i] >= vals[i - 1])
             and (i == _SCAN_POINTS - 1 or vals[i] >= vals[i + 1])]
    peaks.sort(key=lambda i: -vals[i])
    best_t, best_v = grid[peaks[0]], vals[peaks[0]]
    for i in peaks[:3]:
        neg = lambda t: -_gp_profile(d2, y, float(t))[0]
        strict = (0 < i < _SCAN_POINTS - 1
                  and vals[i] > vals[i - 1] and vals[i] > vals[i + 1])
        if strict:
            res = optimize.minimize_scalar(
                neg, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                method="golden", options={"xtol": 1e-3})
        else:
            # scan edge or likelihood plateau: no strict bracket exists
            a = grid[max(i - 1, 0)]
            b = grid[min(i + 1, _SCAN_POINTS - 1)]
            res = optimize.minimize_scalar(neg, bounds=(a, b),
                                           method="bounded",
                                           options={"xatol": 1e-3})
        if -res.fun > best_v:
            best_t, best_v = float(res.x), -res.fun
    return float(np.clip(best_t, lo, hi))


# ------------------------------------------------------------ shallow network

_HIDDEN = 20


@dataclass(frozen=True)
class NnSurrogate:
    """One tanh hidden layer; inputs mapped to [-1, 1], outputs descaled."""

    w1: np.ndarray            # (hidden, m)
    b1: np.ndarray            # (hidden,)
    w2: np.ndarray            # (hidden,)
    b2: float
    in_lo: np.ndarray         # (m,) training input range
    in_hi: np.ndarray
    scaler: Scaler
    seed: int
    info: dict = field(default_factory=dict, repr=False)

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1

    def _map_inputs(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        span = np.where(self.in_hi > self.in_lo, self.in_hi - self.in_lo, 1.0)
        return 2.0 * (pts - self.in_lo) / span - 1.0

    def evaluate(self, points) -> np.ndarray:
        h = np.tanh(self._map_inputs(points) @ self.w1.T + self.b1)
        return self.scaler.descale(h @ self.w2 + self.b2)


def _nn_init(rng: np.random.Generator, m: int) -> np.ndarray:
    """Nguyen-Widrow start: unit rows scaled to cover the input box."""
    mag = 0.7 * _HIDDEN ** (1.0 / m)
    w1 = rng.uniform(-1.0, 1.0, size=(_HIDDEN, m))
    w1 *= mag / np.linalg.norm(w1, axis=1, keepdims=True)
    b1 = mag * np.linspace(-1.0, 1.0, _HIDDEN) * np.sign(w1[:, 0])
    w2 = rng.uniform(-0.5, 0.5, size=_HIDDEN)
    b2 = np.zeros(1)
    return np.concatenate([w1.ravel(), b1, w2, b2])


def _nn_unpack(theta: np.ndarray, m: int):
    k = _HIDDEN * m
    w1 = theta[:k].reshape(_HIDDEN, m)
    b1 = theta[k:k + _HIDDEN]
    w2 = theta[k + _HIDDEN:k + 2 * _HIDDEN]
    return w1, b1, w2, theta[-1]


def _nn_forward(theta: np.ndarray, x: np.ndarray):
    w1, b1, w2, b2 = _nn_unpack(theta, x.shape[1])
    h = np.tanh(x @ w1.T + b1)
    return h @ w2 + b2, h


def _nn_jacobian(theta: np.ndarray, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """d(output)/d(theta) for every sample; columns follow _nn_unpack order."""
    _, _, w2, _ = _nn_unpack(theta, x.shape[1])
    gate = (1.0 - h**2) * w2            # (n, hidden)
    jw1 = gate[:, :, None] * x[:, None, :]
    return np.concatenate([
        jw1.reshape(x.shape[0], -1), gate, h,
        np.ones((x.shape[0], 1)),
    ], axis=1)


def _split_indices(rng: np.random.Generator, n: int):
    """80/10/10 split by shuffled index; remainders stay in training."""
    perm = rng.permutation(n)
    n_test = round(0.1 * n)
    n_val = round(0.1 * n)
    return perm[n_test + n_val:], perm[n_test:n_test + n_val], perm[:n_test]


def nn_train(design: TrainingSet, seed: int = 0) -> NnSurrogate:
    """Levenberg-Marquardt with evidence-updated quadratic regularization.

    The optimized objective is ``beta * SSE + alpha * |theta|^2`` with
    (alpha, beta) re-estimated from the effective number of parameters
    after every accepted step.  Validation and test errors are recorded
    for the returned network but never gate the iteration.
    """
    if design.n < 4:
        raise TrainingError("network training needs at least 4 samples")
    rng = np.random.default_rng(seed)
    lo = design.inputs.min(axis=0)
    hi = design.inputs.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    x_all = 2.0 * (design.inputs - lo) / span - 1.0
    y_all = design.scaled_targets
    idx_train, idx_val, idx_test = _split_indices(rng, design.n)
    x, y = x_all[idx_train], y_all[idx_train]
    n, m = x.shape

    theta = _nn_init(rng, m)
    n_par = theta.size
    alpha, beta = 0.0, 1.0
    mu = _MU0
    out, h = _nn_forward(theta, x)
    resid = out - y
    e_data = float(resid @ resid)
    e_weight = float(theta @ theta)
    objective = beta * e_data + alpha * e_weight
    # best-so-far is compared under the *current* hyperparameters, since
    # the objective scale moves whenever (alpha, beta) are re-estimated
    best = (theta.copy(), e_data, e_weight)
    grad_norm = math.inf
    iters = 0

    for iters in range(1, _MAX_ITERS + 1):
        jac = _nn_jacobian(theta, x, h)
        grad = 2.0 * beta * (jac.T @ resid) + 2.0 * alpha * theta
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < _GRAD_TOL:
            break
        hess = 2.0 * beta * (jac.T @ jac) + 2.0 * alpha * np.eye(n_par)
        accepted = False
        while mu <= _MU_MAX:
            try:
                step = np.linalg.solve(hess + mu * np.eye(n_par), -grad)
            except np.linalg.LinAlgError:
                mu *= _MU_INC
                continue
            trial = theta + step
            t_out, t_h = _nn_forward(trial, x)
            t_resid = t_out - y
            t_ed = float(t_resid @ t_resid)
            t_ew = float(trial @ trial)
            t_obj = beta * t_ed + alpha * t_ew
            if not math.isfinite(t_obj):
                raise TrainingError("network objective became non-finite")
            if t_obj < objective:
                theta, out, h, resid = trial, t_out, t_h, t_resid
                e_data, e_weight, objective = t_ed, t_ew, t_obj
                mu = max(mu * _MU_DEC, 1e-20)
                accepted = True
                break
            mu *= _MU_INC
        if not accepted:
            break       # damping budget exhausted without progress
        # evidence update on the regularized curvature at the new point
        jac = _nn_jacobian(theta, x, h)
        hess = 2.0 * beta * (jac.T @ jac) + 2.0 * alpha * np.eye(n_par)
        gamma = n_par - 2.0 * alpha * float(np.trace(np.linalg.inv(hess)))
        gamma = min(max(gamma, 0.0), float(n_par))
        alpha = min(gamma / max(2.0 * e_weight, 1e-300), _HYPER_CAP)
        beta = min(max(n - gamma, 1e-10) / max(2.0 * e_data, 1e-300), _HYPER_CAP)
        objective = beta * e_data + alpha * e_weight
        if objective < beta * best[1] + alpha * best[2]:
            best = (theta.copy(), e_data, e_weight)

    if objective < beta * best[1] + alpha * best[2]:
        best = (theta.copy(), e_data, e_weight)
    best_theta = best[0]
    w1, b1, w2, b2 = _nn_unpack(best_theta, m)

    def split_mse(idx):
        if idx.size == 0:
            return None
        pred, _ = _nn_forward(best_theta, x_all[idx])
        return float(np.mean((pred - y_all[idx]) ** 2))

    info = {
        "iterations": iters,
        "gradient": grad_norm,
        "alpha": alpha,
        "beta": beta,
        "mse_train": split_mse(idx_train),
        "mse_val": split_mse(idx_val),
        "mse_test": split_mse(idx_test),
        "split": [int(idx_train.size), int(idx_val.size), int(idx_test.size)],
    }
    return NnSurrogate(w1, b1, w2, float(b2), lo, hi, design.scaler,
                       int(seed), info)


# ------------------------------------------------------------- serialization

_FORMAT = "flowstab-surrogate"
_VERSION = 1


def save_surrogate(surrogate, path, provenance: dict | None = None) -> None:
    """Write a surrogate as a versioned JSON document."""
    doc = {"format": _FORMAT, "version": _VERSION,
           "provenance": provenance or {}}
    if isinstance(surrogate, ScSurrogate):
        doc["kind"] = "sc"
        doc["params"] = {
            "family": surrogate.basis.family,
            "dim": surrogate.basis.dim,
            "degree": surrogate.basis.degree,
            "coeffs": surrogate.coeffs.tolist(),
            "imag_coeffs": None if surrogate.imag_coeffs is None
            else surrogate.imag_coeffs.tolist(),
        }
    elif isinstance(surrogate, GpSurrogate):
        doc["kind"] = "gp"
        doc["scaler"] = [surrogate.scaler.mu, surrogate.scaler.sigma]
        doc["params"] = {
            "inputs": surrogate.inputs.tolist(),
            "sigma_l": surrogate.sigma_l,
            "mu_hat": surrogate.mu_hat,
            "sigma_f2": surrogate.sigma_f2,
            "alpha": surrogate.alpha.tolist(),
            "jitter": surrogate.jitter,
        }
    elif isinstance(surrogate, NnSurrogate):
        doc["kind"] = "nn"
        doc["scaler"] = [surrogate.scaler.mu, surrogate.scaler.sigma]
        doc["params"] = {
            "w1": surrogate.w1.tolist(),
            "b1": surrogate.b1.tolist(),
            "w2": surrogate.w2.tolist(),
            "b2": surrogate.b2,
            "in_lo": surrogate.in_lo.tolist(),
            "in_hi": surrogate.in_hi.tolist(),
            "seed": surrogate.seed,
            "info": surrogate.info,
        }
    else:
        raise TypeError(f"cannot serialize {type(surrogate).__name__}")
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_surrogate(path):
    """Rebuild a surrogate saved by ``save_surrogate``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != _FORMAT or doc.get("version") != _VERSION:
        raise ValueError(f"unrecognized surrogate document in {path}")
    params = doc["params"]
    if doc["kind"] == "sc":
        basis = GpcBasis.total_degree(params["family"], params["dim"],
                                      params["degree"])
        imag = params["imag_coeffs"]
        return ScSurrogate(basis, np.array(params["coeffs"]),
                           None if imag is None else np.array(imag))
    scaler = Scaler(*doc["scaler"])
    if doc["kind"] == "gp":
        inputs = np.array(params["inputs"])
        alpha = np.array(params["alpha"])
        d2 = np.sum((inputs[:, None, :] - inputs[None, :, :]) ** 2, axis=2)
        c = np.exp(-0.5 * d2 / params["sigma_l"])
        cho = linalg.cholesky(c + params["jitter"] * np.eye(len(inputs)),
                              lower=True)
        v = linalg.cho_solve((cho, True), np.ones(len(inputs)))
        return GpSurrogate(inputs, scaler, params["sigma_l"],
                           params["mu_hat"], params["sigma_f2"], alpha,
                           v, float(v.sum()), cho, params["jitter"])
    if doc["kind"] == "nn":
        return NnSurrogate(np.array(params["w1"]), np.array(params["b1"]),
                           np.array(params["w2"]), params["b2"],
                           np.array(params["in_lo"]), np.array(params["in_hi"]),
                           scaler, params["seed"], params["info"])
    raise ValueError(f"unknown surrogate kind {doc['kind']!r}")


def evaluate_csv(surrogate, in_path, out_path) -> int:
    """Batch-evaluate input rows from CSV, write one value per row.

    A non-numeric first line is treated as a header.  Returns the number
    of evaluated rows.
    """
    raw = Path(in_path).read_text().strip().splitlines()
    start = 0
    try:
        [float(tok) for tok in raw[0].split(",")]
    except ValueError:
        start = 1
    points = np.array([[float(tok) for tok in line.split(",")]
                       for line in raw[start:]])
    values = surrogate.evaluate(points)
    lines = ["lambda_re"] + [repr(float(v)) for v in values]
    Path(out_path).write_text("\n".join(lines) + "\n")
    return len(values)
