"""Quadratic bias estimation: symmetric Gram-form network for matrix completion.

Entries of the cobias matrix are predicted as Q(x, x*) = psi(x) . psi(x*)
where psi is a small embedding network, so the predicted matrix over any
index set is a (scaled) Gram matrix: symmetric by construction and positive
semidefinite up to rounding. Each entry carries a single regression error,
unlike the direct path where per-coordinate bias errors multiply through the
outer product.

Training rows are the lower-triangle entry pairs (diagonal included) over
the observed indices, with targets built from bias-first empirical biases.
Targets are scaled by their standard deviation but deliberately not
centered: a mean shift would break the Gram/PSD structure of the output.
Training is full batch for determinism, with validation-based early
stopping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cobias import (
    CobiasDecomposition,
    PemseField,
    assemble,
    bias_outer_product,
    empirical_bias_vector,
    model_covariance,
    point_features,
)
from .ensemble import PredictiveSummary
from .pool import LabeledPool, StateGrid


@dataclass(frozen=True)
class QuadraticConfig:
    embedding_dim: int = 16
    hidden_sizes: tuple = (64, 64, 32)
    dropout: float = 0.1
    learning_rate: float = 3e-4
    adam_beta1: float = 0.999
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    weight_decay: float = 1e-5
    val_fraction: float = 0.15
    patience: int = 200
    max_epochs: int = 2000
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5


class _Adam:
    """Adam over a flat list of parameter arrays, updated in place."""

    def __init__(self, params, lr, beta1, beta2, eps):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g * g
            mhat = m / (1.0 - b1**self.t)
            vhat = v / (1.0 - b2**self.t)
            p[...] = p - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class GramEmbedding:
    """Embedding network with batch-normalized ReLU hidden layers and dropout.

    Hidden layer l computes dropout(relu(batchnorm(X @ W_l + b_l))); the
    output layer is linear into the embedding space. Prediction always runs
    in eval mode (running batch-norm statistics, no dropout), so the
    embedding is a deterministic function of the input and pair predictions
    are symmetric bit for bit.
    """

    def __init__(self, input_dim: int, config: QuadraticConfig, rng: np.random.Generator):
        self.config = config
        sizes = [input_dim, *config.hidden_sizes, config.embedding_dim]
        self.Ws = []
        self.bs = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.Ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.bs.append(np.zeros(fan_out))
        n_hidden = len(config.hidden_sizes)
        self.gammas = [np.ones(h) for h in config.hidden_sizes]
        self.betas = [np.zeros(h) for h in config.hidden_sizes]
        self.run_mean = [np.zeros(h) for h in config.hidden_sizes]
        self.run_var = [np.ones(h) for h in config.hidden_sizes]
        self.n_hidden = n_hidden
        self.feat_mean = np.zeros(input_dim)
        self.feat_std = np.ones(input_dim)
        self.target_scale = 1.0

    # -- parameter plumbing --------------------------------------------------

    def trainable(self):
        return [*self.Ws, *self.bs, *self.gammas, *self.betas]

    def snapshot(self):
        return [p.copy() for p in self.trainable()]

    def restore(self, snap):
        for p, s in zip(self.trainable(), snap):
            p[...] = s

    # -- forward / backward ---------------------------------------------------

    def make_masks(self, n_rows: int, rng: np.random.Generator):
        p = self.config.dropout
        if p <= 0.0:
            return [np.ones((n_rows, h)) for h in self.config.hidden_sizes]
        keep = 1.0 - p
        return [
            (rng.random((n_rows, h)) >= p).astype(float) / keep
            for h in self.config.hidden_sizes
        ]

    def _forward_train(self, X, masks):
        eps = self.config.bn_eps
        mom = self.config.bn_momentum
        cache = []
        A = X
        for l in range(self.n_hidden):
            H = A @ self.Ws[l] + self.bs[l]
            mu = H.mean(axis=0)
            var = H.var(axis=0)
            istd = 1.0 / np.sqrt(var + eps)
            Hhat = (H - mu) * istd
            Y = self.gammas[l] * Hhat + self.betas[l]
            R = np.maximum(Y, 0.0)
            out = R * masks[l]
            self.run_mean[l][...] = (1.0 - mom) * self.run_mean[l] + mom * mu
            self.run_var[l][...] = (1.0 - mom) * self.run_var[l] + mom * var
            cache.append((A, Hhat, istd, Y))
            A = out
        E = A @ self.Ws[-1] + self.bs[-1]
        cache.append(A)
        return E, cache

    def _backward(self, dE, cache, masks):
        A_last = cache[-1]
        dWs = [None] * len(self.Ws)
        dbs = [None] * len(self.bs)
        dgammas = [None] * self.n_hidden
        dbetas = [None] * self.n_hidden

        dWs[-1] = A_last.T @ dE
        dbs[-1] = dE.sum(axis=0)
        dA = dE @ self.Ws[-1].T
        for l in range(self.n_hidden - 1, -1, -1):
            A_in, Hhat, istd, Y = cache[l]
            dR = dA * masks[l]
            dY = np.where(Y > 0.0, dR, 0.0)
            dgammas[l] = (dY * Hhat).sum(axis=0)
            dbetas[l] = dY.sum(axis=0)
            dHhat = dY * self.gammas[l]
            B = Hhat.shape[0]
            dH = (istd / B) * (
                B * dHhat - dHhat.sum(axis=0) - Hhat * (dHhat * Hhat).sum(axis=0)
            )
            dWs[l] = A_in.T @ dH
            dbs[l] = dH.sum(axis=0)
            dA = dH @ self.Ws[l].T
        return [*dWs, *dbs, *dgammas, *dbetas]

    def loss_and_grads(self, F_left, F_right, targets, masks):
        """Pair-prediction MSE and gradients; one concatenated forward pass so
        left and right rows share batch statistics."""
        n = F_left.shape[0]
        X = np.concatenate([F_left, F_right], axis=0)
        E, cache = self._forward_train(X, masks)
        Ei, Ej = E[:n], E[n:]
        pred = np.sum(Ei * Ej, axis=1)
        r = pred - targets
        loss = float(np.mean(r * r))
        scale = 2.0 / n
        dE = np.concatenate([scale * r[:, None] * Ej, scale * r[:, None] * Ei], axis=0)
        grads = self._backward(dE, cache, masks)
        return loss, grads

    def _forward_eval(self, X):
        eps = self.config.bn_eps
        A = X
        for l in range(self.n_hidden):
            H = A @ self.Ws[l] + self.bs[l]
            Hhat = (H - self.run_mean[l]) / np.sqrt(self.run_var[l] + eps)
            A = np.maximum(self.gammas[l] * Hhat + self.betas[l], 0.0)
        return A @ self.Ws[-1] + self.bs[-1]

    # -- public surface --------------------------------------------------------

    def embed(self, features) -> np.ndarray:
        """Deterministic eval-mode embeddings of raw feature rows."""
        X = (np.atleast_2d(features) - self.feat_mean) / self.feat_std
        return self._forward_eval(X)

    def predict_pair(self, feat_a, feat_b) -> float:
        pa = self.embed(feat_a)[0]
        pb = self.embed(feat_b)[0]
        return self.target_scale * float(np.dot(pa, pb))

    def predict_matrix(self, features) -> np.ndarray:
        psi = self.embed(features)
        G = self.target_scale * (psi @ psi.T)
        return 0.5 * (G + G.T)

    def fit_pairs(self, features, left_idx, right_idx, targets, seed: int):
        """Train on entry targets for the given index pairs into features.

        Splits the pairs into train/validation, early-stops on validation
        loss, and restores the best-validation parameters. Deterministic
        given the seed.
        """
        cfg = self.config
        features = np.asarray(features, dtype=float)
        left_idx = np.asarray(left_idx, dtype=int)
        right_idx = np.asarray(right_idx, dtype=int)
        targets = np.asarray(targets, dtype=float)
        n_pairs = targets.shape[0]
        if n_pairs < 1:
            raise ValueError("no training pairs")

        self.feat_mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.feat_std = np.where(std > 0.0, std, 1.0)
        F = (features - self.feat_mean) / self.feat_std

        rng = np.random.default_rng(np.random.SeedSequence(seed))
        perm = rng.permutation(n_pairs)
        n_val = int(round(cfg.val_fraction * n_pairs)) if n_pairs >= 4 else 0
        n_val = min(max(n_val, 1 if n_pairs >= 4 else 0), n_pairs - 1)
        val, train = perm[:n_val], perm[n_val:]

        t_scale = float(targets[train].std())
        self.target_scale = t_scale if t_scale > 0.0 else 1.0
        q = targets / self.target_scale

        Fl, Fr, qt = F[left_idx[train]], F[right_idx[train]], q[train]
        if n_val > 0:
            Vl, Vr, qv = F[left_idx[val]], F[right_idx[val]], q[val]

        params = self.trainable()
        opt = _Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        n_weights = len(self.Ws)

        best = np.inf
        best_snap = self.snapshot()
        wait = 0
        for _ in range(cfg.max_epochs):
            masks = self.make_masks(2 * Fl.shape[0], rng)
            _, grads = self.loss_and_grads(Fl, Fr, qt, masks)
            if cfg.weight_decay > 0.0:
                for i in range(n_weights):
                    grads[i] = grads[i] + cfg.weight_decay * params[i]
            opt.step(grads)

            if n_val > 0:
                Ev_l = self._forward_eval(Vl)
                Ev_r = self._forward_eval(Vr)
                monitor = float(np.mean((np.sum(Ev_l * Ev_r, axis=1) - qv) ** 2))
            else:
                El = self._forward_eval(Fl)
                Er = self._forward_eval(Fr)
                monitor = float(np.mean((np.sum(El * Er, axis=1) - qt) ** 2))
            if monitor < best:
                best = monitor
                best_snap = self.snapshot()
                wait = 0
            else:
                wait += 1
                if wait > cfg.patience:
                    break
        self.restore(best_snap)
        return self


def lower_triangle_pairs(indices):
    """All (i, j) pairs over the given indices with i >= j, diagonal included."""
    indices = np.asarray(indices, dtype=int)
    left = []
    right = []
    for a in range(len(indices)):
        for b in range(a + 1):
            left.append(indices[a])
            right.append(indices[b])
    return np.asarray(left, dtype=int), np.asarray(right, dtype=int)


@dataclass
class FittedQuadratic:
    network: GramEmbedding
    features: np.ndarray
    observed: np.ndarray
    observed_bias: np.ndarray


def quadratic_fit(
    summary: PredictiveSummary,
    pool: LabeledPool,
    grid: StateGrid,
    config: QuadraticConfig,
    seed: int,
) -> FittedQuadratic:
    """Fit the Gram network on the observed lower-triangle cobias entries."""
    observed, biases = empirical_bias_vector(summary, pool)
    if len(observed) < 2:
        raise ValueError(f"need at least 2 observed indices, got {len(observed)}")
    feats = point_features(summary, grid)
    pos = {int(g): k for k, g in enumerate(observed)}
    left, right = lower_triangle_pairs(observed)
    targets = np.array([biases[pos[int(a)]] * biases[pos[int(b)]] for a, b in zip(left, right)])
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x51AD)))
    net = GramEmbedding(feats.shape[1], config, rng)
    net.fit_pairs(feats, left, right, targets, seed=int(seed))
    return FittedQuadratic(network=net, features=feats, observed=observed, observed_bias=biases)


def quadratic_predict_matrix(fitted: FittedQuadratic, overwrite_observed: bool = True) -> np.ndarray:
    """Full predicted cobias matrix over the grid.

    With overwrite_observed (the default), entries between observed indices
    are replaced by their empirical values, which carry no model error.
    """
    pred = fitted.network.predict_matrix(fitted.features)
    if overwrite_observed and len(fitted.observed) > 0:
        block = np.outer(fitted.observed_bias, fitted.observed_bias)
        pred[np.ix_(fitted.observed, fitted.observed)] = block
    return pred


def estimate_quadratic(
    summary: PredictiveSummary,
    pool: LabeledPool,
    grid: StateGrid,
    config: QuadraticConfig,
    seed: int,
    with_matrices: bool = True,
    overwrite_observed: bool = True,
    round_index: int = 0,
):
    """Quadratic back end: entrywise cobias prediction, PEMSE from its diagonal."""
    fitted = quadratic_fit(summary, pool, grid, config, seed)
    bias_mat = quadratic_predict_matrix(fitted, overwrite_observed=overwrite_observed)
    field = PemseField(
        model_var=summary.variance,
        bias_sq=np.maximum(np.diag(bias_mat), 0.0),
        noise_var=np.zeros(grid.n),
    )
    decomp = None
    if with_matrices:
        decomp = assemble(
            model_covariance(summary.member_matrix),
            bias_mat,
            np.zeros((grid.n, grid.n)),
            round_index=round_index,
        )
    return field, decomp
