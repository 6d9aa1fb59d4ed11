"""Hot numeric kernels: full-batch MLP training with Adam and early stopping.

The training loop of a single ensemble member is the dominant cost of a
benchmark run (thousands of fits of a small network on a small design
matrix), so it is written once in vectorized numpy style and compiled with
numba when available. Set ``AICAU_DISABLE_NUMBA=1`` to force the pure-numpy
fallback; both variants stay importable (``*_numpy`` / ``*_numba``) so they
can be benchmarked against each other (see ``benchmarks/``).

The network shape is fixed at three ReLU hidden layers and a linear scalar
output; layer widths are free. Parameters are bare float64 arrays so the
same call works identically under both execution paths.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    numba = None
    HAVE_NUMBA = False


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_flag("AICAU_DISABLE_NUMBA")


def _jit(fn):
    return numba.njit(cache=True)(fn) if HAVE_NUMBA else None


# ---------------------------------------------------------------------------
# forward / gradients
# ---------------------------------------------------------------------------


def _mlp_loss_and_grads_impl(X, y, W1, b1, W2, b2, W3, b3, W4, b4):
    """MSE loss and analytic gradients for the 3-hidden-layer scalar MLP.

    X is (n, d), y is (n,), W4 maps the last hidden layer to a single
    output. Returns the loss followed by one gradient per parameter, in
    parameter order.
    """
    n = X.shape[0]

    Z1 = X @ W1 + b1
    A1 = np.maximum(Z1, 0.0)
    Z2 = A1 @ W2 + b2
    A2 = np.maximum(Z2, 0.0)
    Z3 = A2 @ W3 + b3
    A3 = np.maximum(Z3, 0.0)
    out = A3 @ W4 + b4

    r = out[:, 0] - y
    loss = np.mean(r * r)

    # d(mean r^2)/d(out)
    G4 = (2.0 / n) * r.reshape(n, 1)
    dW4 = A3.T @ G4
    db4 = G4.sum(axis=0)

    G3 = np.where(Z3 > 0.0, G4 @ W4.T, 0.0)
    dW3 = A2.T @ G3
    db3 = G3.sum(axis=0)

    G2 = np.where(Z2 > 0.0, G3 @ W3.T, 0.0)
    dW2 = A1.T @ G2
    db2 = G2.sum(axis=0)

    G1 = np.where(Z1 > 0.0, G2 @ W2.T, 0.0)
    dW1 = X.T @ G1
    db1 = G1.sum(axis=0)

    return loss, dW1, db1, dW2, db2, dW3, db3, dW4, db4


def _adam_step_impl(p, m, v, g, lr, beta1, beta2, eps, t):
    """In-place Adam update of parameter array p with bias correction."""
    m[...] = beta1 * m + (1.0 - beta1) * g
    v[...] = beta2 * v + (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p[...] = p - lr * mhat / (np.sqrt(vhat) + eps)


def _make_train(loss_and_grads, adam_step):
    def train(
        X,
        y,
        W1,
        b1,
        W2,
        b2,
        W3,
        b3,
        W4,
        b4,
        lr,
        beta1,
        beta2,
        eps,
        max_epochs,
        min_improvement,
        patience,
    ):
        """Full-batch Adam training, mutating the parameter arrays in place.

        Stops once the loss has failed to decrease (epoch over epoch) by
        more than ``min_improvement`` for more than ``patience`` consecutive
        epochs, or at ``max_epochs``. Comparing against the previous epoch
        rather than the running best keeps transient optimizer excursions
        from ending training mid-recovery. Returns (epochs_run,
        loss_history), where loss_history[e] is the full-batch loss measured
        at the start of epoch e (before that epoch's update).
        """
        mW1 = np.zeros_like(W1)
        vW1 = np.zeros_like(W1)
        mb1 = np.zeros_like(b1)
        vb1 = np.zeros_like(b1)
        mW2 = np.zeros_like(W2)
        vW2 = np.zeros_like(W2)
        mb2 = np.zeros_like(b2)
        vb2 = np.zeros_like(b2)
        mW3 = np.zeros_like(W3)
        vW3 = np.zeros_like(W3)
        mb3 = np.zeros_like(b3)
        vb3 = np.zeros_like(b3)
        mW4 = np.zeros_like(W4)
        vW4 = np.zeros_like(W4)
        mb4 = np.zeros_like(b4)
        vb4 = np.zeros_like(b4)

        losses = np.empty(max_epochs)
        prev = np.inf
        wait = 0
        epochs = 0
        for epoch in range(max_epochs):
            loss, dW1, db1, dW2, db2, dW3, db3, dW4, db4 = loss_and_grads(
                X, y, W1, b1, W2, b2, W3, b3, W4, b4
            )
            losses[epoch] = loss
            epochs = epoch + 1
            if prev - loss > min_improvement:
                wait = 0
            else:
                wait += 1
                if wait > patience:
                    break
            prev = loss
            t = epoch + 1
            adam_step(W1, mW1, vW1, dW1, lr, beta1, beta2, eps, t)
            adam_step(b1, mb1, vb1, db1, lr, beta1, beta2, eps, t)
            adam_step(W2, mW2, vW2, dW2, lr, beta1, beta2, eps, t)
            adam_step(b2, mb2, vb2, db2, lr, beta1, beta2, eps, t)
            adam_step(W3, mW3, vW3, dW3, lr, beta1, beta2, eps, t)
            adam_step(b3, mb3, vb3, db3, lr, beta1, beta2, eps, t)
            adam_step(W4, mW4, vW4, dW4, lr, beta1, beta2, eps, t)
            adam_step(b4, mb4, vb4, db4, lr, beta1, beta2, eps, t)
        return epochs, losses[:epochs]

    return train


mlp_loss_and_grads_numpy = _mlp_loss_and_grads_impl
train_scalar_mlp_numpy = _make_train(_mlp_loss_and_grads_impl, _adam_step_impl)

if HAVE_NUMBA:
    mlp_loss_and_grads_numba = _jit(_mlp_loss_and_grads_impl)
    _adam_step_numba = _jit(_adam_step_impl)
    train_scalar_mlp_numba = _jit(_make_train(mlp_loss_and_grads_numba, _adam_step_numba))
else:  # pragma: no cover
    mlp_loss_and_grads_numba = None
    train_scalar_mlp_numba = None

if USE_NUMBA:
    mlp_loss_and_grads = mlp_loss_and_grads_numba
    train_scalar_mlp = train_scalar_mlp_numba
else:
    mlp_loss_and_grads = mlp_loss_and_grads_numpy
    train_scalar_mlp = train_scalar_mlp_numpy


def mlp_forward(X, params):
    """Predictions of the scalar MLP at rows of X; params = (W1,b1,...,W4,b4)."""
    W1, b1, W2, b2, W3, b3, W4, b4 = params
    A1 = np.maximum(X @ W1 + b1, 0.0)
    A2 = np.maximum(A1 @ W2 + b2, 0.0)
    A3 = np.maximum(A2 @ W3 + b3, 0.0)
    return (A3 @ W4 + b4)[:, 0]
