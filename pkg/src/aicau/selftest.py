"""Mathematical identity suites runnable from the CLI (`aicau selftest`).

Each check evaluates one structural identity of the error decomposition with
an independent brute-force computation: exact population sums over finite
discrete distributions, exhaustive search for selections, or Monte-Carlo
convergence for the empirical estimators. These are the fast counterparts of
the full acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import acquisition, cobias, linalg, oracle
from .ensemble import PredictiveSummary
from .pool import LabeledPool, build_grid


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


# -- exact population helpers over finite discrete distributions -------------


def population_mean(atoms) -> float:
    return float(np.mean(atoms))


def population_var(atoms) -> float:
    a = np.asarray(atoms, dtype=float)
    return float(np.mean((a - a.mean()) ** 2))


def population_pemse(f_atoms, y_atoms) -> float:
    """Exact E[(F - Y)^2] over the product of two finite distributions."""
    f = np.asarray(f_atoms, dtype=float)
    y = np.asarray(y_atoms, dtype=float)
    diff = f[:, None] - y[None, :]
    return float(np.mean(diff * diff))


def population_cross_error(f_pairs, y_pairs) -> float:
    """Exact E[(F(x)-Y(x)) (F(x*)-Y(x*))] for jointly-atomic F and Y.

    f_pairs is (K, 2): member values at the two points; y_pairs is (M, 2):
    joint outcome atoms at the two points. F and Y are independent.
    """
    f = np.asarray(f_pairs, dtype=float)
    y = np.asarray(y_pairs, dtype=float)
    d0 = f[:, None, 0] - y[None, :, 0]
    d1 = f[:, None, 1] - y[None, :, 1]
    return float(np.mean(d0 * d1))


def cross_error_expansion_terms(f_pairs, y_pairs) -> np.ndarray:
    """The nine expansion terms of the cross-point error product.

    Terms 0, 4 and 8 are the covariance, bias-product and noise-covariance
    contributions; the other six involve a centered first moment and must
    vanish.
    """
    f = np.asarray(f_pairs, dtype=float)
    y = np.asarray(y_pairs, dtype=float)
    muf = f.mean(axis=0)
    muy = y.mean(axis=0)
    fc = f - muf
    yc = y - muy
    delta = muf - muy

    e_fc = fc.mean(axis=0)
    e_yc = yc.mean(axis=0)
    return np.array(
        [
            float(np.mean(fc[:, 0] * fc[:, 1])),
            float(e_fc[0] * delta[1]),
            float(-e_fc[0] * e_yc[1]),
            float(delta[0] * e_fc[1]),
            float(delta[0] * delta[1]),
            float(-delta[0] * e_yc[1]),
            float(-e_yc[0] * e_fc[1]),
            float(-e_yc[0] * delta[1]),
            float(np.mean(yc[:, 0] * yc[:, 1])),
        ]
    )


def _synthetic_summary(member_matrix) -> PredictiveSummary:
    M = np.asarray(member_matrix, dtype=float)
    return PredictiveSummary(
        mean=M.mean(axis=0), variance=M.var(axis=0, ddof=1), member_matrix=M
    )


def make_two_point_pool(y_pairs, co_realized: bool) -> LabeledPool:
    """Pool over two pseudo-grid indices fed with the given realizations.

    With co_realized each row of y_pairs shares one round tag; otherwise the
    two columns get disjoint tags so no pair counts as jointly drawn.
    """
    y = np.asarray(y_pairs, dtype=float)
    pool = LabeledPool(n=2, allow_repeats=True)
    for s, (vi, vj) in enumerate(y):
        tag_j = s if co_realized else s + y.shape[0]
        pool.observations[0].append((float(vi), s))
        pool.observations[1].append((float(vj), tag_j))
    pool.round = 1
    return pool


# -- the checks ---------------------------------------------------------------


def check_pointwise_identity(n_trials: int = 200, tol: float = 1e-10, seed: int = 7) -> CheckResult:
    """E[(F-Y)^2] == var(F) + bias^2 + var(Y) exactly for discrete atoms."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_trials):
        f = rng.uniform(-2, 2, size=rng.integers(2, 9))
        y = rng.uniform(-2, 2, size=rng.integers(2, 9))
        lhs = population_pemse(f, y)
        bias = population_mean(f) - population_mean(y)
        rhs = population_var(f) + bias * bias + population_var(y)
        worst = max(worst, abs(lhs - rhs))
    return CheckResult("pointwise error identity", worst <= tol, f"max |lhs-rhs| = {worst:.3e}")


def check_cross_point_identity(n_trials: int = 200, tol: float = 1e-10, seed: int = 11) -> CheckResult:
    """Cross-point product == covariance + bias product + noise covariance;
    the six centered-moment expansion terms vanish."""
    rng = np.random.default_rng(seed)
    worst_identity = 0.0
    worst_cross = 0.0
    for _ in range(n_trials):
        f = rng.uniform(-2, 2, size=(rng.integers(2, 9), 2))
        y = rng.uniform(-2, 2, size=(rng.integers(2, 9), 2))
        lhs = population_cross_error(f, y)
        terms = cross_error_expansion_terms(f, y)
        rhs = terms[0] + terms[4] + terms[8]
        worst_identity = max(worst_identity, abs(lhs - rhs))
        worst_cross = max(worst_cross, float(np.abs(terms[[1, 2, 3, 5, 6, 7]]).max()))
    passed = worst_identity <= tol and worst_cross <= tol
    return CheckResult(
        "cross-point (cobias) identity",
        passed,
        f"max |lhs-rhs| = {worst_identity:.3e}, max cross term = {worst_cross:.3e}",
    )


def check_aleatoric_cancellation(n_trials: int = 100, seed: int = 13) -> CheckResult:
    """The between-round field difference is identical with and without a
    shared aleatoric component."""
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n_trials):
        n = int(rng.integers(5, 60))
        noise = rng.uniform(0, 1, n)
        prev_full = cobias.PemseField(rng.uniform(0, 1, n), rng.uniform(0, 1, n), noise)
        curr_full = cobias.PemseField(rng.uniform(0, 1, n), rng.uniform(0, 1, n), noise)
        prev_red = cobias.PemseField(prev_full.model_var, prev_full.bias_sq, np.zeros(n))
        curr_red = cobias.PemseField(curr_full.model_var, curr_full.bias_sq, np.zeros(n))
        k_full = acquisition.kappa_field(prev_full, curr_full, "pemse")
        k_red = acquisition.kappa_field(prev_red, curr_red, "pemse")
        if not np.array_equal(k_full, k_red) or float(np.mean(k_full)) != float(np.mean(k_red)):
            ok = False
            break
    return CheckResult("aleatoric cancellation in field differences", ok, f"{n_trials} field pairs")


def check_trace_and_rank(seed: int = 17) -> CheckResult:
    """trace == eigenvalue sum for the assembled matrix at n=100, and the
    numerical rank respects (K-1) + 1 + rank(noise)."""
    rng = np.random.default_rng(seed)
    grid = build_grid(10)
    n = grid.n
    K = 5
    member_matrix = rng.standard_normal((K, n))
    bias = rng.standard_normal(n)
    details = []
    ok = True
    for ptype in (oracle.ProblemType.NOISELESS, oracle.ProblemType.UNCORRELATED):
        spec = oracle.OracleSpec(problem_type=ptype)
        noise_cov = oracle.noise_covariance(spec, grid.points)
        decomp = cobias.assemble(
            cobias.model_covariance(member_matrix), cobias.bias_outer_product(bias), noise_cov
        )
        pairs = linalg.sym_eigen(decomp.total)
        trace_gap = abs(np.trace(decomp.total) - pairs.eigenvalues.sum())
        scale = max(float(np.abs(pairs.eigenvalues).max()), 1e-300)
        n_modes = int((pairs.eigenvalues > 1e-8 * scale).sum())
        noise_rank = int(np.linalg.matrix_rank(noise_cov, tol=1e-8 * max(1.0, np.abs(noise_cov).max())))
        bound = (K - 1) + 1 + noise_rank
        ok = ok and trace_gap <= 1e-8 * n and n_modes <= bound
        details.append(f"type{int(ptype)}: trace gap {trace_gap:.2e}, modes {n_modes} <= {bound}")
    return CheckResult("trace identity and rank bound", ok, "; ".join(details))


def check_estimator_consistency(n_draws: int = 20_000, seed: int = 19) -> CheckResult:
    """Empirical cross-error estimators converge to the exact population value;
    only the co-realized estimator sees the noise covariance."""
    rng = np.random.default_rng(seed)
    member_matrix = np.array([[0.9, -0.4], [1.1, 0.1], [0.7, -0.2]])
    summary = _synthetic_summary(member_matrix)
    mean_y = np.array([0.5, -0.5])
    noise_cross = 0.35
    cov = np.array([[1.0, noise_cross], [noise_cross, 0.8]])
    draws = rng.multivariate_normal(mean_y, cov, size=n_draws)

    f_centered = member_matrix - mean_y
    base = float(np.mean(f_centered[:, 0] * f_centered[:, 1]))
    pop_with_noise = base + noise_cross

    pool_co = make_two_point_pool(draws, co_realized=True)
    pool_ind = make_two_point_pool(draws, co_realized=False)
    est_corr = cobias.empirical_omega_correlated(summary, pool_co, 0, 1)
    est_unc = cobias.empirical_omega_uncorrelated(summary, pool_ind, 0, 1)
    tol = 5.0 / np.sqrt(n_draws)
    ok = abs(est_corr - pop_with_noise) < tol and abs(est_unc - base) < tol
    detail = (
        f"co-realized {est_corr:.4f} vs {pop_with_noise:.4f}, "
        f"independent {est_unc:.4f} vs {base:.4f} (tol {tol:.4f})"
    )
    return CheckResult("empirical estimator consistency", ok, detail)


def check_eigen_vs_bruteforce(n_trials: int = 100, seed: int = 23) -> CheckResult:
    """Top-eigenvector selection on a rank-1 matrix equals exhaustive argmax."""
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n_trials):
        n = int(rng.integers(3, 51))
        bias = rng.standard_normal(n)
        selection = acquisition.select_batch_eigen(cobias.bias_outer_product(bias), 1, mode="omega")
        brute = max(range(n), key=lambda i: abs(bias[i]))
        if selection.indices[0] != brute:
            ok = False
            break
    return CheckResult("eigen batch vs exhaustive search", ok, f"{n_trials} rank-1 matrices")


ALL_CHECKS = (
    check_pointwise_identity,
    check_cross_point_identity,
    check_aleatoric_cancellation,
    check_trace_and_rank,
    check_estimator_consistency,
    check_eigen_vs_bruteforce,
)


def run_all() -> list:
    return [check() for check in ALL_CHECKS]
