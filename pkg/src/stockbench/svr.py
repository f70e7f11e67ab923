"""Support vector regression with an RBF kernel, trained by sequential
minimal optimization on the epsilon-insensitive dual.

The dual is solved in the paired form: each sample i carries coefficients
(alpha_i, alpha*_i) in [0, C], net weight beta_i = alpha_i - alpha*_i, and
the fitted function is f(x) = sum_i beta_i k(x_i, x) + b. Every iteration
picks the maximal violating pair of coordinates, solves the two-variable
subproblem exactly, and updates the cached kernel expansion, until no pair
violates the KKT conditions by more than ``tol``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ContractError, ConvergenceError
from .validation import as_float_matrix, as_float_vector


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """k(x, z) = exp(-gamma * ||x - z||^2) for all row pairs."""
    a2 = (a * a).sum(axis=1)[:, None]
    b2 = (b * b).sum(axis=1)[None, :]
    sq = np.maximum(a2 + b2 - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * sq)


class SupportVectorRegressor(BaseEstimator, RegressorMixin):
    """Epsilon-insensitive SVR with RBF kernel, fit by SMO.

    Parameters
    ----------
    C : box constraint on each dual coefficient.
    epsilon : half-width of the insensitive tube around the targets.
    gamma : RBF width; None means 1 / n_features.
    tol : KKT violation below which optimization stops.
    max_iter : hard cap on SMO pair updates.
    """

    def __init__(self, C=10.0, epsilon=0.01, gamma=None, tol=1e-3, max_iter=100_000):
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = as_float_matrix(X, "X")
        y = as_float_vector(y, "y")
        n = X.shape[0]
        if n < 2:
            raise ContractError(f"SVR needs at least 2 samples, got {n}")
        if y.shape[0] != n:
            raise ContractError(f"X has {n} rows but y has {y.shape[0]}")
        if self.C <= 0 or self.epsilon < 0 or self.tol <= 0:
            raise ContractError("need C > 0, epsilon >= 0, tol > 0")
        gamma = self.gamma if self.gamma is not None else 1.0 / X.shape[1]
        if gamma <= 0:
            raise ContractError(f"gamma must be positive, got {gamma}")

        K = rbf_kernel(X, X, gamma)
        C, eps = float(self.C), float(self.epsilon)
        alpha = np.zeros(n)       # pushes f up at its sample
        alpha_star = np.zeros(n)  # pushes f down
        F = np.zeros(n)           # K @ beta, the uncentered predictions

        it = 0
        while True:
            gap, p, q = self._violating_pair(y, F, alpha, alpha_star, eps, C)
            if gap <= self.tol:
                break
            if it >= self.max_iter:
                raise ConvergenceError(
                    f"SMO did not reach tol={self.tol} within {self.max_iter} iterations "
                    f"(final KKT violation {gap:.3e})"
                )
            it += 1
            ip, sp = p % n, (1.0 if p < n else -1.0)
            iq, sq = q % n, (1.0 if q < n else -1.0)
            v_p = y[ip] - F[ip] + (-eps if p < n else eps)
            v_q = y[iq] - F[iq] + (-eps if q < n else eps)
            eta = K[ip, ip] + K[iq, iq] - 2.0 * K[ip, iq]
            # feasible step keeps both coordinates inside [0, C]
            theta_p = alpha[ip] if p < n else alpha_star[ip]
            theta_q = alpha[iq] if q < n else alpha_star[iq]
            d_max = min(
                C - theta_p if sp > 0 else theta_p,
                theta_q if sq > 0 else C - theta_q,
            )
            if d_max <= 0:
                raise ConvergenceError("SMO selected a pair with no feasible step")
            if eta > 1e-12:
                d = min((v_p - v_q) / eta, d_max)
            else:
                d = d_max
            if p < n:
                alpha[ip] += d
            else:
                alpha_star[ip] -= d
            if q < n:
                alpha[iq] -= d
            else:
                alpha_star[iq] += d
            F += d * (K[:, ip] - K[:, iq])

        max_lower, min_upper = self._bias_bounds(y, F, alpha, alpha_star, eps, C)
        beta = alpha - alpha_star
        keep = np.abs(beta) > 1e-12
        self.gamma_ = gamma
        self.support_vectors_ = X[keep].copy()
        self.dual_coef_ = beta[keep].copy()
        self.intercept_ = 0.5 * (max_lower + min_upper)
        self.kkt_violation_ = max(max_lower - min_upper, 0.0)
        self.n_iter_ = it
        self.n_features_in_ = X.shape[1]
        self.dual_objective_ = float(
            -0.5 * beta @ K @ beta + y @ beta - eps * (alpha.sum() + alpha_star.sum())
        )
        return self

    @staticmethod
    def _violating_pair(y, F, alpha, alpha_star, eps, C):
        """Most violated KKT bound pair on the bias term.

        Every sample constrains the bias b: coordinates that may still move
        up impose lower bounds, coordinates that may move down impose upper
        bounds. Feasible (converged) means max(lower) <= min(upper) + tol.
        """
        n = y.shape[0]
        g_minus = y - F - eps  # alpha-side critical value
        g_plus = y - F + eps   # alpha*-side critical value
        lower = np.concatenate([
            np.where(alpha < C, g_minus, -np.inf),
            np.where(alpha_star > 0, g_plus, -np.inf),
        ])
        upper = np.concatenate([
            np.where(alpha > 0, g_minus, np.inf),
            np.where(alpha_star < C, g_plus, np.inf),
        ])
        p = int(np.argmax(lower))
        q = int(np.argmin(upper))
        return float(lower[p] - upper[q]), p, q

    @staticmethod
    def _bias_bounds(y, F, alpha, alpha_star, eps, C):
        g_minus = y - F - eps
        g_plus = y - F + eps
        lower = max(
            g_minus[alpha < C].max(initial=-np.inf),
            g_plus[alpha_star > 0].max(initial=-np.inf),
        )
        upper = min(
            g_minus[alpha > 0].min(initial=np.inf),
            g_plus[alpha_star < C].min(initial=np.inf),
        )
        if not np.isfinite(lower):
            lower = upper
        if not np.isfinite(upper):
            upper = lower
        return lower, upper

    def predict(self, X):
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ContractError(
                f"X has {X.shape[1]} columns, model was fit with {self.n_features_in_}"
            )
        if X.shape[0] == 0:
            return np.zeros(0)
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        k = rbf_kernel(X, self.support_vectors_, self.gamma_)
        return k @ self.dual_coef_ + self.intercept_
