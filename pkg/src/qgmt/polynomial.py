"""Multivariate vector-valued polynomials R^m -> R^n with exact derivatives."""

from __future__ import annotations

import numpy as np


class Polynomial:
    """Sum of monomials ``coef * x^exp``.

    ``exps`` is an integer ``(T, m)`` array and ``coefs`` a ``(T, n)`` array.
    Evaluation accepts a single point ``(m,)`` or a batch ``(K, m)``.
    """

    def __init__(self, exps, coefs):
        exps = np.asarray(exps, dtype=int)
        coefs = np.asarray(coefs, dtype=float)
        if exps.ndim != 2 or coefs.ndim != 2 or exps.shape[0] != coefs.shape[0]:
            raise ValueError("exps must be (T, m) and coefs (T, n)")
        if np.any(exps < 0):
            raise ValueError("exponents must be nonnegative")
        self.exps = exps
        self.coefs = coefs
        self.m = exps.shape[1]
        self.n = coefs.shape[1]
        self._derivs: dict[int, Polynomial] = {}

    @classmethod
    def zero(cls, m: int, n: int) -> "Polynomial":
        return cls(np.zeros((1, m), int), np.zeros((1, n)))

    @classmethod
    def constant(cls, c, m: int) -> "Polynomial":
        c = np.atleast_1d(np.asarray(c, float))
        return cls(np.zeros((1, m), int), c[None, :])

    @classmethod
    def affine(cls, A, b) -> "Polynomial":
        """``x -> A x + b`` with ``A`` of shape ``(n, m)``."""
        A = np.atleast_2d(np.asarray(A, float))
        b = np.atleast_1d(np.asarray(b, float))
        n, m = A.shape
        exps = [np.zeros(m, int)] + [np.eye(m, dtype=int)[i] for i in range(m)]
        coefs = [b] + [A[:, i] for i in range(m)]
        return cls(np.array(exps), np.array(coefs))

    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if len(self.exps) else 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        # monomials: (K, T)
        mono = np.prod(X[:, None, :] ** self.exps[None, :, :], axis=2)
        out = mono @ self.coefs
        return out[0] if single else out

    def derivative(self, axis: int) -> "Polynomial":
        if axis not in self._derivs:
            e = self.exps[:, axis]
            keep = e > 0
            if not np.any(keep):
                d = Polynomial.zero(self.m, self.n)
            else:
                exps = self.exps[keep].copy()
                coefs = self.coefs[keep] * e[keep, None]
                exps[:, axis] -= 1
                d = Polynomial(exps, coefs)
            self._derivs[axis] = d
        return self._derivs[axis]

    def jacobian(self, x) -> np.ndarray:
        """``(n, m)`` or ``(K, n, m)``."""
        cols = [self.derivative(i)(x) for i in range(self.m)]
        return np.stack(cols, axis=-1)

    def hessian(self, x) -> np.ndarray:
        """``(n, m, m)`` or ``(K, n, m, m)``."""
        rows = [self.derivative(i).jacobian(x) for i in range(self.m)]
        return np.stack(rows, axis=-2)

    def third(self, x) -> np.ndarray:
        """``(n, m, m, m)`` or ``(K, n, m, m, m)``."""
        slabs = [self.derivative(i).hessian(x) for i in range(self.m)]
        return np.stack(slabs, axis=-3)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.vstack([self.exps, other.exps]), np.vstack([self.coefs, other.coefs]))

    def scaled(self, factor: float) -> "Polynomial":
        return Polynomial(self.exps, self.coefs * factor)

    def shifted(self, c) -> "Polynomial":
        """``x -> self(x) + c``."""
        return self + Polynomial.constant(c, self.m)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "terms": [
                {"exp": [int(e) for e in ex], "coef": [float(c) for c in co]}
                for ex, co in zip(self.exps, self.coefs)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Polynomial":
        terms = doc.get("terms", [])
        m, n = int(doc["m"]), int(doc["n"])
        if not terms:
            return cls.zero(m, n)
        exps = np.array([t["exp"] for t in terms], dtype=int).reshape(len(terms), m)
        coefs = np.array([t["coef"] for t in terms], dtype=float).reshape(len(terms), n)
        return cls(exps, coefs)

    def __repr__(self) -> str:
        return f"Polynomial(m={self.m}, n={self.n}, terms={len(self.exps)})"
