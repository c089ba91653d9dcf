"""Densities of the true p-value used to average the effort."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats


@dataclass(frozen=True)
class DensitySpec:
    """A p-value density on [0, 1].

    Attributes:
        kind: ``"uniform"``, ``"piecewise_mix"`` (piecewise constant) or
            ``"beta"``.
        pieces: For ``piecewise_mix``, tuples ``(lo, hi, value)`` tiling [0, 1].
        a, b: Beta shape parameters.
        name: Optional label.
    """

    kind: str
    pieces: tuple[tuple[float, float, float], ...] = ()
    a: float = 1.0
    b: float = 1.0
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "piecewise_mix", "beta"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "piecewise_mix":
            edges = [p[0] for p in self.pieces] + [self.pieces[-1][1]]
            if edges[0] != 0.0 or edges[-1] != 1.0 or any(
                p[1] != q[0] for p, q in zip(self.pieces[:-1], self.pieces[1:])
            ):
                raise ValueError("pieces must tile [0, 1]")
            if any(v < 0 for *_, v in self.pieces):
                raise ValueError("density values must be non-negative")
        if self.kind == "beta" and not (self.a > 0 and self.b > 0):
            raise ValueError("beta parameters must be positive")
        total = self.total_mass()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"density integrates to {total}, not 1")

    @classmethod
    def uniform(cls, name: str | None = "H0") -> DensitySpec:
        return cls("uniform", name=name)

    @classmethod
    def mixture(cls, base: float, bumps: dict[float, float], name: str | None = None) -> DensitySpec:
        """Density ``base + sum(h * 1(x <= c))`` over ``bumps = {c: h}``."""
        cuts = sorted(bumps)
        edges = [0.0, *cuts, 1.0]
        pieces = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            v = base + sum(h for c, h in bumps.items() if hi <= c)
            pieces.append((lo, hi, v))
        return cls("piecewise_mix", tuple(pieces), name=name)

    @classmethod
    def beta(cls, a: float, b: float, name: str | None = None) -> DensitySpec:
        return cls("beta", a=float(a), b=float(b), name=name)

    @property
    def breakpoints(self) -> list[float]:
        if self.kind == "piecewise_mix":
            return [p[0] for p in self.pieces[1:]]
        return []

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.ones_like(x)
        if self.kind == "piecewise_mix":
            out = np.zeros_like(x)
            for lo, hi, v in self.pieces:
                inside = (x >= lo) & ((x < hi) | ((hi == 1.0) & (x <= hi)))
                out[inside] = v
            return out
        with np.errstate(divide="ignore"):
            logpdf = special.xlogy(self.a - 1, x) + special.xlog1py(self.b - 1, -x) - special.betaln(self.a, self.b)
        return np.exp(logpdf)

    def total_mass(self) -> float:
        if self.kind == "uniform":
            return 1.0
        if self.kind == "piecewise_mix":
            return float(sum((hi - lo) * v for lo, hi, v in self.pieces))
        val, _ = integrate.quad(lambda t: float(self.pdf(t)), 0.0, 1.0, limit=200)
        return val

    def binomial_weights(self, n, s) -> np.ndarray:
        """``∫ f(p) C(n, s) p^s (1-p)^(n-s) dp`` in closed form."""
        n = np.asarray(n)
        s = np.asarray(s)
        if self.kind == "uniform":
            return 1.0 / (n + 1.0)
        if self.kind == "beta":
            return stats.betabinom.pmf(s, n, self.a, self.b)
        # ∫_0^c C(n,s) p^s (1-p)^(n-s) dp = P(Bin(n+1, c) > s) / (n+1)
        out = np.zeros(np.broadcast(n, s).shape)
        for lo, hi, v in self.pieces:
            if v == 0:
                continue
            up = stats.binom.sf(s, n + 1, hi)
            down = stats.binom.sf(s, n + 1, lo) if lo > 0 else 0.0
            out += v * (up - down)
        return out / (n + 1.0)


H0 = DensitySpec.uniform("H0")
H1A = DensitySpec.mixture(0.5, {0.05: 10.0}, name="H1a")
H1B = DensitySpec.beta(0.5, 25.0, name="H1b")
NAMED_DENSITIES = {"H0": H0, "H1a": H1A, "H1b": H1B}
