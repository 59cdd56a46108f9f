"""Problem instances: priors on the non-zero amplitudes, problem dimensions,
Gaussian sensing matrices and the two measurement channels.

Normalization follows the sublinear-sparsity convention: the sensing matrix
has i.i.d. N(0, 1) entries and each of the ``k`` non-zero signal entries is
``u / sqrt(k)`` with ``u`` drawn from the prior, so ``E||x||^2 = P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_MIXTURE_POINTS = 64


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class Prior:
    """Distribution of the scaled non-zero amplitude ``U``.

    Use the constructors :meth:`gaussian`, :meth:`constant` and
    :meth:`discrete` rather than instantiating directly.
    """

    kind: str
    variance: float = 0.0
    points: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "gaussian":
            if not (self.variance > 0 and math.isfinite(self.variance)):
                raise DomainError("Gaussian prior needs a finite variance > 0")
            return
        if self.kind not in ("constant", "discrete"):
            raise DomainError(f"unknown prior kind {self.kind!r}")
        if len(self.points) != len(self.probs) or not self.points:
            raise DomainError("mixture needs matching, non-empty points/probs")
        if len(self.points) > MAX_MIXTURE_POINTS:
            raise DomainError(f"at most {MAX_MIXTURE_POINTS} mixture points")
        if any(u == 0 or not math.isfinite(u) for u in self.points):
            raise DomainError("no probability mass allowed at the origin")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1) > 1e-12:
            raise DomainError("mixture probabilities must be >= 0 and sum to 1")

    @classmethod
    def gaussian(cls, P: float = 1.0) -> Prior:
        return cls("gaussian", variance=float(P))

    @classmethod
    def constant(cls, u_min: float) -> Prior:
        """Symmetric constant-amplitude prior, ``U = +-u_min`` w.p. 1/2."""
        if not u_min > 0:
            raise DomainError("u_min must be > 0")
        u = float(u_min)
        return cls("constant", points=(-u, u), probs=(0.5, 0.5))

    @classmethod
    def discrete(cls, points, probs) -> Prior:
        return cls(
            "discrete",
            points=tuple(float(u) for u in points),
            probs=tuple(float(p) for p in probs),
        )

    @property
    def is_discrete(self) -> bool:
        return self.kind != "gaussian"

    @property
    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.points), np.asarray(self.probs)

    def second_moment(self) -> float:
        """P = E[U^2]."""
        if self.kind == "gaussian":
            return self.variance
        u, p = self.atoms
        return math.fsum(p * u**2)

    def u_min(self) -> float:
        """Essential minimum of |U| (0 for the Gaussian prior)."""
        if self.kind == "gaussian":
            return 0.0
        u, p = self.atoms
        return float(np.min(np.abs(u[p > 0])))

    def is_symmetric(self) -> bool:
        if self.kind == "gaussian":
            return True
        mass = {}
        for u, p in zip(self.points, self.probs):
            mass[u] = mass.get(u, 0.0) + p
        return all(abs(mass.get(-u, 0.0) - p) < 1e-15 for u, p in mass.items())

    def scaled(self, c: float) -> Prior:
        """Law of ``c * U``."""
        if self.kind == "gaussian":
            return Prior.gaussian(c * c * self.variance)
        return Prior(self.kind, points=tuple(c * u for u in self.points), probs=self.probs)

    def unit_power(self) -> Prior:
        return self.scaled(1.0 / math.sqrt(self.second_moment()))

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            return math.sqrt(self.variance) * rng.standard_normal(size)
        u, p = self.atoms
        return u[rng.choice(len(u), size=size, p=p)]

    def describe(self) -> str:
        """Inverse of :func:`parse_prior`."""
        if self.kind == "gaussian":
            return f"gauss:{self.variance:g}"
        if self.kind == "constant":
            return f"const:{self.points[1]:g}"
        return "discrete:" + ",".join(f"{u:g}@{p:g}" for u, p in zip(self.points, self.probs))


def parse_prior(text: str) -> Prior:
    """Parse ``gauss:P``, ``const:u_min`` or ``discrete:u1@p1,u2@p2,...``."""
    name, _, arg = text.partition(":")
    try:
        if name in ("gauss", "gaussian"):
            return Prior.gaussian(float(arg) if arg else 1.0)
        if name in ("const", "constant"):
            return Prior.constant(float(arg))
        if name == "discrete":
            pairs = [item.split("@") for item in arg.split(",")]
            return Prior.discrete([float(u) for u, _ in pairs], [float(p) for _, p in pairs])
    except (ValueError, TypeError) as exc:
        raise DomainError(f"bad prior {text!r}: {exc}") from exc
    raise DomainError(f"bad prior {text!r}")


@dataclass(frozen=True)
class ProblemDims:
    """Signal dimension ``N``, sparsity ``k`` and prefactor ``delta``.

    ``M = max(1, round(delta * k * ln(N / k)))``.
    """

    N: int
    k: int
    delta: float
    M: int = field(init=False)

    def __post_init__(self):
        if self.N < 2 or not 1 <= self.k < self.N:
            raise DomainError(f"need N >= 2 and 1 <= k < N, got N={self.N}, k={self.k}")
        if not self.delta > 0:
            raise DomainError("delta must be > 0")
        object.__setattr__(self, "M", max(1, round(self.delta * self.k * self.log_ratio)))

    @classmethod
    def from_gamma(cls, N: int, gamma: float, delta: float) -> ProblemDims:
        return cls(N, max(1, round(N**gamma)), delta)

    @property
    def log_ratio(self) -> float:
        """ln(N / k)."""
        return math.log(self.N / self.k)

    @property
    def delta_eff(self) -> float:
        return self.M / (self.k * self.log_ratio)


@dataclass(frozen=True)
class Channel:
    """``linear``: y = z + w.  ``onebit``: y = sign(z + w) with sign(0) = +1."""

    kind: str
    sigma2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "onebit"):
            raise DomainError(f"unknown channel {self.kind!r}")
        if not (self.sigma2 >= 0 and math.isfinite(self.sigma2)):
            raise DomainError("noise variance must be finite and >= 0")

    @classmethod
    def linear(cls, sigma2: float = 0.0) -> Channel:
        return cls("linear", float(sigma2))

    @classmethod
    def onebit(cls, sigma2: float = 0.0) -> Channel:
        return cls("onebit", float(sigma2))

    def apply(self, z, rng: np.random.Generator | None = None) -> np.ndarray:
        return apply_channel(self, z, rng)


def snr_db_to_sigma2(snr_db: float, P: float = 1.0) -> float:
    return P * 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class SignalInstance:
    x: np.ndarray
    support: np.ndarray
    u: np.ndarray


def second_moment(prior: Prior) -> float:
    return prior.second_moment()


def sample_signal(dims: ProblemDims, prior: Prior, rng: np.random.Generator) -> SignalInstance:
    """Draw a k-sparse signal with a uniformly random support."""
    support = np.sort(rng.choice(dims.N, size=dims.k, replace=False))
    u = prior.sample(dims.k, rng)
    x = np.zeros(dims.N)
    x[support] = u / math.sqrt(dims.k)
    return SignalInstance(x=x, support=support, u=u)


def sample_matrix(dims: ProblemDims, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((dims.M, dims.N))


def apply_channel(channel: Channel, z, rng: np.random.Generator | None = None) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DomainError("channel input must be finite")
    if channel.sigma2 > 0:
        if rng is None:
            raise DomainError("a noisy channel needs an rng")
        z = z + math.sqrt(channel.sigma2) * rng.standard_normal(z.shape)
    if channel.kind == "linear":
        return z.copy()
    return np.where(z >= 0, 1.0, -1.0)


def trial_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for one trial, keyed by e.g. (delta index, trial)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))
