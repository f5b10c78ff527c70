"""Qubit drive and TLS bath data model, plus seeded disorder sampling.

Energies and rates are plain floats in a common angular-frequency unit.
Everything downstream (figure configs, CLI) uses the modulation frequency
as the unit, so ``omega == 1`` in practice.

Random draws use numpy's counter-based Philox generator. Each realization
gets its own substream keyed on ``(seed, realization_index)``, so an
ensemble is identical no matter how the realizations are scheduled.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "InvalidSpecError",
    "TlsParams",
    "DriveParams",
    "BathSpec",
    "BathRealization",
    "make_rng",
    "sample_bath",
    "mixed_bath",
    "fig1a_spec",
    "fig1b_tls",
    "figs1_tls",
    "single_tls_bath",
]

LAYOUTS = ("equispaced", "uniform-random")


class InvalidSpecError(ValueError):
    """A bath or drive specification violates its invariants."""


@dataclass(frozen=True)
class TlsParams:
    """One defect: splitting ``epsilon``, coupling ``g`` and amplitude decay ``gamma``."""

    epsilon: float
    g: float
    gamma: float

    def __post_init__(self):
        if not (self.g >= 0 and self.gamma > 0):
            raise InvalidSpecError(f"need g >= 0 and gamma > 0, got {self}")

    @property
    def coupling_regime(self) -> str:
        return "weak" if self.g < self.gamma else "strong"


@dataclass(frozen=True)
class DriveParams:
    """Qubit splitting ``E0 + amp * cos(omega * t)``."""

    e0: float
    amp: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidSpecError("modulation frequency must be positive")
        if not self.amp >= 0:
            raise InvalidSpecError("modulation amplitude must be non-negative")

    @property
    def index(self) -> float:
        """Modulation index ``A / Omega``."""
        return self.amp / self.omega

    def phase(self, t):
        """Accumulated modulation phase ``(A / Omega) sin(Omega t)``."""
        return self.index * np.sin(self.omega * np.asarray(t))

    def with_e0(self, e0: float) -> "DriveParams":
        return DriveParams(e0=float(e0), amp=self.amp, omega=self.omega)


@dataclass(frozen=True)
class BathSpec:
    """Recipe for a disorder realization.

    TLS splittings fill a window of width ``n_tls * spacing`` centred on
    ``center``, either on a regular grid or uniformly at random. Couplings
    and decay rates are independent uniform draws from their ranges.
    """

    n_tls: int
    spacing: float
    g_range: tuple[float, float]
    gamma_range: tuple[float, float]
    epsilon_layout: str = "equispaced"
    seed: int = 0
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "g_range", tuple(float(v) for v in self.g_range))
        object.__setattr__(self, "gamma_range", tuple(float(v) for v in self.gamma_range))
        g_lo, g_hi = self.g_range
        c_lo, c_hi = self.gamma_range
        if int(self.n_tls) != self.n_tls or self.n_tls < 1:
            raise InvalidSpecError(f"n_tls must be a positive integer, got {self.n_tls}")
        if not self.spacing > 0:
            raise InvalidSpecError("spacing must be positive")
        if not (0 < g_lo <= g_hi):
            raise InvalidSpecError(f"bad g_range {self.g_range}")
        if not (0 < c_lo <= c_hi):
            raise InvalidSpecError(f"bad gamma_range {self.gamma_range}")
        if self.epsilon_layout not in LAYOUTS:
            raise InvalidSpecError(f"epsilon_layout must be one of {LAYOUTS}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpecError("seed must fit in 64 bits")

    @property
    def window(self) -> float:
        return self.n_tls * self.spacing

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g_range"] = list(self.g_range)
        d["gamma_range"] = list(self.gamma_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BathSpec":
        return cls(**d)

    def fingerprint(self, realization_index: int = 0) -> str:
        payload = json.dumps([self.to_dict(), int(realization_index)], sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class BathRealization:
    """An ordered set of TLSs (ascending ``epsilon``)."""

    tls: tuple[TlsParams, ...]
    spec_fingerprint: str = ""
    seed: int | None = None
    spec: BathSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tls", tuple(self.tls))
        eps = self.epsilon
        if len(eps) > 1 and np.any(np.diff(eps) < 0):
            raise InvalidSpecError("bath must be sorted by epsilon")

    def __len__(self):
        return len(self.tls)

    @property
    def epsilon(self) -> np.ndarray:
        return np.array([t.epsilon for t in self.tls], dtype=float)

    @property
    def g(self) -> np.ndarray:
        return np.array([t.g for t in self.tls], dtype=float)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([t.gamma for t in self.tls], dtype=float)

    @classmethod
    def from_arrays(cls, epsilon, g, gamma, **kwargs) -> "BathRealization":
        epsilon, g, gamma = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (epsilon, g, gamma))
        if not (epsilon.shape == g.shape == gamma.shape):
            raise InvalidSpecError("epsilon, g and gamma must have equal length")
        order = np.argsort(epsilon, kind="stable")
        tls = [TlsParams(float(e), float(c), float(r)) for e, c, r in zip(epsilon[order], g[order], gamma[order])]
        return cls(tls=tuple(tls), **kwargs)

    def union(self, other: "BathRealization") -> "BathRealization":
        return BathRealization.from_arrays(
            np.concatenate([self.epsilon, other.epsilon]),
            np.concatenate([self.g, other.g]),
            np.concatenate([self.gamma, other.gamma]),
        )

    def to_json(self) -> str:
        doc = {
            "epsilon": self.epsilon.tolist(),
            "g": self.g.tolist(),
            "gamma": self.gamma.tolist(),
            "seed": self.seed,
            "spec": None if self.spec is None else self.spec.to_dict(),
            "spec_fingerprint": self.spec_fingerprint,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BathRealization":
        doc = json.loads(text)
        spec = None if doc.get("spec") is None else BathSpec.from_dict(doc["spec"])
        return cls.from_arrays(
            doc["epsilon"], doc["g"], doc["gamma"],
            seed=doc.get("seed"), spec=spec,
            spec_fingerprint=doc.get("spec_fingerprint", ""),
        )


def make_rng(seed: int, realization_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Philox generator for substream ``realization_index`` of ``seed``.

    ``stream = 0`` is the bath's own stream; other values give independent
    side streams for the same realization (e.g. a random qubit splitting).
    """
    key = [int(seed) & (2**64 - 1), int(realization_index)]
    if stream:
        key.append(int(stream))
    ss = np.random.SeedSequence(key)
    return np.random.Generator(np.random.Philox(ss))


def _grid(n: int, spacing: float, center: float) -> np.ndarray:
    return center + (np.arange(n) - (n - 1) / 2.0) * spacing


def _draw_couplings(spec: BathSpec, rng: np.random.Generator, n: int):
    g = rng.uniform(*spec.g_range, size=n) if spec.g_range[0] < spec.g_range[1] else np.full(n, spec.g_range[0])
    gamma = (
        rng.uniform(*spec.gamma_range, size=n)
        if spec.gamma_range[0] < spec.gamma_range[1]
        else np.full(n, spec.gamma_range[0])
    )
    return g, gamma


def sample_bath(spec: BathSpec, realization_index: int = 0) -> BathRealization:
    """Draw one disorder realization.

    Splittings are drawn first (uniform layout only), then couplings, then
    decay rates, all from the substream of ``(spec.seed, realization_index)``.
    """
    if not isinstance(spec, BathSpec):
        raise InvalidSpecError("sample_bath expects a BathSpec")
    rng = make_rng(spec.seed, realization_index)
    n = spec.n_tls
    if spec.epsilon_layout == "equispaced":
        eps = _grid(n, spec.spacing, spec.center)
    else:
        half = spec.window / 2.0
        eps = rng.uniform(spec.center - half, spec.center + half, size=n)
    g, gamma = _draw_couplings(spec, rng, n)
    return BathRealization.from_arrays(
        eps, g, gamma, seed=spec.seed, spec=spec,
        spec_fingerprint=spec.fingerprint(realization_index),
    )


def mixed_bath(spec_weak: BathSpec, strong: TlsParams, position_index: int,
               realization_index: int = 0) -> BathRealization:
    """Weak bath plus one extra TLS sharing its equispaced grid.

    The grid is extended to ``n_tls + 1`` slots of the same spacing; the
    strong TLS takes slot ``position_index`` (its own ``epsilon`` is
    replaced by the slot energy) and the weak draws fill the others in
    order.
    """
    if not isinstance(spec_weak, BathSpec):
        raise InvalidSpecError("mixed_bath expects a BathSpec")
    if spec_weak.epsilon_layout != "equispaced":
        raise InvalidSpecError("mixed_bath needs an equispaced weak bath")
    n = spec_weak.n_tls
    if not 0 <= position_index <= n:
        raise IndexError(f"position_index must lie in [0, {n}], got {position_index}")
    weak = sample_bath(spec_weak, realization_index)
    slots = _grid(n + 1, spec_weak.spacing, spec_weak.center)
    g = np.insert(weak.g, position_index, strong.g)
    gamma = np.insert(weak.gamma, position_index, strong.gamma)
    return BathRealization.from_arrays(
        slots, g, gamma, seed=spec_weak.seed, spec=spec_weak,
        spec_fingerprint=spec_weak.fingerprint(realization_index) + f"+strong@{position_index}",
    )


# Figure parameters, in units of the modulation frequency.

def fig1a_spec(seed: int = 2021, layout: str = "equispaced", n_tls: int = 40) -> BathSpec:
    """40 weakly coupled TLSs, spacing 5/3, g in [2/3, 10/3]e-2, gamma in [2/3, 10/3]e-1."""
    return BathSpec(
        n_tls=n_tls, spacing=5.0 / 3.0,
        g_range=(2.0 / 3.0 * 1e-2, 10.0 / 3.0 * 1e-2),
        gamma_range=(2.0 / 3.0 * 1e-1, 10.0 / 3.0 * 1e-1),
        epsilon_layout=layout, seed=seed,
    )


def fig1b_tls(epsilon: float = 0.0) -> TlsParams:
    """Single strongly coupled TLS: g = 2/3e-1, gamma = 0.02."""
    return TlsParams(epsilon=epsilon, g=2.0 / 3.0 * 1e-1, gamma=0.02)


def figs1_tls(epsilon: float = 0.0) -> TlsParams:
    """Strongly coupled TLS with g comparable to the modulation frequency."""
    return TlsParams(epsilon=epsilon, g=0.2, gamma=2.0 / 3.0 * 1e-1)


def single_tls_bath(tls: TlsParams | Sequence[TlsParams]) -> BathRealization:
    items = [tls] if isinstance(tls, TlsParams) else list(tls)
    return BathRealization.from_arrays(
        [t.epsilon for t in items], [t.g for t in items], [t.gamma for t in items]
    )

