"""Problem definitions: Hamiltonian, coupling and spatial potentials.

The shipped closed forms are the power family

    H(x, p) = kappa |p|^r + V(x),        f(x, m) = c_f m^(q-1) + g(x).

Both also accept user callbacks (``evaluator``) for anything else; the
conjugates of callback specs are computed numerically in ``conjugates``.
At construction the problem is normalised so that ``f(x, 0) <= 0`` on the grid
probe: when ``s = max f(x, 0) > 0`` both H and f are lowered by ``s`` (the
system is invariant under that shift) and ``s`` is stored in ``shift``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, UsageError

POTENTIAL_KINDS = ("zero", "constant", "cosine", "example", "callback")
PROBE_POINTS = 257


def _triangle_wave(x):
    from .example import example_potential

    return example_potential(x)


@dataclass(frozen=True)
class Potential:
    """Named spatial potential. ``x`` has shape ``(...,)`` in 1-D, ``(..., 2)`` in 2-D.

    ``cosine`` is ``amplitude * prod_k cos(2 pi frequency x_k)``; ``example``
    is the triangle wave of the worked example scaled by ``amplitude``.
    """

    kind: str = "zero"
    amplitude: float = 1.0
    frequency: int = 1
    function: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise UsageError(f"unknown potential kind {self.kind!r}; choose from {POTENTIAL_KINDS}")
        if self.kind == "callback" and self.function is None:
            raise UsageError("callback potential needs a function")

    def __call__(self, x, d: int = 1):
        """Evaluate at ``x``; in 2-D the last axis of ``x`` holds the coordinates."""
        x = np.asarray(x, dtype=float)
        base = x.shape if d == 1 else x.shape[:-1]
        if self.kind == "zero":
            return np.zeros(base)
        if self.kind == "constant":
            return np.full(base, float(self.amplitude))
        if self.kind == "cosine":
            c = np.cos(2.0 * np.pi * self.frequency * x)
            return self.amplitude * (c if d == 1 else np.prod(c, axis=-1))
        if self.kind == "example":
            w = _triangle_wave(x)
            return self.amplitude * (w if d == 1 else np.sum(w, axis=-1))
        return np.broadcast_to(np.asarray(self.function(x), dtype=float), base)

    def sup(self, d: int = 1):
        """Exact supremum over the torus for named kinds, ``None`` for callbacks."""
        a = float(self.amplitude)
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return a
        if self.kind == "cosine":
            return abs(a)
        if self.kind == "example":
            return 4.0 * abs(a) * d
        return None

    def to_dict(self) -> dict:
        if self.kind == "callback":
            raise ConfigError("callback potentials are not serialisable", "potential")
        return {"kind": self.kind, "amplitude": float(self.amplitude), "frequency": int(self.frequency)}

    @classmethod
    def from_dict(cls, data: dict, location: str = "potential") -> "Potential":
        return cls(**_checked(data, {"kind", "amplitude", "frequency"}, location))


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H(x, p) = kappa |p|^exponent + V(x)`` unless ``evaluator`` is given.

    A callback ``evaluator(x, p) -> H`` takes coordinates ``(N, d)`` and momenta
    ``(N, d)``; ``gradient(x, p) -> D_p H`` is optional.  ``exponent`` remains
    the growth exponent r used for bookkeeping.
    """

    kappa: float = 0.5
    exponent: float = 2.0
    potential: Potential = Potential()
    evaluator: Optional[Callable] = field(default=None, compare=False)
    gradient: Optional[Callable] = field(default=None, compare=False)

    @property
    def is_power(self) -> bool:
        return self.evaluator is None

    def to_dict(self) -> dict:
        if not self.is_power:
            raise ConfigError("callback Hamiltonians are not serialisable", "hamiltonian")
        return {"kappa": float(self.kappa), "exponent": float(self.exponent),
                "potential": self.potential.to_dict()}

    @classmethod
    def from_dict(cls, data: dict, location: str = "hamiltonian") -> "HamiltonianSpec":
        data = _checked(data, {"kappa", "exponent", "potential"}, location)
        if "potential" in data:
            data["potential"] = Potential.from_dict(data["potential"], f"{location}.potential")
        return cls(**{k: (float(v) if k != "potential" else v) for k, v in data.items()})


@dataclass(frozen=True)
class CouplingSpec:
    """``f(x, m) = coefficient m^(exponent-1) + g(x)`` unless ``evaluator`` is given.

    Callback form: ``evaluator(x, m) -> f`` vectorised over matching arrays,
    strictly increasing in m; ``inverse(x, a) -> m`` is optional.
    """

    coefficient: float = 1.0
    exponent: float = 2.0
    potential: Potential = Potential()
    evaluator: Optional[Callable] = field(default=None, compare=False)
    inverse: Optional[Callable] = field(default=None, compare=False)

    @property
    def is_power(self) -> bool:
        return self.evaluator is None

    def to_dict(self) -> dict:
        if not self.is_power:
            raise ConfigError("callback couplings are not serialisable", "coupling")
        return {"coefficient": float(self.coefficient), "exponent": float(self.exponent),
                "potential": self.potential.to_dict()}

    @classmethod
    def from_dict(cls, data: dict, location: str = "coupling") -> "CouplingSpec":
        data = _checked(data, {"coefficient", "exponent", "potential"}, location)
        if "potential" in data:
            data["potential"] = Potential.from_dict(data["potential"], f"{location}.potential")
        return cls(**{k: (float(v) if k != "potential" else v) for k, v in data.items()})


def _checked(data, allowed, location):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a table, got {type(data).__name__}", location)
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", location)
    return dict(data)


def _probe(d):
    t = (np.arange(PROBE_POINTS) + 0.5) / PROBE_POINTS
    if d == 1:
        return t
    return np.stack(np.meshgrid(t[::8], t[::8], indexing="ij"), -1).reshape(-1, 2)


@dataclass(frozen=True)
class ProblemSpec:
    """One MFG instance on the d-torus.

    All evaluators below include the normalisation ``shift``.
    """

    hamiltonian: HamiltonianSpec = HamiltonianSpec()
    coupling: CouplingSpec = CouplingSpec()
    dimension: int = 1
    shift: float = field(init=False, default=0.0)

    def __post_init__(self):
        hs, cs = self.hamiltonian, self.coupling
        if self.dimension not in (1, 2):
            raise UsageError(f"dimension must be 1 or 2, got {self.dimension}")
        for name, val in (("hamiltonian.exponent", hs.exponent), ("coupling.exponent", cs.exponent)):
            if not (math.isfinite(val) and val > 1.0):
                raise UsageError(f"{name} must be a real number > 1, got {val}")
        if hs.is_power and not hs.kappa > 0:
            raise UsageError(f"hamiltonian.kappa must be positive, got {hs.kappa}")
        if cs.is_power and not cs.coefficient > 0:
            raise UsageError(f"coupling.coefficient must be positive, got {cs.coefficient}")
        x = _probe(self.dimension)
        sup_g = cs.potential.sup(self.dimension) if cs.is_power else None
        if sup_g is None:
            sup_g = float(np.max(self._raw_f(x, np.zeros(self._base(x)))))
        object.__setattr__(self, "shift", max(0.0, sup_g))
        self._check_structure(x)

    # exponents
    @property
    def r(self) -> float:
        return float(self.hamiltonian.exponent)

    @property
    def q(self) -> float:
        return float(self.coupling.exponent)

    @property
    def p(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def r_conj(self) -> float:
        return self.r / (self.r - 1.0)

    @property
    def is_power(self) -> bool:
        return self.hamiltonian.is_power and self.coupling.is_power

    # potentials
    def V(self, x) -> np.ndarray:
        """Hamiltonian potential after normalisation (power form only)."""
        return self.hamiltonian.potential(x, self.dimension) - self.shift

    def g(self, x) -> np.ndarray:
        """``f(x, 0)`` after normalisation."""
        x = np.asarray(x, float)
        return self._raw_f(x, np.zeros(self._base(x))) - self.shift

    def _base(self, x):
        return np.shape(x) if self.dimension == 1 else np.shape(x)[:-1]

    # evaluators
    def _raw_f(self, x, m):
        cs = self.coupling
        if cs.is_power:
            return cs.coefficient * np.power(m, cs.exponent - 1.0) + cs.potential(x, self.dimension)
        return np.asarray(cs.evaluator(x, m), dtype=float)

    def f(self, x, m) -> np.ndarray:
        return self._raw_f(np.asarray(x, float), np.asarray(m, float)) - self.shift

    def kinetic(self, p) -> np.ndarray:
        """Power-form kinetic part ``kappa |p|^r``; in 2-D the last axis of p is the vector index."""
        p = np.asarray(p, dtype=float)
        a = np.abs(p) if self.dimension == 1 else np.linalg.norm(p, axis=-1)
        return self.hamiltonian.kappa * np.power(a, self.r)

    def H(self, x, p) -> np.ndarray:
        """``H(x, p)``.  In 1-D p may be a plain array; in 2-D the last axis is the vector index."""
        hs = self.hamiltonian
        if hs.is_power:
            return self.kinetic(p) + self.V(x)
        return np.asarray(hs.evaluator(np.asarray(x, float), np.asarray(p, float)), dtype=float) - self.shift

    def H0(self, x) -> np.ndarray:
        """``H(x, 0)``."""
        x = np.asarray(x, float)
        return self.H(x, np.zeros(x.shape))

    def require_power(self, what: str):
        if not self.is_power:
            raise UsageError(f"{what} needs the power-form Hamiltonian and coupling")

    # validation
    def _check_structure(self, x):
        ms = np.linspace(0.0, 10.0, 41)
        for xi in x[:: max(1, len(x) // 16)]:
            xs = np.broadcast_to(xi, (ms.size,) + np.shape(xi))
            vals = self._raw_f(xs, ms)
            if not np.all(np.diff(vals) > 0):
                raise UsageError("coupling f(x, .) must be strictly increasing in m")
        if not self.hamiltonian.is_power:
            ps = np.linspace(-5.0, 5.0, 21)
            for xi in x[:: max(1, len(x) // 8)]:
                if self.dimension == 1:
                    a, b = np.meshgrid(ps, ps, indexing="ij")
                    xs = np.full(a.shape, xi)
                    mid = self.H(xs, 0.5 * (a + b))
                    avg = 0.5 * (self.H(xs, a) + self.H(xs, b))
                else:
                    rng = np.random.default_rng(0)
                    a, b = rng.uniform(-5, 5, (2, 64, 2))
                    xs = np.broadcast_to(xi, (64, 2))
                    mid = self.H(xs, 0.5 * (a + b))
                    avg = 0.5 * (self.H(xs, a) + self.H(xs, b))
                if np.any(mid > avg + 1e-9 * (1 + np.abs(avg))):
                    raise UsageError("Hamiltonian H(x, .) must be convex")
        if self.dimension == 2 and self.hamiltonian.is_power and self.r != 2.0:
            warnings.warn(
                "solvers use an axis-separable kinetic stencil in 2-D, which equals "
                "kappa|p|^r only for r = 2",
                stacklevel=3,
            )

    def stability_condition(self) -> bool:
        """Sufficient condition for compactness in the vanishing-discount limit:
        ``q >= d`` or ``r' <= q d / (d - q)``."""
        d, q = self.dimension, self.q
        return q >= d or self.r_conj <= q * d / (d - q)

    # serialisation
    def to_dict(self) -> dict:
        return {"dimension": int(self.dimension), "hamiltonian": self.hamiltonian.to_dict(),
                "coupling": self.coupling.to_dict()}

    @classmethod
    def from_dict(cls, data: dict, location: str = "problem") -> "ProblemSpec":
        data = _checked(data, {"dimension", "hamiltonian", "coupling"}, location)
        kw = {}
        if "dimension" in data:
            kw["dimension"] = int(data["dimension"])
        if "hamiltonian" in data:
            kw["hamiltonian"] = HamiltonianSpec.from_dict(data["hamiltonian"], f"{location}.hamiltonian")
        if "coupling" in data:
            kw["coupling"] = CouplingSpec.from_dict(data["coupling"], f"{location}.coupling")
        try:
            return cls(**kw)
        except UsageError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), location) from exc

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


def power_spec(kappa=0.5, r=2.0, V=None, c_f=1.0, q=2.0, g=None, dimension=1) -> ProblemSpec:
    """Shorthand for the power family."""
    return ProblemSpec(
        hamiltonian=HamiltonianSpec(kappa, r, V or Potential()),
        coupling=CouplingSpec(c_f, q, g or Potential()),
        dimension=dimension,
    )


def flat_spec(dimension=1) -> ProblemSpec:
    """``H = |p|^2 / 2``, ``f(m) = m``: the constant-solution instance."""
    return power_spec(dimension=dimension)
