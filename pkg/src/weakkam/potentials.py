"""Periodic, rearrangement-invariant potentials on particle configurations.

Every potential is built from 1-periodic scalar functions given by a finite
Fourier series.  Two families are symmetric under relabeling and integer
shifts by construction:

* one-body averages   ``W(x) = (1/n) sum_i f(x_i)``
* pairwise averages   ``W(x) = (1/n^2) sum_i sum_j w(x_i - x_j)``

and sums of those.  The bound ``K0 >= sup |W|`` is read off the
coefficients, so it is certified rather than sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PeriodicFunction:
    """``f(x) = const + sum_k cos[k-1] cos(2 pi k x) + sin[k-1] sin(2 pi k x)``."""

    const: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        coeffs = (self.const, *self.cos, *self.sin)
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("Fourier coefficients must be finite")

    @classmethod
    def builtin(cls, name: str, amplitude: float = 1.0, frequency: int = 1, phase: float = 0.0):
        if int(frequency) != frequency or frequency < 1:
            raise ValueError(f"frequency must be a positive integer, got {frequency!r}")
        k = int(frequency)
        pad = [0.0] * (k - 1)
        if name == "cosine":
            return cls(0.0, tuple(pad + [amplitude]), ())
        if name == "sine":
            return cls(0.0, (), tuple(pad + [amplitude]))
        if name == "shifted_cosine":
            # cos(2 pi k (x - phase)) expanded in the cos/sin basis
            a = amplitude * math.cos(TWO_PI * k * phase)
            b = amplitude * math.sin(TWO_PI * k * phase)
            return cls(0.0, tuple(pad + [a]), tuple(pad + [b]))
        raise ValueError(f"unknown built-in function {name!r}")

    @property
    def bound(self) -> float:
        K = max(len(self.cos), len(self.sin))
        a = list(self.cos) + [0.0] * (K - len(self.cos))
        b = list(self.sin) + [0.0] * (K - len(self.sin))
        return abs(self.const) + sum(math.hypot(ak, bk) for ak, bk in zip(a, b))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.const))
        for k, a in enumerate(self.cos, start=1):
            if a:
                out = out + a * np.cos(TWO_PI * k * x)
        for k, b in enumerate(self.sin, start=1):
            if b:
                out = out + b * np.sin(TWO_PI * k * x)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, a in enumerate(self.cos, start=1):
            if a:
                out = out - a * TWO_PI * k * np.sin(TWO_PI * k * x)
        for k, b in enumerate(self.sin, start=1):
            if b:
                out = out + b * TWO_PI * k * np.cos(TWO_PI * k * x)
        return out

    def scaled(self, a: float) -> "PeriodicFunction":
        return PeriodicFunction(a * self.const, tuple(a * c for c in self.cos), tuple(a * s for s in self.sin))

    def to_dict(self) -> dict:
        return {"const": self.const, "cos": list(self.cos), "sin": list(self.sin)}


KINDS = ("zero", "one_body", "pairwise", "sum")


@dataclass(frozen=True)
class Potential:
    """A symmetric potential; evaluate with ``W(x)`` on arrays of shape (..., n)."""

    kind: str
    f: PeriodicFunction | None = None
    parts: tuple["Potential", ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind in ("one_body", "pairwise") and self.f is None:
            raise ValueError(f"{self.kind} potential needs a function")

    # constructors

    @classmethod
    def zero(cls) -> "Potential":
        return cls("zero")

    @classmethod
    def one_body(cls, f: PeriodicFunction) -> "Potential":
        return cls("one_body", f)

    @classmethod
    def pairwise(cls, w: PeriodicFunction) -> "Potential":
        return cls("pairwise", w)

    @classmethod
    def sum(cls, *parts: "Potential") -> "Potential":
        return cls("sum", None, tuple(parts))

    @classmethod
    def cosine(cls, amplitude: float = 1.0) -> "Potential":
        """One-body ``amplitude * cos(2 pi x)``: the pendulum."""
        return cls.one_body(PeriodicFunction.builtin("cosine", amplitude))

    def shifted(self, kappa: float) -> "Potential":
        return Potential.sum(self, Potential.one_body(PeriodicFunction(const=kappa)))

    def scaled(self, a: float) -> "Potential":
        if self.kind == "zero":
            return self
        if self.kind == "sum":
            return Potential.sum(*(p.scaled(a) for p in self.parts))
        return Potential(self.kind, self.f.scaled(a))

    # evaluation

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        if self.kind == "zero":
            out = np.zeros(x.shape[:-1])
        elif self.kind == "one_body":
            out = np.sum(self.f(x), axis=-1) / n
        elif self.kind == "pairwise":
            diff = x[..., :, None] - x[..., None, :]
            out = np.sum(self.f(diff), axis=(-2, -1)) / (n * n)
        else:
            out = np.zeros(x.shape[:-1])
            for p in self.parts:
                out = out + p(x)
        return float(out) if out.ndim == 0 else out

    def grad(self, x) -> np.ndarray:
        """Partial derivatives with respect to each lifted coordinate."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        if self.kind == "zero":
            return np.zeros(x.shape)
        if self.kind == "one_body":
            return self.f.derivative(x) / n
        if self.kind == "pairwise":
            d = self.f.derivative(x[..., :, None] - x[..., None, :])
            return (np.sum(d, axis=-1) - np.sum(d, axis=-2)) / (n * n)
        out = np.zeros(x.shape)
        for p in self.parts:
            out = out + p.grad(x)
        return out

    @property
    def K0(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind in ("one_body", "pairwise"):
            return self.f.bound
        return math.fsum(p.K0 for p in self.parts)

    # (de)serialization for run configs

    def to_dict(self) -> dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "sum":
            return {"kind": "sum", "parts": [p.to_dict() for p in self.parts]}
        return {"kind": self.kind, "function": self.f.to_dict()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], path: str = "potential") -> "Potential":
        if not isinstance(data, Mapping):
            raise ValueError(f"{path}: expected a mapping")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ValueError(f"{path}.kind: expected one of {list(KINDS)}, got {kind!r}")
        if kind == "zero":
            return cls.zero()
        if kind == "sum":
            parts = data.get("parts")
            if not isinstance(parts, list) or not parts:
                raise ValueError(f"{path}.parts: expected a non-empty list")
            return cls.sum(*(cls.from_dict(p, f"{path}.parts[{i}]") for i, p in enumerate(parts)))
        fdata = data.get("function")
        if not isinstance(fdata, Mapping):
            raise ValueError(f"{path}.function: expected a mapping")
        try:
            if "builtin" in fdata:
                f = PeriodicFunction.builtin(
                    fdata["builtin"],
                    float(fdata.get("amplitude", 1.0)),
                    fdata.get("frequency", 1),
                    float(fdata.get("phase", 0.0)),
                )
            else:
                f = PeriodicFunction(
                    float(fdata.get("const", 0.0)),
                    tuple(float(c) for c in fdata.get("cos", ())),
                    tuple(float(s) for s in fdata.get("sin", ())),
                )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}.function: {exc}") from None
        return cls(kind, f)


def eval_potential(W: Potential, C) -> float:
    """``W`` at a ParticleConfig or LiftedConfig."""
    pts = C.points if hasattr(C, "points") else C.reals
    return float(W(np.asarray(pts, dtype=float)))


def grad_potential(W: Potential, C) -> np.ndarray:
    pts = C.reals if hasattr(C, "reals") else C.points
    return W.grad(np.asarray(pts, dtype=float))


def certify_bound(W: Potential) -> float:
    return W.K0
