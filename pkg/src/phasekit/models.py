"""Concrete oscillator models.

Three ODE oscillators are provided:

* a polynomial-memductance relaxation oscillator (series resistor Rs, node
  capacitance Cp, memductance G(x) = sum d_i x^i, internal state dynamics
  polynomial in V^2 and x),
* the van der Pol oscillator (the main validation workhorse), and
* a three-stage inverter ring with tanh saturation.

Fields never contain an injection term: injected charge enters only through
instantaneous state jumps or pulse forcing routed via an InjectionPort.
All fields are vectorized over a leading batch axis and evaluate their
polynomials in Horner form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynsys import OdeSystem


@dataclass(frozen=True)
class MemristorParams:
    """Coefficients of the memristor oscillator ODE (SI units).

    dVm/dt = (Vdc - Vm)/(Rs*Cp) - (Vm/Cp) * sum_{i=0..5} d[i] * x^i
    dx/dt  = a0 + a1*x + b2*Vm^2 + sum_{i=1..5} c[i-1] * Vm^(2i) * x^i

    c holds (c2, c4, c6, c8, c10); d holds siemens-valued d0..d5.
    """

    Vdc: float
    Rs: float
    Cp: float
    d: tuple[float, float, float, float, float, float]
    a0: float
    a1: float
    b2: float
    c: tuple[float, float, float, float, float]

    def __post_init__(self):
        if self.Rs <= 0.0:
            raise ValueError(f"Rs must be > 0, got {self.Rs}")
        if self.Cp <= 0.0:
            raise ValueError(f"Cp must be > 0, got {self.Cp}")
        if len(self.d) != 6:
            raise ValueError("d must hold exactly 6 coefficients d0..d5")
        if len(self.c) != 5:
            raise ValueError("c must hold exactly 5 coefficients c2,c4,...,c10")
        values = (self.Vdc, self.Rs, self.Cp, self.a0, self.a1, self.b2,
                  *self.d, *self.c)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("all memristor coefficients must be finite")


@dataclass(frozen=True)
class InjectionPort:
    """Which state receives injected charge, and at what scaling.

    ``gain`` converts coulombs to state units; for a charge q landing on a
    capacitive node of capacitance Cp the jump is q/Cp, i.e. gain = 1/Cp.
    """

    state_index: int
    gain: float

    def __post_init__(self):
        if not math.isfinite(self.gain) or self.gain == 0.0:
            raise ValueError(f"injection gain must be finite and nonzero, got {self.gain}")


def _horner(coeffs, x):
    """sum coeffs[i] * x^i evaluated highest-order first."""
    acc = np.full_like(x, coeffs[-1], dtype=float) if isinstance(x, np.ndarray) \
        else coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * x + c
    return acc


def memristor_field(state: np.ndarray, p: MemristorParams) -> np.ndarray:
    vm = state[..., 0]
    x = state[..., 1]
    g = _horner(p.d, x)
    dvm = (p.Vdc - vm) / (p.Rs * p.Cp) - vm * g / p.Cp
    vm2 = vm * vm
    # sum_i c_{2i} Vm^{2i} x^i == sum_i c_{2i} u^i with u = Vm^2 * x
    u = vm2 * x
    csum = u * _horner(p.c, u)
    dx = p.a0 + p.a1 * x + p.b2 * vm2 + csum
    return np.stack([dvm, dx], axis=-1)


def memristor_jacobian(state: np.ndarray, p: MemristorParams) -> np.ndarray:
    vm = state[..., 0]
    x = state[..., 1]
    g = _horner(p.d, x)
    dg = _horner([i * p.d[i] for i in range(1, 6)], x)  # dG/dx
    vm2 = vm * vm
    u = vm2 * x
    s = _horner([(i + 1) * p.c[i] for i in range(5)], u)  # d(csum)/du
    j00 = -1.0 / (p.Rs * p.Cp) - g / p.Cp + 0.0 * vm
    j01 = -vm * dg / p.Cp
    j10 = 2.0 * vm * (p.b2 + x * s)
    j11 = p.a1 + vm2 * s + 0.0 * x
    return np.stack([np.stack([j00, j01], axis=-1),
                     np.stack([j10, j11], axis=-1)], axis=-2)


def vdp_field(state: np.ndarray, mu: float) -> np.ndarray:
    x = state[..., 0]
    y = state[..., 1]
    return np.stack([y, mu * (1.0 - x * x) * y - x], axis=-1)


def vdp_jacobian(state: np.ndarray, mu: float) -> np.ndarray:
    x = state[..., 0]
    y = state[..., 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    return np.stack([np.stack([zero, one], axis=-1),
                     np.stack([-2.0 * mu * x * y - 1.0,
                               mu * (1.0 - x * x)], axis=-1)], axis=-2)


def ring3_field(state: np.ndarray, gain: float, tau: float) -> np.ndarray:
    # dv_k/dt = (-v_k - tanh(gain * v_{k-1 mod 3})) / tau
    prev = np.stack([state[..., 2], state[..., 0], state[..., 1]], axis=-1)
    return (-state - np.tanh(gain * prev)) / tau


def vdp_system(mu: float) -> OdeSystem:
    """van der Pol oscillator; attracting cycle requires mu > 0."""
    if not mu > 0.0:
        raise ValueError(f"mu must be > 0, got {mu}")
    return OdeSystem(
        dim=2,
        state_names=("x", "y"),
        field=lambda s, p: vdp_field(s, p["mu"]),
        params={"mu": float(mu)},
        jacobian=lambda s, p: vdp_jacobian(s, p["mu"]),
        output_index=0,
    )


def memristor_system(p: MemristorParams) -> OdeSystem:
    return OdeSystem(
        dim=2,
        state_names=("Vm", "x"),
        field=memristor_field,
        params=p,
        jacobian=memristor_jacobian,
        output_index=0,
    )


def ring3_system(gain: float, tau: float) -> OdeSystem:
    """Three-stage tanh inverter ring; oscillation needs loop gain > 1."""
    if not gain > 1.0:
        raise ValueError(f"ring gain must be > 1 for oscillation, got {gain}")
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    # no closed-form jacobian registered: exercises the finite-difference path
    return OdeSystem(
        dim=3,
        state_names=("v1", "v2", "v3"),
        field=lambda s, p: ring3_field(s, p["gain"], p["tau"]),
        params={"gain": float(gain), "tau": float(tau)},
        output_index=0,
    )
