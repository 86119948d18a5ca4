"""Quadrokoptermodell: Z-X-Y-Rotation, Bewegungsgleichungen, Flachheitsabbildung und Rotoraufteilung.

Die Winkelgeschwindigkeit ``omega`` im Zustand ist im Körpersystem ausgedrückt.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InfeasibleInputError, InvalidInputError, SingularityError
from .planning.traj_qp import FlatTrajectory
from .schemas import QuadModelSpec

LOGGER = logging.getLogger(__name__)

FREE_FALL_TOLERANCE = 1e-6
GIMBAL_TOLERANCE = 1e-6
SKEW_TOLERANCE = 1e-6
ROTOR_FORCE_TOLERANCE = 1e-9

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class QuadModel:
    mass: float = 1.2
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.012, 0.012, 0.022]))
    arm_length: float = 0.17
    gravity: float = 9.81
    k_m: float = 0.016

    def __post_init__(self) -> None:
        inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0 or self.arm_length <= 0 or self.k_m <= 0 or self.gravity <= 0:
            raise InvalidInputError("Masse, Armlänge, k_M und g müssen positiv sein.")
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise InvalidInputError("Der Trägheitstensor muss eine symmetrische 3x3-Matrix sein.")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise InvalidInputError("Der Trägheitstensor muss positiv definit sein.")
        inertia.setflags(write=False)
        object.__setattr__(self, "inertia", inertia)

    @classmethod
    def from_spec(cls, spec: QuadModelSpec) -> QuadModel:
        return cls(
            mass=spec.mass_kg,
            inertia=np.array(spec.inertia_kgm2, dtype=float),
            arm_length=spec.arm_length_m,
            gravity=spec.gravity_mps2,
            k_m=spec.k_m_m,
        )

    @property
    def allocation_matrix(self) -> np.ndarray:
        """Bildet (F_1..F_4) auf (u1, u2) ab; Rotoren 1 und 3 drehen gegensinnig zu 2 und 4."""
        L, k = self.arm_length, self.k_m
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [0.0, L, 0.0, -L],
                [-L, 0.0, L, 0.0],
                [k, -k, k, -k],
            ]
        )


@dataclass(frozen=True)
class QuadState:
    position: np.ndarray
    velocity: np.ndarray
    rotation: np.ndarray
    omega: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.rotation.reshape(9), self.omega])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> QuadState:
        return cls(vector[0:3].copy(), vector[3:6].copy(), vector[6:15].reshape(3, 3).copy(), vector[15:18].copy())


@dataclass(frozen=True)
class QuadInput:
    thrust: float
    moment: np.ndarray


@dataclass(frozen=True)
class StateDerivative:
    velocity: np.ndarray
    acceleration: np.ndarray
    rotation_rate: np.ndarray
    angular_acceleration: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.velocity, self.acceleration, self.rotation_rate.reshape(9), self.angular_acceleration]
        )


@dataclass(frozen=True)
class FlatSample:
    """sigma = (x, y, z, psi) und die Ableitungen 1..4; Zeile k enthält die k-te Ableitung."""

    derivatives: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.derivatives, dtype=float)
        if values.shape != (5, 4) or not np.all(np.isfinite(values)):
            raise InvalidInputError(f"FlatSample erwartet ein endliches (5, 4)-Array, erhalten {values.shape}.")
        object.__setattr__(self, "derivatives", values)

    def position(self, k: int = 0) -> np.ndarray:
        return self.derivatives[k, :3]

    def yaw(self, k: int = 0) -> float:
        return float(self.derivatives[k, 3])


def skew(v: Sequence[float] | np.ndarray) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def euler_zxy_to_rotation(psi: float, phi: float, theta: float) -> np.ndarray:
    """R = R_z(psi) R_x(phi) R_y(theta)."""
    return Rotation.from_euler("ZXY", [psi, phi, theta]).as_matrix()


def rotation_to_euler_zxy(R: np.ndarray) -> tuple[float, float, float]:
    """Umkehrung von :func:`euler_zxy_to_rotation`; liefert (psi, phi, theta)."""
    sin_phi = float(np.clip(R[2, 1], -1.0, 1.0))
    if 1.0 - abs(sin_phi) < GIMBAL_TOLERANCE:
        raise SingularityError(f"Kardanische Blockade: sin(phi) = {sin_phi:.9f}.")
    phi = math.asin(sin_phi)
    psi = math.atan2(-R[0, 1], R[1, 1])
    theta = math.atan2(-R[2, 0], R[2, 2])
    return psi, phi, theta


def omega_from_rotation_rate(R: np.ndarray, R_dot: np.ndarray) -> np.ndarray:
    """Winkelgeschwindigkeit im Weltsystem aus S(omega) = dR/dt R^T."""
    S = np.asarray(R_dot, dtype=float) @ np.asarray(R, dtype=float).T
    asymmetry = float(np.max(np.abs(S + S.T)))
    if asymmetry > SKEW_TOLERANCE:
        raise InvalidInputError(f"dR/dt R^T ist nicht schiefsymmetrisch (Abweichung {asymmetry:.3e}).")
    return vee(0.5 * (S - S.T))


def flat_to_state_input(sample: FlatSample, model: QuadModel) -> tuple[QuadState, QuadInput]:
    """Flachheitsabbildung: Zustand und Eingang aus sigma und seinen Ableitungen bis zur vierten."""
    acceleration = sample.position(2)
    jerk = sample.position(3)
    snap = sample.position(4)
    psi, psi_dot, psi_ddot = sample.yaw(0), sample.yaw(1), sample.yaw(2)

    thrust_vector = acceleration + model.gravity * E_Z
    norm = float(np.linalg.norm(thrust_vector))
    if norm < FREE_FALL_TOLERANCE:
        raise SingularityError("Freier Fall: Beschleunigung plus Gravitation verschwindet.")
    z_b = thrust_vector / norm

    x_c = np.array([math.cos(psi), math.sin(psi), 0.0])
    y_c = np.array([-math.sin(psi), math.cos(psi), 0.0])
    y_raw = np.cross(z_b, x_c)
    y_norm = float(np.linalg.norm(y_raw))
    if y_norm < GIMBAL_TOLERANCE:
        raise SingularityError("Schubrichtung parallel zur Gierrichtung (kardanische Blockade).")
    y_b = y_raw / y_norm
    x_b = np.cross(y_b, z_b)
    R = np.column_stack([x_b, y_b, z_b])

    # Erste Ableitungen: z_B' und die Körperraten p, q, r.
    norm_dot = float(z_b @ jerk)
    z_dot = (jerk - z_b * norm_dot) / norm
    p = -float(z_dot @ y_b)
    q = float(z_dot @ x_b)
    a = float(x_b @ x_c)
    b = float(z_b @ x_c)
    c = float(y_b @ y_c)
    if abs(a) < GIMBAL_TOLERANCE:
        raise SingularityError("Körper-x-Achse senkrecht zur Gierrichtung.")
    r = (p * b + psi_dot * c) / a

    # Zweite Ableitungen: z_B'' und die Winkelbeschleunigungen.
    norm_ddot = float(z_dot @ jerk + z_b @ snap)
    z_ddot = (snap - 2.0 * z_dot * norm_dot - z_b * norm_ddot) / norm
    q_dot = float(z_ddot @ x_b) - p * r
    p_dot = q * r - float(z_ddot @ y_b)
    xb_yc = float(x_b @ y_c)
    zb_yc = float(z_b @ y_c)
    a_dot = -q * b + psi_dot * xb_yc
    b_dot = q * a + psi_dot * zb_yc
    c_dot = -r * xb_yc + p * zb_yc
    r_dot = (p_dot * b + p * b_dot + psi_ddot * c + psi_dot * c_dot - r * a_dot) / a

    omega = np.array([p, q, r])
    omega_dot = np.array([p_dot, q_dot, r_dot])
    moment = model.inertia @ omega_dot + np.cross(omega, model.inertia @ omega)
    state = QuadState(
        position=sample.position(0).copy(),
        velocity=sample.position(1).copy(),
        rotation=R,
        omega=omega,
    )
    return state, QuadInput(thrust=model.mass * norm, moment=moment)


def flat_sample_at(trajectory: FlatTrajectory, t: float) -> FlatSample:
    return FlatSample(trajectory.derivatives(t, max_order=4))


def forward_dynamics(state: QuadState, control: QuadInput, model: QuadModel) -> StateDerivative:
    """m r'' = -m g e_z + R u1 e_z, dR/dt = R S(omega), I omega' = u2 - omega x I omega."""
    acceleration = -model.gravity * E_Z + state.rotation @ (control.thrust * E_Z) / model.mass
    gyroscopic = np.cross(state.omega, model.inertia @ state.omega)
    angular_acceleration = np.linalg.solve(model.inertia, np.asarray(control.moment, dtype=float) - gyroscopic)
    return StateDerivative(
        velocity=np.asarray(state.velocity, dtype=float).copy(),
        acceleration=acceleration,
        rotation_rate=state.rotation @ skew(state.omega),
        angular_acceleration=angular_acceleration,
    )


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nächste Rotationsmatrix im Frobenius-Sinn (Polarzerlegung über SVD)."""
    U, _, Vt = np.linalg.svd(R)
    if np.linalg.det(U @ Vt) < 0:
        U[:, -1] = -U[:, -1]
    return U @ Vt


def rk4_step(
    state: QuadState,
    control: QuadInput | Callable[[float], QuadInput],
    model: QuadModel,
    dt: float,
    t: float = 0.0,
) -> QuadState:
    """Ein klassischer Runge-Kutta-Schritt; ``control`` ist konstant oder eine Funktion der Zeit."""
    if dt <= 0:
        raise InvalidInputError(f"Schrittweite muss positiv sein, erhalten: {dt}")
    control_at = control if callable(control) else (lambda _: control)

    def derivative(vector: np.ndarray, time: float) -> np.ndarray:
        return forward_dynamics(QuadState.from_vector(vector), control_at(time), model).as_vector()

    y = state.as_vector()
    k1 = derivative(y, t)
    k2 = derivative(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = derivative(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = derivative(y + dt * k3, t + dt)
    stepped = QuadState.from_vector(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return QuadState(stepped.position, stepped.velocity, orthonormalize(stepped.rotation), stepped.omega)


def allocate_rotors(control: QuadInput, model: QuadModel, check: bool = True) -> np.ndarray:
    """Rotorkräfte F_1..F_4 zu (u1, u2); negative Kräfte werden gemeldet, nicht begrenzt."""
    wrench = np.concatenate([[control.thrust], np.asarray(control.moment, dtype=float)])
    forces = np.linalg.solve(model.allocation_matrix, wrench)
    if check and np.any(forces < -ROTOR_FORCE_TOLERANCE):
        LOGGER.debug("Negative Rotorkraft: %s", forces.tolist())
        raise InfeasibleInputError(f"Rotorkräfte nicht realisierbar: {forces.tolist()}", forces=forces.tolist())
    return forces


def input_from_rotors(forces: Sequence[float] | np.ndarray, model: QuadModel) -> QuadInput:
    wrench = model.allocation_matrix @ np.asarray(forces, dtype=float)
    return QuadInput(thrust=float(wrench[0]), moment=wrench[1:])
