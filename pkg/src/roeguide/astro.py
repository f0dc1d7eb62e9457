"""Absolute orbit states, frame rotations and the mean/osculating element maps.

Orbital elements use the quasi-nonsingular set ``(a, u, ex, ey, i, raan)``
where ``u`` is the *mean* argument of latitude and ``(ex, ey)`` is the
eccentricity vector measured from the ascending node. Angles are radians,
lengths meters.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class EarthModel:
    """Gravity constants shared by every module."""

    mu: float = 3.986004418e14  # m^3/s^2
    radius: float = 6378.137e3  # m, equatorial
    j2: float = 1.08263e-3


EARTH = EarthModel()


class Flavor(str, enum.Enum):
    MEAN = "mean"
    OSCULATING = "osculating"


class ElementError(ValueError):
    """Raised for element sets or states outside the supported domain."""


def wrap_2pi(angle):
    return np.mod(angle, TWO_PI)


def wrap_pi(angle):
    """Wrap to the symmetric interval (-pi, pi]."""
    out = np.mod(np.asarray(angle, dtype=float) + math.pi, TWO_PI) - math.pi
    out = np.where(out == -math.pi, math.pi, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class OrbitalElements:
    """Quasi-nonsingular orbital elements.

    Attributes:
        a: semi-major axis [m]
        u: mean argument of latitude [rad]
        ex, ey: eccentricity vector components [-]
        i: inclination [rad]
        raan: right ascension of the ascending node [rad]
        flavor: mean or osculating
    """

    a: float
    u: float
    ex: float
    ey: float
    i: float
    raan: float
    flavor: Flavor = Flavor.OSCULATING

    def __post_init__(self):
        if not (self.a > 0.0) or not math.isfinite(self.a):
            raise ElementError(f"semi-major axis must be positive, got {self.a}")
        if math.hypot(self.ex, self.ey) >= 1.0:
            raise ElementError("eccentricity must be < 1 (only elliptic orbits are supported)")
        if not (0.0 <= self.i <= math.pi):
            raise ElementError(f"inclination must lie in [0, pi], got {self.i}")
        object.__setattr__(self, "u", float(wrap_2pi(self.u)))
        object.__setattr__(self, "raan", float(wrap_2pi(self.raan)))
        object.__setattr__(self, "flavor", Flavor(self.flavor))

    @property
    def e(self) -> float:
        return math.hypot(self.ex, self.ey)

    @property
    def argp(self) -> float:
        return math.atan2(self.ey, self.ex) % TWO_PI

    def mean_motion(self, body: EarthModel = EARTH) -> float:
        return math.sqrt(body.mu / self.a**3)

    def period(self, body: EarthModel = EARTH) -> float:
        return TWO_PI / self.mean_motion(body)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.u, self.ex, self.ey, self.i, self.raan])

    @classmethod
    def from_array(cls, values, flavor=Flavor.OSCULATING) -> "OrbitalElements":
        a, u, ex, ey, i, raan = (float(v) for v in values)
        return cls(a, u, ex, ey, i, raan, flavor)

    def with_flavor(self, flavor) -> "OrbitalElements":
        return replace(self, flavor=Flavor(flavor))


@dataclass(frozen=True)
class CartesianState:
    """Inertial position [m] and velocity [m/s]."""

    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.r, self.v])

    @classmethod
    def from_array(cls, values) -> "CartesianState":
        values = np.asarray(values, dtype=float)
        return cls(values[:3], values[3:6])

    def energy(self, mu: float = EARTH.mu) -> float:
        return 0.5 * float(self.v @ self.v) - mu / float(np.linalg.norm(self.r))


@dataclass(frozen=True)
class RoeState:
    """Dimensional relative orbital elements, all in meters."""

    da: float
    dlambda: float
    dex: float
    dey: float
    dix: float
    diy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.da, self.dlambda, self.dex, self.dey, self.dix, self.diy])

    @classmethod
    def from_array(cls, values) -> "RoeState":
        return cls(*(float(v) for v in np.asarray(values, dtype=float).reshape(6)))


@dataclass(frozen=True)
class RtnFrame:
    """Rotation from RTN to inertial axes; columns are R, T, N unit vectors."""

    rotation: np.ndarray = field(repr=False)

    def to_inertial(self, vec_rtn) -> np.ndarray:
        return self.rotation @ np.asarray(vec_rtn, dtype=float)

    def to_rtn(self, vec_inertial) -> np.ndarray:
        return self.rotation.T @ np.asarray(vec_inertial, dtype=float)


# ---------------------------------------------------------------------------
# Vectorized conversions on (..., 6) arrays


def _solve_kepler(mean_anomaly, e):
    ecc_anomaly = np.array(mean_anomaly, dtype=float, copy=True)
    ecc_anomaly = ecc_anomaly + e * np.sin(ecc_anomaly)
    for _ in range(30):
        f = ecc_anomaly - e * np.sin(ecc_anomaly) - mean_anomaly
        step = f / (1.0 - e * np.cos(ecc_anomaly))
        ecc_anomaly = ecc_anomaly - step
        if np.all(np.abs(step) < 1e-15):
            break
    return ecc_anomaly


def elements_to_rv(elements, mu: float = EARTH.mu):
    """Element arrays (..., 6) to position and velocity arrays (..., 3)."""
    el = np.asarray(elements, dtype=float)
    a, u, ex, ey, inc, raan = np.moveaxis(el, -1, 0)
    e = np.hypot(ex, ey)
    argp = np.arctan2(ey, ex)
    mean_anomaly = u - argp
    ecc_anomaly = _solve_kepler(mean_anomaly, e)
    eta = np.sqrt(1.0 - e * e)
    nu = np.arctan2(eta * np.sin(ecc_anomaly), np.cos(ecc_anomaly) - e)
    theta = nu + argp
    radius = a * (1.0 - e * np.cos(ecc_anomaly))
    p = a * eta * eta

    ct, st = np.cos(theta), np.sin(theta)
    co, so = np.cos(raan), np.sin(raan)
    ci, si = np.cos(inc), np.sin(inc)
    r_hat = np.stack([co * ct - so * st * ci, so * ct + co * st * ci, st * si], axis=-1)
    t_hat = np.stack([-co * st - so * ct * ci, -so * st + co * ct * ci, ct * si], axis=-1)

    vfac = np.sqrt(mu / p)
    v_r = vfac * (ex * st - ey * ct)
    v_t = vfac * (1.0 + ex * ct + ey * st)
    r = radius[..., None] * r_hat
    v = v_r[..., None] * r_hat + v_t[..., None] * t_hat
    return r, v


def rv_to_elements(r, v, mu: float = EARTH.mu):
    """Position/velocity arrays (..., 3) to element arrays (..., 6).

    No validity checks; see :func:`cartesian_to_oe` for the checked scalar API.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rmag = np.linalg.norm(r, axis=-1)
    h = np.cross(r, v)
    hmag = np.linalg.norm(h, axis=-1)
    h_xy = np.hypot(h[..., 0], h[..., 1])
    inc = np.arctan2(h_xy, h[..., 2])
    equatorial = h_xy < 1e-14 * hmag
    raan = np.where(equatorial, 0.0, np.arctan2(h[..., 0], -h[..., 1]))

    v2 = np.sum(v * v, axis=-1)
    a = 1.0 / (2.0 / rmag - v2 / mu)
    rdotv = np.sum(r * v, axis=-1)
    e_vec = ((v2 - mu / rmag)[..., None] * r - rdotv[..., None] * v) / mu

    node = np.stack([np.cos(raan), np.sin(raan), np.zeros_like(raan)], axis=-1)
    h_hat = h / hmag[..., None]
    m_hat = np.cross(h_hat, node)
    ex = np.sum(e_vec * node, axis=-1)
    ey = np.sum(e_vec * m_hat, axis=-1)
    theta = np.arctan2(np.sum(r * m_hat, axis=-1), np.sum(r * node, axis=-1))

    e = np.hypot(ex, ey)
    argp = np.arctan2(ey, ex)
    nu = theta - argp
    eta = np.sqrt(np.clip(1.0 - e * e, 0.0, None))
    ecc_anomaly = np.arctan2(eta * np.sin(nu), e + np.cos(nu))
    mean_anomaly = ecc_anomaly - e * np.sin(ecc_anomaly)
    u = mean_anomaly + argp
    return np.stack([a, wrap_2pi(u), ex, ey, inc, wrap_2pi(raan)], axis=-1)


def oe_to_cartesian(oe: OrbitalElements, mu: float = EARTH.mu) -> CartesianState:
    """Map elements to the inertial state on the same conic."""
    if oe.e >= 1.0:
        raise ElementError("parabolic and hyperbolic orbits are not supported")
    r, v = elements_to_rv(oe.as_array(), mu)
    return CartesianState(r, v)


def cartesian_to_oe(x: CartesianState, mu: float = EARTH.mu) -> OrbitalElements:
    """Inverse of :func:`oe_to_cartesian`; the result is osculating."""
    rmag = float(np.linalg.norm(x.r))
    if rmag == 0.0:
        raise ElementError("zero position vector")
    hmag = float(np.linalg.norm(np.cross(x.r, x.v)))
    if hmag <= 1e-10 * rmag * max(float(np.linalg.norm(x.v)), 1e-300):
        raise ElementError("rectilinear orbit (r parallel to v)")
    if 0.5 * float(x.v @ x.v) - mu / rmag >= 0.0:
        raise ElementError("unbound orbit (e >= 1)")
    el = rv_to_elements(x.r, x.v, mu)
    if math.hypot(el[2], el[3]) >= 1.0:
        raise ElementError("unbound orbit (e >= 1)")
    return OrbitalElements.from_array(el, Flavor.OSCULATING)


def rtn_rotation(chief_state: CartesianState) -> RtnFrame:
    """RTN triad of the chief: R along r, N along r x v, T = N x R."""
    r, v = chief_state.r, chief_state.v
    h = np.cross(r, v)
    rmag, hmag = np.linalg.norm(r), np.linalg.norm(h)
    if rmag == 0.0 or hmag <= 1e-12 * rmag * max(np.linalg.norm(v), 1e-300):
        raise ElementError("RTN frame undefined for a rectilinear state")
    r_hat = r / rmag
    n_hat = h / hmag
    t_hat = np.cross(n_hat, r_hat)
    return RtnFrame(np.column_stack([r_hat, t_hat, n_hat]))


# ---------------------------------------------------------------------------
# First-order J2 mean <-> osculating map


def j2_acceleration(r, body: EarthModel = EARTH) -> np.ndarray:
    """J2 perturbing acceleration for inertial positions (..., 3)."""
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    r2 = x * x + y * y + z * z
    rmag = np.sqrt(r2)
    zz = 5.0 * z * z / r2
    k = -1.5 * body.j2 * body.mu * body.radius**2 / (r2 * r2 * rmag)
    return np.stack([k * x * (1.0 - zz), k * y * (1.0 - zz), k * z * (3.0 - zz)], axis=-1)


_FD_DV = 1e-3  # m/s, velocity step for element-rate differencing
_SP_SAMPLES = 64


def _element_rates(elements, body: EarthModel) -> np.ndarray:
    """Osculating element rates caused by J2 alone, d(oe)/dv . a_J2."""
    r, v = elements_to_rv(elements, body.mu)
    acc = j2_acceleration(r, body)
    rates = np.zeros(np.shape(elements))
    for axis in range(3):
        dv = np.zeros(3)
        dv[axis] = _FD_DV
        plus = rv_to_elements(r, v + dv, body.mu)
        minus = rv_to_elements(r, v - dv, body.mu)
        diff = plus - minus
        diff[..., 1] = wrap_pi(diff[..., 1])
        diff[..., 5] = wrap_pi(diff[..., 5])
        rates += diff / (2.0 * _FD_DV) * acc[..., axis : axis + 1]
    return rates


def short_periodic_offset(mean: np.ndarray, body: EarthModel = EARTH) -> np.ndarray:
    """Osculating-minus-mean correction to first order in J2.

    The element rates caused by J2 are sampled along the unperturbed orbit of
    ``mean`` at evenly spaced mean arguments of latitude; their zero-mean part
    is integrated spectrally. The mean-motion coupling of the semi-major axis
    oscillation is folded into the argument of latitude.
    """
    mean = np.asarray(mean, dtype=float)
    if body.j2 == 0.0:
        return np.zeros(6)
    n_samp = _SP_SAMPLES
    samples = np.tile(mean, (n_samp, 1))
    samples[:, 1] = mean[1] + TWO_PI * np.arange(n_samp) / n_samp
    rates = _element_rates(samples, body)

    a = mean[0]
    n = math.sqrt(body.mu / a**3)
    spec = np.fft.fft(rates, axis=0)
    k = np.fft.fftfreq(n_samp, d=1.0 / n_samp)
    nonzero = k != 0
    integ = np.zeros_like(spec)
    integ[nonzero] = spec[nonzero] / (1j * k[nonzero, None] * n)
    # along-track drift from the oscillating semi-major axis: -1.5 n/a * da
    integ[nonzero, 1] += -1.5 / a * spec[nonzero, 0] / ((1j * k[nonzero]) ** 2 * n)
    # value at the first sample (u = mean u)
    return np.real(np.sum(integ, axis=0)) / n_samp


def mean_to_osc(oe: OrbitalElements, body: EarthModel = EARTH) -> OrbitalElements:
    """Add the first-order J2 short-periodic terms to mean elements."""
    if oe.flavor is not Flavor.MEAN:
        raise ElementError("mean_to_osc expects mean elements")
    if body.j2 == 0.0:
        return oe.with_flavor(Flavor.OSCULATING)
    out = oe.as_array() + short_periodic_offset(oe.as_array(), body)
    return OrbitalElements.from_array(out, Flavor.OSCULATING)


def osc_to_mean(oe: OrbitalElements, body: EarthModel = EARTH, tol: float = 1e-14,
                max_iter: int = 30) -> OrbitalElements:
    """Invert :func:`mean_to_osc` by fixed-point iteration."""
    if oe.flavor is not Flavor.OSCULATING:
        raise ElementError("osc_to_mean expects osculating elements")
    if body.j2 == 0.0:
        return oe.with_flavor(Flavor.MEAN)
    osc = oe.as_array()
    mean = osc.copy()
    for _ in range(max_iter):
        new = osc - short_periodic_offset(mean, body)
        delta = new - mean
        delta[1] = wrap_pi(delta[1])
        delta[5] = wrap_pi(delta[5])
        mean = new
        scale = np.array([osc[0], 1.0, 1.0, 1.0, 1.0, 1.0])
        if np.max(np.abs(delta) / scale) < tol:
            break
    return OrbitalElements.from_array(mean, Flavor.MEAN)


# ---------------------------------------------------------------------------
# Relative orbital elements


def oe_to_roe(chief: OrbitalElements, deputy: OrbitalElements) -> RoeState:
    """Dimensional quasi-nonsingular ROE of ``deputy`` relative to ``chief``."""
    if chief.flavor != deputy.flavor:
        raise ElementError(
            f"flavor mismatch: chief is {chief.flavor.value}, deputy is {deputy.flavor.value}"
        )
    ac = chief.a
    d_u = float(wrap_pi(deputy.u - chief.u))
    d_raan = float(wrap_pi(deputy.raan - chief.raan))
    dlambda = float(wrap_pi(d_u + d_raan * math.cos(chief.i)))
    return RoeState(
        deputy.a - ac,
        ac * dlambda,
        ac * (deputy.ex - chief.ex),
        ac * (deputy.ey - chief.ey),
        ac * (deputy.i - chief.i),
        ac * d_raan * math.sin(chief.i),
    )


def roe_to_oe(chief: OrbitalElements, roe) -> OrbitalElements:
    """Deputy elements that reproduce ``roe`` relative to ``chief`` (same flavor)."""
    y = roe.as_array() if isinstance(roe, RoeState) else np.asarray(roe, dtype=float)
    ac = chief.a
    d = y / ac
    si = math.sin(chief.i)
    if abs(si) < 1e-12:
        raise ElementError("relative inclination y-component undefined for equatorial chief")
    d_raan = d[5] / si
    return OrbitalElements(
        ac * (1.0 + d[0]),
        chief.u + d[1] - d_raan * math.cos(chief.i),
        chief.ex + d[2],
        chief.ey + d[3],
        chief.i + d[4],
        chief.raan + d_raan,
        chief.flavor,
    )
