"""Cart-pendulum dynamics, delay scheduling and closed-loop simulation.

The plant is the standard small-angle linearization of a cart-mounted
pendulum (state order alpha, theta, alpha_dot, theta_dot; force input):

    (M + m) a'' + (3 m / 4) (g theta - a'') = u
    theta'' = 3 (g theta - a'') / (4 l)

with cart mass M, pendulum mass m, half-length l.  Parameter uncertainty
enters as A + D F(t) E with F = diag(r1, r2, 0, 0), |r_i| <= 1, redrawn
once per sampling interval.

Each camera sample taken at t_k reaches the actuator only after the whole
pipeline has run: exposure, encryption, attack injection time, network hop
to the processing unit, decryption, state extraction, then the hop to the
actuator.  The actuator holds the latest arrived control value (stale
packets that arrive out of order are dropped).  Integration is fixed-step
4th-order Runge-Kutta; because the dynamics are affine and constant
between events, each step is applied as the exact RK4 one-step affine map
(see rk4_step, which the tests check the stepper against).
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .attacks import AttackSpec
from .chaos import ChaosParams
from .errors import DataError, NumericError

STATE_ORDER = ("alpha", "theta", "alpha_dot", "theta_dot")

# default stabilizing pole set used by experiments and the acceptance gate
DEFAULT_POLES = (-2.0, -3.0, -4.0, -5.0)


@dataclass(frozen=True)
class PlantModel:
    """Linear plant with norm-bounded uncertainty structure A + D F(t) E."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DataError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, 1):
            raise DataError(f"B must be {n}x1, got {self.B.shape}")
        if self.D.shape != (n, n) or self.E.shape != (n, n):
            raise DataError("D and E must match A's shape")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def with_uncertainty(self, E: np.ndarray) -> "PlantModel":
        return replace(self, E=np.asarray(E, dtype=float))


@dataclass(frozen=True)
class UncertaintyModel:
    """Relative-error ranges for the two measured states.

    Environmental ranges come from background noise; attack ranges are the
    observed extremes of err/state under a given attack.  The uncertainty
    weight matrix combines them as diag(max|env1| + max|att1|,
    max|env2| + max|att2|, 0, 0).
    """

    delta1_env: tuple[float, float] = (-0.4, 0.4)
    delta2_env: tuple[float, float] = (-0.82, 0.82)
    delta1_att: tuple[float, float] = (0.0, 0.0)
    delta2_att: tuple[float, float] = (0.0, 0.0)

    @staticmethod
    def _mag(rng: tuple[float, float]) -> float:
        return max(abs(rng[0]), abs(rng[1]))

    def e_matrix(self) -> np.ndarray:
        e1 = self._mag(self.delta1_env) + self._mag(self.delta1_att)
        e2 = self._mag(self.delta2_env) + self._mag(self.delta2_att)
        return np.diag([e1, e2, 0.0, 0.0])


def error_to_uncertainty(
    rel_err_alpha, rel_err_theta, base: UncertaintyModel | None = None
) -> UncertaintyModel:
    """Set the attack-uncertainty ranges from observed relative-error traces
    (err1/alpha and err2/theta)."""
    base = base or UncertaintyModel()
    a = np.asarray(rel_err_alpha, dtype=float)
    t = np.asarray(rel_err_theta, dtype=float)
    d1 = (float(a.min()), float(a.max())) if a.size else (0.0, 0.0)
    d2 = (float(t.min()), float(t.max())) if t.size else (0.0, 0.0)
    return replace(base, delta1_att=d1, delta2_att=d2)


@dataclass(frozen=True)
class DelayModel:
    """Per-sample timing components, each a [lower, upper] bound in seconds.

    exposure is the camera exposure time, spent before encryption starts;
    it rides on the encryption-time component wherever that appears.
    delta_eta is the attack injection time, added only while an attack is
    active.  h is the sampling period of the camera.
    """

    eta_en: tuple[float, float] = (0.004, 0.007)
    eta_de: tuple[float, float] = (0.004, 0.007)
    tau_sc: tuple[float, float] = (0.0, 0.005)
    tau_ca: tuple[float, float] = (0.0, 0.005)
    d_proc: tuple[float, float] = (0.007, 0.009)
    delta_eta: float = 0.001
    exposure: float = 0.010
    h: float = 0.020

    def __post_init__(self):
        for name in ("eta_en", "eta_de", "tau_sc", "tau_ca", "d_proc"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise DataError(f"bad bounds for {name}: ({lo}, {hi})")
        if self.h <= 0:
            raise DataError("sampling period must be > 0")

    @property
    def lambda_min(self) -> float:
        """Smallest image-induced delay: every component at its lower bound."""
        return (
            self.eta_en[0]
            + self.exposure
            + self.delta_eta
            + self.tau_sc[0]
            + self.eta_de[0]
            + self.d_proc[0]
        )

    @property
    def lambda_max(self) -> float:
        """Largest image-induced delay: the previous frame's capture plus
        the next frame's full pipeline (two encryption slots)."""
        return (
            2 * (self.eta_en[1] + self.exposure)
            + 2 * self.delta_eta
            + self.tau_sc[1]
            + self.eta_de[1]
            + self.d_proc[1]
        )

    @property
    def tau_max(self) -> float:
        return self.tau_ca[1]


def delay_model_from_bounds(
    lambda_min: float, lambda_max: float, tau_max: float, h: float | None = None
) -> DelayModel:
    """Synthetic delay model realizing given aggregate bounds.

    Useful for exercising certificates whose bounds do not decompose into
    the physical pipeline components.  The whole image-induced delay is
    carried by the processing-time component.
    """
    if not 0 <= lambda_min < lambda_max:
        raise DataError("need 0 <= lambda_min < lambda_max")
    if h is None:
        h = (lambda_max - lambda_min) / 2.0
    pipe_hi = lambda_max - h
    if pipe_hi < lambda_min:
        raise DataError("sampling period too long for the delay window")
    return DelayModel(
        eta_en=(0.0, 0.0),
        eta_de=(0.0, 0.0),
        tau_sc=(0.0, 0.0),
        tau_ca=(0.0, tau_max),
        d_proc=(lambda_min, pipe_hi),
        delta_eta=0.0,
        exposure=0.0,
        h=h,
    )


@dataclass(frozen=True)
class DelaySample:
    """One sample's realized timing components."""

    eta_en: float
    delta_eta: float
    tau_sc: float
    eta_de: float
    d_proc: float
    tau_ca: float

    @property
    def pipeline(self) -> float:
        """Capture-to-controller-output latency (excludes tau_ca)."""
        return self.eta_en + self.delta_eta + self.tau_sc + self.eta_de + self.d_proc

    @property
    def total(self) -> float:
        return self.pipeline + self.tau_ca


def sample_delays(
    dm: DelayModel,
    k: int,
    rng: np.random.Generator,
    attack_active: bool = False,
    traditional: bool = False,
) -> DelaySample:
    """Draw one sample's delays uniformly within their bounds.

    traditional mode models the unencrypted pipeline: no encryption or
    decryption time, no exposure ride-along and no injection time.
    """
    eta_en = rng.uniform(*dm.eta_en)
    eta_de = rng.uniform(*dm.eta_de)
    tau_sc = rng.uniform(*dm.tau_sc)
    d_proc = rng.uniform(*dm.d_proc)
    tau_ca = rng.uniform(*dm.tau_ca)
    if traditional:
        return DelaySample(0.0, 0.0, tau_sc, 0.0, d_proc, tau_ca)
    return DelaySample(
        eta_en=eta_en + dm.exposure,
        delta_eta=dm.delta_eta if attack_active else 0.0,
        tau_sc=tau_sc,
        eta_de=eta_de,
        d_proc=d_proc,
        tau_ca=tau_ca,
    )


def default_plant() -> PlantModel:
    """Cart 1.096 kg, pendulum 0.109 kg, half-length 0.25 m, g 9.81."""
    cart_m = 1.096
    pend_m = 0.109
    half_l = 0.25
    g = 9.81
    denom = cart_m + pend_m / 4.0
    a_th = -(3.0 * pend_m * g / 4.0) / denom  # theta coefficient in alpha''
    b_a = 1.0 / denom  # force coefficient in alpha''
    th_th = 3.0 * (g - a_th) / (4.0 * half_l)  # theta coefficient in theta''
    th_u = -3.0 * b_a / (4.0 * half_l)  # force coefficient in theta''
    A = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, a_th, 0.0, 0.0],
            [0.0, th_th, 0.0, 0.0],
        ]
    )
    B = np.array([[0.0], [0.0], [b_a], [th_u]])
    return PlantModel(A=A, B=B, D=np.eye(4), E=UncertaintyModel().e_matrix())


def place_poles(A: np.ndarray, B: np.ndarray, poles) -> np.ndarray:
    """State feedback K (for u = K x, closed loop A + B K) via Ackermann.

    The pole list must be closed under conjugation.  Raises NumericError
    for an uncontrollable pair.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    n = A.shape[0]
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if poles.size != n:
        raise DataError(f"need {n} poles, got {poles.size}")
    if not np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj())):
        raise DataError("pole set must be closed under conjugation")
    ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
    if np.linalg.matrix_rank(ctrb) < n:
        raise NumericError("uncontrollable (A, B) pair")
    coeffs = np.real(np.poly(poles))  # desired characteristic polynomial
    phi = np.zeros_like(A)
    for c in coeffs:
        phi = phi @ A + c * np.eye(n)
    last_row = np.zeros(n)
    last_row[-1] = 1.0
    k_acker = last_row @ np.linalg.solve(ctrb, phi)
    return -k_acker.reshape(1, n)  # sign flipped: u = K x convention


@dataclass(frozen=True)
class SampleEvent:
    """Bookkeeping for one camera sample."""

    k: int
    t_sample: float
    delays: DelaySample
    arrival: float
    estimate: np.ndarray
    estimate_valid: bool
    applied: bool  # False when the packet arrived stale and was dropped


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    events: list
    diverged: bool
    mode: str

    def terminal_norm(self) -> float:
        return float(np.linalg.norm(self.x[-1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", *STATE_ORDER, "u", "arrival"])
        arrivals = {
            int(round(ev.arrival / (self.t[1] - self.t[0])))
            for ev in self.events
            if ev.applied
        }
        for i, ti in enumerate(self.t):
            writer.writerow(
                [
                    f"{ti:.6f}",
                    *(f"{v:.9e}" for v in self.x[i]),
                    f"{self.u[i]:.9e}",
                    1 if i in arrivals else 0,
                ]
            )
        return buf.getvalue()


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 10.0
    dt: float = 1e-4
    x0: tuple = (0.05, 0.05, 0.0, 0.0)
    seed: int = 0
    mode: str = "ideal_state"  # ideal_state | vision_loop | traditional
    attack: AttackSpec | None = None
    divergence_bound: float = 1e3
    # vision_loop knobs
    key: ChaosParams | None = None
    rounds: int = 1
    band_width: int = 100

    def __post_init__(self):
        if self.dt > 1e-3:
            raise DataError("integration step must be <= 1e-3 s")
        if self.horizon <= 0:
            raise DataError("horizon must be > 0")
        if self.mode not in ("ideal_state", "vision_loop", "traditional"):
            raise DataError(f"unknown simulation mode {self.mode!r}")


def rk4_step(M: np.ndarray, c: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of x' = M x + c (reference implementation)."""
    k1 = M @ x + c
    k2 = M @ (x + 0.5 * dt * k1) + c
    k3 = M @ (x + 0.5 * dt * k2) + c
    k4 = M @ (x + dt * k3) + c
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_affine_map(M: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(Phi, Psi) with x+ = Phi x + Psi c equal to one RK4 step of
    x' = M x + c; exact because the system is affine."""
    n = M.shape[0]
    eye = np.eye(n)
    dM = dt * M
    phi = eye + dM @ (eye + dM @ (eye / 2 + dM @ (eye / 6 + dM / 24)))
    psi = dt * (eye + dM @ (eye / 2 + dM @ (eye / 6 + dM / 24)))
    return phi, psi


class _VisionPipeline:
    """render -> encrypt -> [attack] -> decrypt -> extract, per sample."""

    def __init__(self, cfg: SimConfig, h: float):
        from . import cipher, vision  # local import keeps plant usable alone

        self._cipher = cipher
        self._vision = vision
        self.cam = vision.CameraModel()
        self.h = h
        self.attack = cfg.attack
        self.key = cfg.key or ChaosParams(a=0.5, b=2.0, y0=2.731)
        self.rounds = cfg.rounds
        self.band_width = cfg.band_width
        self.prev = None
        self._keys = None
        self._keys_dims = None

    def _round_keys(self, rows: int, cols: int):
        if self._keys_dims != (rows, cols):
            self._keys = self._cipher.round_keystreams(
                self.key, rows, cols, self.rounds
            )
            self._keys_dims = (rows, cols)
        return self._keys

    def estimate(self, x: np.ndarray, k: int) -> tuple[np.ndarray, bool]:
        cipher, vision = self._cipher, self._vision
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # off-rail renders clamp loudly
            frame = vision.render_frame(float(x[0]), float(x[1]), self.cam)
        try:
            region = cipher.select_region(frame, self.band_width)
        except NumericError:
            est = self._hold()
            return est.vector, est.valid
        keys = self._round_keys(region.rows, region.cols)
        sent = cipher.encrypt_region(frame, region, keys)
        if self.attack is not None:
            seed_k = int(
                np.random.SeedSequence([self.attack.seed, k]).generate_state(1)[0]
            )
            sent = self.attack.apply(sent, seed=seed_k)
        received = cipher.decrypt_region(sent, region, keys)
        est = vision.extract_state(received, self.prev, self.h, self.cam, region)
        self.prev = est
        return est.vector, est.valid

    def _hold(self):
        from .vision import StateEstimate

        est = (
            replace(self.prev, valid=False)
            if self.prev is not None
            else StateEstimate(0.0, 0.0, 0.0, 0.0, valid=False)
        )
        self.prev = est
        return est


def simulate(
    plant: PlantModel,
    gain: np.ndarray,
    dm: DelayModel,
    um: UncertaintyModel | None,
    cfg: SimConfig,
) -> Trajectory:
    """Closed-loop run of x' = (A + D F(t) E) x + B u with zero-order hold.

    The control value computed from the sample at t_k becomes active at its
    arrival instant t_k + pipeline + tau_ca (snapped to the integration
    grid) and is held until a newer packet arrives.  State blow-up past
    cfg.divergence_bound stops the run and flags it diverged (the tail of
    the trajectory holds the last state).
    """
    n = plant.n
    gain = np.asarray(gain, dtype=float).reshape(1, n)
    x0 = np.asarray(cfg.x0, dtype=float)
    if x0.shape != (n,):
        raise DataError(f"x0 must have {n} entries, got {x0.shape}")
    E = um.e_matrix() if um is not None else plant.E
    if E.shape != (n, n):
        raise DataError("uncertainty matrix does not match plant dimension")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    steps = int(round(cfg.horizon / cfg.dt))
    t = np.arange(steps + 1) * cfg.dt
    X = np.zeros((steps + 1, n))
    U = np.zeros(steps + 1)
    X[0] = x0

    traditional = cfg.mode == "traditional"
    vision_pipe = _VisionPipeline(cfg, dm.h) if cfg.mode == "vision_loop" else None
    uncertain = np.any(E != 0)

    # schedule of camera samples
    sample_steps = []
    k = 0
    while True:
        idx = int(round(k * dm.h / cfg.dt))
        if idx > steps:
            break
        sample_steps.append(idx)
        k += 1

    events: list[SampleEvent] = []
    pending: list[tuple[int, int, float]] = []  # (arrival step, k, u value)
    x = x0.copy()
    u = 0.0
    last_applied_k = -1
    diverged = False
    bound = cfg.divergence_bound

    next_sample = 0
    step = 0
    # F(t) redrawn per sampling interval
    r1 = rng.uniform(-1.0, 1.0) if uncertain else 0.0
    r2 = rng.uniform(-1.0, 1.0) if uncertain else 0.0

    while step <= steps:
        if diverged:
            X[step:] = x
            U[step:] = u
            break
        # sample events at this step
        while next_sample < len(sample_steps) and sample_steps[next_sample] == step:
            kk = next_sample
            delays = sample_delays(
                dm, kk, rng,
                attack_active=cfg.attack is not None,
                traditional=traditional,
            )
            if vision_pipe is not None:
                est, valid = vision_pipe.estimate(x, kk)
            else:
                est, valid = x.copy(), True
            u_cmd = float(gain @ est)
            arrival = t[step] + delays.total
            arr_idx = int(round(arrival / cfg.dt))
            pending.append((arr_idx, kk, u_cmd))
            events.append(
                SampleEvent(
                    k=kk,
                    t_sample=t[step],
                    delays=delays,
                    arrival=arr_idx * cfg.dt,
                    estimate=est,
                    estimate_valid=valid,
                    applied=True,  # may be flipped below on stale arrival
                )
            )
            if uncertain:
                r1 = rng.uniform(-1.0, 1.0)
                r2 = rng.uniform(-1.0, 1.0)
            next_sample += 1
        # control arrivals at this step (latest sample wins, stale dropped)
        arrived = [p for p in pending if p[0] <= step]
        if arrived:
            pending = [p for p in pending if p[0] > step]
            for _idx, kk, u_cmd in sorted(arrived, key=lambda p: (p[0], p[1])):
                if kk > last_applied_k:
                    last_applied_k = kk
                    u = u_cmd
                else:
                    events[kk] = replace(events[kk], applied=False)
        U[step] = u
        if step == steps:
            break
        # integrate to the next event boundary with constant (F, u)
        nxt = steps
        if next_sample < len(sample_steps):
            nxt = min(nxt, sample_steps[next_sample])
        if pending:
            nxt = min(nxt, min(p[0] for p in pending))
        nxt = max(nxt, step + 1)
        M = plant.A
        if uncertain:
            F = np.zeros((n, n))
            F[0, 0] = r1
            if n > 1:
                F[1, 1] = r2
            M = plant.A + plant.D @ F @ E
        c = (plant.B * u).reshape(n)
        phi, psi = rk4_affine_map(M, cfg.dt)
        psi_c = psi @ c
        dot = phi.dot
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(step + 1, nxt + 1):
                x = dot(x) + psi_c
                X[i] = x
        seg = X[step + 1 : nxt + 1]
        bad = ~np.isfinite(seg) | (np.abs(seg) > bound)
        if bad.any():
            i = step + 1 + int(np.flatnonzero(bad.any(axis=1))[0])
            diverged = True
            U[step + 1 : i + 1] = u
            x = X[i]
            step = i
            # loop re-entered once more to fill the tail
        else:
            U[step + 1 : nxt + 1] = u
            step = nxt
    return Trajectory(t=t, x=X, u=U, events=events, diverged=diverged, mode=cfg.mode)
