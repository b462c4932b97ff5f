"""Small-signal truth plant: two AC grids coupled by an LCC HVDC link.

Each grid aggregates its generators into one swing equation fed by a
gas-turbine chain with governor droop. The HVDC converters carry
frequency/dc-voltage droop loops plus filtered-derivative inertia
emulation, with the rectifier regulating its terminal voltage and the
inverter its dc current through PI loops and a short actuator lag.
All quantities are per-unit on the declared power base; dc voltage and
current are normalized by their nominal values.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .numerics import eig_real_parts
from .signals import SignalRecord
from .statespace import StateSpace, compound_steps, rk4_step_matrices


class PlantError(ValueError):
    """Bad parameter set or inconsistent simulation request."""


class SimulationDivergence(RuntimeError):
    """State norm exceeded the configured blow-up bound."""


REFERENCE_CHANNELS = ("p_gi_ref", "p_gr_ref", "i_dci_ref", "v_dcr_ref")
DISTURBANCE_CHANNELS = ("p_li", "p_lr_net")  # p_lr_net = load minus wind on the rectifier side
OUTPUT_CHANNELS = ("f_i", "f_r", "v_dc", "int_f_i", "int_f_r", "int_v_dc")
AUX_CHANNELS = ("p_gi", "p_gr", "p_dci", "p_dcr", "i_dci", "v_dcr")


@dataclass(frozen=True)
class PlantParams:
    """Physical and control parameters of the two-grid HVDC system.

    Droop fields store the droop constants themselves (gain = 1/value);
    ``math.inf`` disables a loop. ``beta_n`` is the per-generator
    participation factor; None means equal sharing 1/N per side.
    ``B`` (bridge count) scales the dc current base, and ``X_cr`` sets
    the rectifier's equivalent commutation resistance 3*X_cr/pi per
    bridge; the remaining converter internals (X_ci, alpha0, gamma0,
    mu0, TR) are carried for completeness but unused by the reduced
    model. ``M_g``/``k_d`` are likewise carried: the grid-level M/D
    values already aggregate the machine rotors.
    """

    # grid aggregates
    M_i: float
    M_r: float
    D_i: float
    D_r: float
    N_i: int
    N_r: int
    # synchronous machine (aggregated into the grid swing above)
    M_g: float
    k_d: float
    # governor / valve / gas turbine
    X_g: float
    Y_g: float
    e_g: float
    u_g: float
    T_cr: float
    T_f: float
    T_cd: float
    R_gi: float
    R_gr: float
    # HVDC droop and inertia-emulation loops
    R_i: float
    R_r: float
    K_i: float
    K_r: float
    W_i: float
    W_r: float
    T_fi: float
    T_fr: float
    # dc link and converter control
    R_dc: float
    L_dc: float
    C_dc: float
    k_pr: float
    k_ir: float
    k_pi: float
    k_ii: float
    V_dcr0: float
    V_dci0: float
    I_dc0: float
    # bases
    power_base_MW: float
    frequency_base_Hz: float
    beta_n: float | None = None
    B: int = 1
    T_c: float = 0.01
    T_ref: float = 0.05
    T_vm: float = 0.1
    # converter internals, unused by the reduced model
    X_cr: float | None = None
    X_ci: float | None = None
    alpha0: float | None = None
    gamma0: float | None = None
    mu0: float | None = None
    TR: float | None = None

    def __post_init__(self):
        problems = []
        for name in ("M_i", "M_r", "M_g"):
            if getattr(self, name) <= 0:
                problems.append(f"inertia {name} must be strictly positive")
        for name in ("Y_g", "u_g", "T_cr", "T_f", "T_cd", "T_fi", "T_fr", "T_c", "T_ref", "T_vm"):
            if getattr(self, name) <= 0:
                problems.append(f"time constant {name} must be strictly positive")
        for name in ("R_gi", "R_gr", "R_i", "R_r", "K_i", "K_r"):
            if getattr(self, name) <= 0:
                problems.append(f"droop constant {name} must be strictly positive")
        for name in ("D_i", "D_r", "k_d", "W_i", "W_r", "X_g", "e_g"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        if self.N_i < 1 or self.N_r < 1:
            problems.append("generator counts N_i, N_r must be at least 1")
        for name in ("R_dc", "L_dc", "C_dc", "V_dcr0", "V_dci0", "I_dc0", "power_base_MW",
                     "frequency_base_Hz"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be strictly positive")
        if self.B < 1:
            problems.append("bridge count B must be at least 1")
        if not problems:
            nominal_mw = self.V_dcr0 * 1e3 * self.I_dc0 * self.B / 1e6
            if abs(nominal_mw / self.power_base_MW - 1.0) > 0.01:
                problems.append(
                    f"nominal dc power {nominal_mw:.2f} MW is inconsistent with the "
                    f"{self.power_base_MW:.2f} MW base (>1% off)"
                )
        if problems:
            raise PlantError("; ".join(problems))

    @property
    def dc_current_base_A(self) -> float:
        return self.I_dc0 * self.B

    def participation(self, side: str) -> float:
        """Aggregate share of a secondary power reference taken per side."""
        n = self.N_i if side == "i" else self.N_r
        per_unit = (1.0 / n) if self.beta_n is None else self.beta_n
        return per_unit * n

    def to_json(self, path: str | Path) -> None:
        payload = {k: v for k, v in asdict(self).items() if v is not None}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @staticmethod
    def from_json(path: str | Path) -> "PlantParams":
        return PlantParams(**json.loads(Path(path).read_text()))


def load_preset(name: str) -> PlantParams:
    """Load one of the shipped parameter sets (``jh`` or ``cigre``)."""
    ref = resources.files("hvdcfr.presets").joinpath(f"{name}.json")
    if not ref.is_file():
        raise PlantError(f"unknown plant preset {name!r}; shipped presets are 'jh' and 'cigre'")
    return PlantParams(**json.loads(ref.read_text()))


# state layout of the assembled model
_STATE_LABELS = (
    "f_i", "f_r",
    "gov_i", "valve_i", "fuel_i", "comb_i", "p_gi",
    "gov_r", "valve_r", "fuel_r", "comb_r", "p_gr",
    "ire_filt_i", "ire_filt_r",
    "v_dc", "i_dcr",
    "ref_filt_vr", "pi_int_vr", "v_dcr",
    "ref_filt_ci", "pi_int_ci", "i_dci",
    "v_dc_meas",
    "int_f_i", "int_f_r", "int_v_dc",
)
_N_STATES = len(_STATE_LABELS)
_N_INPUTS = len(REFERENCE_CHANNELS) + len(DISTURBANCE_CHANNELS)
_INTEGRATOR_STATES = (_N_STATES - 3, _N_STATES - 2, _N_STATES - 1)


@dataclass(frozen=True)
class ContinuousPlant:
    """Assembled LTI truth plant plus channel metadata.

    ``state_space`` maps the stacked input [references; disturbances] to
    the six model outputs; ``aux_c`` adds the extra named power/current
    channels used for metrics and traces (not part of the model output).
    """

    state_space: StateSpace
    params: PlantParams
    input_labels: tuple[str, ...] = REFERENCE_CHANNELS
    disturbance_labels: tuple[str, ...] = DISTURBANCE_CHANNELS
    output_labels: tuple[str, ...] = OUTPUT_CHANNELS
    aux_labels: tuple[str, ...] = AUX_CHANNELS
    aux_c: np.ndarray = field(default=None)
    state_labels: tuple[str, ...] = _STATE_LABELS
    integrator_states: tuple[int, ...] = _INTEGRATOR_STATES

    @property
    def state_dimension(self) -> int:
        return self.state_space.n_states

    @property
    def n_references(self) -> int:
        return len(self.input_labels)

    @property
    def n_disturbances(self) -> int:
        return len(self.disturbance_labels)


def build_plant(params: PlantParams) -> ContinuousPlant:
    """Assemble the continuous-time truth plant from its parameters.

    Raises ``PlantError`` when the autonomous dynamic core (everything
    except the three pure output integrators) is not Hurwitz.
    """
    n, m = _N_STATES, _N_INPUTS
    idx = {label: i for i, label in enumerate(_STATE_LABELS)}

    def state(label):
        e = np.zeros(n + m)
        e[idx[label]] = 1.0
        return e

    def ref(label):
        e = np.zeros(n + m)
        e[n + REFERENCE_CHANNELS.index(label)] = 1.0
        return e

    def dist(label):
        e = np.zeros(n + m)
        e[n + len(REFERENCE_CHANNELS) + DISTURBANCE_CHANNELS.index(label)] = 1.0
        return e

    p = params
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x

    # per-unit dc-link constants (current base counts all bridges)
    i_base = p.dc_current_base_A
    v_base = p.V_dcr0 * 1e3
    t_cap = p.C_dc * 1e-6 * v_base / i_base
    t_ind = 0.5 * p.L_dc * i_base / v_base
    # the rectifier bridges contribute their equivalent commutation
    # resistance 3*X_c/pi each; this is what damps the dc-side LC mode
    r_comm = 0.0 if p.X_cr is None else (3.0 / math.pi) * p.X_cr * p.B
    r_link = (0.5 * p.R_dc + r_comm) * i_base / v_base

    # filtered-derivative inertia emulation: gain * (f - filter_state) / T
    ire_i = (p.W_i / p.T_fi) * (state("f_i") - state("ire_filt_i"))
    ire_r = (p.W_r / p.T_fr) * (state("f_r") - state("ire_filt_r"))

    # converter reference assembly; every droop term opposes its deviation
    i_dci_ref = (ref("i_dci_ref") - inv(p.R_i) * state("f_i") - ire_i
                 + inv(p.K_i) * state("v_dc"))
    v_dcr_ref = (ref("v_dcr_ref") + inv(p.R_r) * state("f_r") + ire_r
                 - inv(p.K_r) * state("v_dc"))

    # linearized dc power transfers (pu): p = v + i on the common base
    p_dci = state("v_dc") + state("i_dci")
    p_dcr = state("v_dcr") + state("i_dcr")

    # governor inputs: secondary reference share minus primary droop
    gov_in_i = p.participation("i") * ref("p_gi_ref") - inv(p.R_gi) * state("f_i")
    gov_in_r = p.participation("r") * ref("p_gr_ref") - inv(p.R_gr) * state("f_r")
    # lead-lag (X_g s + 1)/(Y_g s + 1) output from its single lag state
    lead = p.X_g / p.Y_g
    ll_i = lead * gov_in_i + (1.0 - lead) * state("gov_i")
    ll_r = lead * gov_in_r + (1.0 - lead) * state("gov_r")

    rows = np.zeros((n, n + m))
    rows[idx["f_i"]] = (state("p_gi") + p_dci - dist("p_li") - p.D_i * state("f_i")) / p.M_i
    rows[idx["f_r"]] = (state("p_gr") - p_dcr - dist("p_lr_net") - p.D_r * state("f_r")) / p.M_r

    for side, gov_in, ll in (("i", gov_in_i, ll_i), ("r", gov_in_r, ll_r)):
        rows[idx[f"gov_{side}"]] = (gov_in - state(f"gov_{side}")) / p.Y_g
        rows[idx[f"valve_{side}"]] = (p.e_g * ll - state(f"valve_{side}")) / p.u_g
        rows[idx[f"fuel_{side}"]] = (state(f"valve_{side}") - state(f"fuel_{side}")) / p.T_f
        rows[idx[f"comb_{side}"]] = (state(f"fuel_{side}") - state(f"comb_{side}")) / p.T_cr
        rows[idx[f"p_g{side}"]] = (state(f"comb_{side}") - state(f"p_g{side}")) / p.T_cd

    rows[idx["ire_filt_i"]] = (state("f_i") - state("ire_filt_i")) / p.T_fi
    rows[idx["ire_filt_r"]] = (state("f_r") - state("ire_filt_r")) / p.T_fr

    rows[idx["v_dc"]] = (state("i_dcr") - state("i_dci")) / t_cap
    rows[idx["i_dcr"]] = (state("v_dcr") - state("v_dc") - r_link * state("i_dcr")) / t_ind

    # each converter band-limits its assembled local reference before the PI,
    # keeping droop/IRE action away from the dc-link LC resonance
    rows[idx["ref_filt_vr"]] = (v_dcr_ref - state("ref_filt_vr")) / p.T_ref
    rows[idx["ref_filt_ci"]] = (i_dci_ref - state("ref_filt_ci")) / p.T_ref
    # rectifier PI -> actuator lag -> terminal voltage
    err_v = state("ref_filt_vr") - state("v_dcr")
    rows[idx["pi_int_vr"]] = err_v
    rows[idx["v_dcr"]] = (p.k_pr * err_v + p.k_ir * state("pi_int_vr") - state("v_dcr")) / p.T_c
    # inverter PI -> actuator lag -> dc current
    err_c = state("ref_filt_ci") - state("i_dci")
    rows[idx["pi_int_ci"]] = err_c
    rows[idx["i_dci"]] = (p.k_pi * err_c + p.k_ii * state("pi_int_ci") - state("i_dci")) / p.T_c

    # the dc-voltage telemetry passes a transducer lag before any sampled
    # secondary controller sees it; the raw link state would alias its
    # lightly damped resonance into the slow control rate
    rows[idx["v_dc_meas"]] = (state("v_dc") - state("v_dc_meas")) / p.T_vm

    rows[idx["int_f_i"]] = state("f_i")
    rows[idx["int_f_r"]] = state("f_r")
    rows[idx["int_v_dc"]] = state("v_dc_meas")

    a = rows[:, :n]
    b = rows[:, n:]

    c = np.zeros((len(OUTPUT_CHANNELS), n))
    for row, label in enumerate(("f_i", "f_r", "v_dc_meas", "int_f_i", "int_f_r", "int_v_dc")):
        c[row, idx[label]] = 1.0
    d = np.zeros((len(OUTPUT_CHANNELS), m))

    aux_c = np.zeros((len(AUX_CHANNELS), n + m))
    aux_c[0] = state("p_gi")
    aux_c[1] = state("p_gr")
    aux_c[2] = p_dci
    aux_c[3] = p_dcr
    aux_c[4] = state("i_dci")
    aux_c[5] = state("v_dcr")
    aux_c = aux_c[:, :n]

    core = [i for i in range(n) if i not in _INTEGRATOR_STATES]
    core_eigs = eig_real_parts(a[np.ix_(core, core)])
    if np.any(core_eigs >= 0.0):
        unstable = sorted(float(v) for v in core_eigs if v >= 0.0)
        raise PlantError(
            f"assembled plant core is not Hurwitz; unstable eigenvalue real parts: {unstable}"
        )

    ss = StateSpace(a=a, b=b, c=c, d=d, dt=None)
    return ContinuousPlant(state_space=ss, params=params, aux_c=aux_c)


def without_rectifier_hvdc_loops(params: PlantParams) -> PlantParams:
    """Converter config with a fixed rectifier voltage: drops the
    rectifier frequency droop, rectifier inertia emulation and both
    dc-voltage droops, leaving only inverter-side frequency support."""
    return replace(params, R_r=math.inf, K_r=math.inf, K_i=math.inf, W_r=0.0)


def without_hvdc_droops(params: PlantParams) -> PlantParams:
    """Remove all four HVDC droop loops, keep inertia emulation."""
    return replace(params, R_i=math.inf, R_r=math.inf, K_i=math.inf, K_r=math.inf)


def without_hvdc_droops_and_ire(params: PlantParams) -> PlantParams:
    """Remove the HVDC droop loops and inertia emulation."""
    return replace(without_hvdc_droops(params), W_i=0.0, W_r=0.0)


def _substeps(t_s: float, dt: float) -> int:
    n_sub = t_s / dt
    if abs(n_sub - round(n_sub)) > 1e-9 or round(n_sub) < 1:
        raise PlantError(f"dt={dt} must divide the sample time T_s={t_s}")
    return int(round(n_sub))


def simulate(plant: ContinuousPlant, refs: SignalRecord, disturbances: SignalRecord,
             dt: float, x0: np.ndarray | None = None,
             blow_up_bound: float = 1e6) -> SignalRecord:
    """Fixed-step closed-form RK4 simulation with zero-order-hold inputs.

    Inputs are held over each sample interval; the state advances in
    RK4 substeps of size ``dt``; outputs (model plus auxiliary channels)
    are sampled on the input grid.
    """
    if refs.t_s != disturbances.t_s:
        raise PlantError(f"reference T_s {refs.t_s} != disturbance T_s {disturbances.t_s}")
    if refs.n_samples != disturbances.n_samples:
        raise PlantError("reference and disturbance records differ in length")
    if refs.channels != plant.input_labels:
        raise PlantError(f"reference channels {refs.channels} != {plant.input_labels}")
    if disturbances.channels != plant.disturbance_labels:
        raise PlantError(f"disturbance channels {disturbances.channels} != {plant.disturbance_labels}")

    n_sub = _substeps(refs.t_s, dt)
    ss = plant.state_space
    phi, gamma = rk4_step_matrices(ss.a, ss.b, dt)
    phi_blk, gamma_blk = compound_steps(phi, gamma, n_sub)

    u = np.hstack([refs.samples, disturbances.samples])
    x = np.zeros(ss.n_states) if x0 is None else np.asarray(x0, dtype=float).copy()
    out = np.empty((refs.n_samples, len(OUTPUT_CHANNELS) + len(AUX_CHANNELS)))
    c_full = np.vstack([ss.c, plant.aux_c])
    for k in range(refs.n_samples):
        out[k] = c_full @ x
        if np.max(np.abs(x)) > blow_up_bound:
            raise SimulationDivergence(
                f"state norm exceeded {blow_up_bound:g} at t={k * refs.t_s:.3f} s"
            )
        x = phi_blk @ x + gamma_blk @ u[k]
    return SignalRecord(refs.t_s, OUTPUT_CHANNELS + AUX_CHANNELS, out)


def dc_gain(plant: ContinuousPlant) -> np.ndarray:
    """Steady-state 3x6 gain from [references; disturbances] to
    (f_i, f_r, v_dc), computed on the non-integrator core."""
    ss = plant.state_space
    core = [i for i in range(ss.n_states) if i not in plant.integrator_states]
    a_core = ss.a[np.ix_(core, core)]
    b_core = ss.b[core, :]
    c_core = ss.c[:3][:, core]
    try:
        sol = np.linalg.solve(a_core, b_core)
    except np.linalg.LinAlgError as exc:
        raise PlantError("non-integrator core of A is singular; no dc gain") from exc
    return -c_core @ sol + ss.d[:3]
