"""JSON run configuration: schema, validation and construction of model objects.

Every section has explicit defaults, so ``{}`` is a valid configuration.
Unknown keys are rejected.  Validation reports every problem at once, each
prefixed with the dotted path of the offending key.
"""

import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .grid import DomainSpec, random_modal, synthesize
from .noise import JumpSpec, NoiseModel, WienerSpec
from .operators import ModelParams
from .stepper import SimConfig


class ConfigError(ValueError):
    """Configuration could not be read or failed validation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# field presets
# ---------------------------------------------------------------------------


class ConstantScalar(_Strict):
    kind: Literal["constant"] = "constant"
    value: float = 1.0


class LinearScalar(_Strict):
    """base + slope_x1 * x1 + slope_x2 * x2"""

    kind: Literal["linear"] = "linear"
    base: float = 1.0
    slope_x1: float = 0.0
    slope_x2: float = 0.0


class GridScalar(_Strict):
    kind: Literal["grid"] = "grid"
    values: List[List[float]]


ScalarField = Annotated[Union[ConstantScalar, LinearScalar, GridScalar], Field(discriminator="kind")]


class ZeroField(_Strict):
    kind: Literal["zero"] = "zero"


class UniformVector(_Strict):
    kind: Literal["uniform"] = "uniform"
    value: List[float] = [0.0, 0.0]


class GridVector(_Strict):
    kind: Literal["grid"] = "grid"
    values: List[List[List[float]]]


NodalVectorField = Annotated[Union[ZeroField, UniformVector, GridVector], Field(discriminator="kind")]


class ModeField(_Strict):
    """amplitude * cos(2 pi frequency t) * phi_jk in one velocity component."""

    kind: Literal["mode"] = "mode"
    component: Literal[1, 2] = 1
    j: int = Field(1, ge=1)
    k: int = Field(1, ge=1)
    amplitude: float = 1.0
    frequency: float = 0.0


class RandomModal(_Strict):
    kind: Literal["random"] = "random"
    seed: int = 0
    scale: float = 1.0
    smoothness: float = 2.0


class CoefficientField(_Strict):
    kind: Literal["coefficients"] = "coefficients"
    values: List[List[List[float]]]


ModalVectorField = Annotated[Union[ZeroField, ModeField, RandomModal, CoefficientField],
                             Field(discriminator="kind")]


class ZeroScalar(_Strict):
    kind: Literal["zero"] = "zero"


ElevationField = Annotated[Union[ZeroScalar, GridScalar], Field(discriminator="kind")]


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------


class DomainSection(_Strict):
    length_x1: float = 1.0
    length_x2: float = 1.0
    modes_x1: int = 8
    modes_x2: int = 8
    grid_x1: int = 17
    grid_x2: int = 17


class ModelSection(_Strict):
    alpha: float = Field(0.05, gt=0)
    beta: float = 0.5
    g: float = Field(1.0, ge=0)
    r: float = Field(0.1, ge=0)
    depth: ScalarField = LinearScalar(base=1.0, slope_x1=0.5, slope_x2=0.25)
    background_flow: NodalVectorField = UniformVector(value=[0.05, 0.0])
    forcing: ModalVectorField = ZeroField()


class InitialSection(_Strict):
    u0: ModalVectorField = ModeField(amplitude=0.5)
    z0: ElevationField = ZeroScalar()


class UniformMarks(_Strict):
    kind: Literal["uniform"] = "uniform"
    low: float = -1.0
    high: float = 1.0


class DiscreteMarks(_Strict):
    kind: Literal["discrete"] = "discrete"
    values: List[float]
    probs: List[float]


class WienerSection(_Strict):
    q0: float = Field(0.05, ge=0)
    decay: float = Field(1.5, gt=1)
    sigma_add: float = 1.0
    sigma_mult: float = 0.1


class JumpSection(_Strict):
    intensity: float = Field(2.0, ge=0)
    marks: Annotated[Union[UniformMarks, DiscreteMarks], Field(discriminator="kind")] = UniformMarks()
    amp_add: float = 0.2
    amp_mult: float = 0.05
    shape: ModalVectorField = ModeField()


class SimSection(_Strict):
    dt: float = Field(1e-3, gt=0)
    horizon_T: float = Field(1.0, gt=0)
    record_stride: int = Field(10, ge=1)
    seed: int = 0
    p_moment: float = Field(4.0, gt=2)
    elevation_update: Literal["new", "old"] = "new"
    divergence_threshold: float = Field(1e12, gt=0)
    n_paths: int = Field(16, ge=1)
    batch_size: int = Field(32, ge=1)


class DiagnosticsSection(_Strict):
    bdg_c3: float = Field(4.0, gt=0)
    bdg_c4: float = Field(4.0, gt=0)
    lp_multiple: float = Field(100.0, gt=0)
    thresholds: List[float] = [2.0, 5.0, 10.0, 50.0]
    horizons: List[float] = [0.512, 0.256, 0.128, 0.064, 0.032]
    probe_small: float = Field(0.05, ge=0)
    delta_grid: List[float] = [0.05, 0.1, 0.2, 0.4]
    theta_grid: List[float] = [0.01, 0.02, 0.04, 0.08]
    stability_perturbation: float = Field(1e-3, gt=0)


class ControlSection(_Strict):
    control_modes: int = Field(1, ge=1)
    control_bound: float = Field(10.0, gt=0)
    w_track: float = Field(1.0, ge=0)
    w_reg: float = Field(0.01, gt=0)
    u_ref: ModalVectorField = ZeroField()
    seed_set: List[int] = [0, 1, 2, 3]
    method: Literal["fd_gradient", "coordinate_search"] = "fd_gradient"
    budget: int = Field(100, ge=1)


class OutputSection(_Strict):
    directory: str = "out"
    csv: bool = True
    binary: bool = True
    reports: bool = True


class RunConfig(_Strict):
    domain: DomainSection = DomainSection()
    model: ModelSection = ModelSection()
    initial: InitialSection = InitialSection()
    wiener: Optional[WienerSection] = WienerSection()
    jumps: Optional[JumpSection] = JumpSection()
    sim: SimSection = SimSection()
    diagnostics: DiagnosticsSection = DiagnosticsSection()
    control: ControlSection = ControlSection()
    outputs: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _cross_checks(self):
        problems = self.violations()
        if problems:
            raise ValueError(" | ".join(problems))
        return self

    # -- validation across sections --------------------------------------

    def violations(self):
        out = []
        d = self.domain
        try:
            dom = DomainSpec(**d.model_dump())
        except ValueError:
            # DomainSpec.violations has every message; rebuild them here
            raw = object.__new__(DomainSpec)
            for k, v in d.model_dump().items():
                object.__setattr__(raw, k, v)
            return [f"domain: {m}" for m in DomainSpec.violations(raw)]

        out += _check_scalar("model.depth", self.model.depth, dom, positive="depth.min > 0")
        out += _check_nodal_vector("model.background_flow", self.model.background_flow, dom)
        out += _check_modal("model.forcing", self.model.forcing, dom)
        out += _check_modal("initial.u0", self.initial.u0, dom)
        if isinstance(self.initial.z0, GridScalar):
            out += _check_scalar("initial.z0", self.initial.z0, dom)
        if self.jumps is not None:
            out += _check_modal("jumps.shape", self.jumps.shape, dom)
            m = self.jumps.marks
            if isinstance(m, UniformMarks) and not m.low < m.high:
                out.append("jumps.marks: low < high")
            if isinstance(m, DiscreteMarks):
                if len(m.values) != len(m.probs) or not m.values:
                    out.append("jumps.marks: values and probs must have equal nonzero length")
                elif min(m.probs) < 0 or abs(sum(m.probs) - 1) > 1e-12:
                    out.append("jumps.marks: probs must be >= 0 and sum to 1")
        s = self.sim
        try:
            SimConfig(dt=s.dt, horizon_T=s.horizon_T, record_stride=s.record_stride)
        except ValueError as exc:
            out.append(f"sim: {exc}")
        c = self.control
        if c.control_modes > d.modes_x1 * d.modes_x2:
            out.append("control.control_modes: must not exceed modes_x1*modes_x2")
        out += _check_modal("control.u_ref", c.u_ref, dom)
        return out

    # -- builders ----------------------------------------------------------

    def build_domain(self):
        return DomainSpec(**self.domain.model_dump())

    def build_params(self, domain=None):
        dom = domain or self.build_domain()
        m = self.model
        w0 = nodal_vector(m.background_flow, dom)
        f = modal_fn(m.forcing, dom)
        return ModelParams(
            dom, alpha=m.alpha, beta=m.beta, g=m.g, r=m.r, depth=scalar_field(m.depth, dom),
            background_flow=None if w0 is None else (lambda t, w0=w0: w0),
            forcing=f,
        )

    def build_noise(self, domain=None):
        dom = domain or self.build_domain()
        w = j = None
        if self.wiener is not None:
            s = self.wiener
            w = WienerSpec.power_law(dom, s.q0, s.decay, s.sigma_add, s.sigma_mult)
        if self.jumps is not None:
            s = self.jumps
            marks = (("uniform", s.marks.low, s.marks.high) if isinstance(s.marks, UniformMarks)
                     else ("discrete", s.marks.values, s.marks.probs))
            j = JumpSpec(s.intensity, marks, s.amp_add, s.amp_mult, modal_value(s.shape, dom, 0.0))
        return NoiseModel(w, j)

    def build_sim(self):
        s = self.sim
        return SimConfig(dt=s.dt, horizon_T=s.horizon_T, record_stride=s.record_stride, seed=s.seed,
                         p_moment=s.p_moment, elevation_update=s.elevation_update,
                         divergence_threshold=s.divergence_threshold, batch_size=s.batch_size)

    def initial_state(self, domain=None):
        dom = domain or self.build_domain()
        u0 = modal_value(self.initial.u0, dom, 0.0)
        z0 = (np.zeros(dom.nodal_shape) if isinstance(self.initial.z0, ZeroScalar)
              else scalar_field(self.initial.z0, dom))
        return u0, z0


# ---------------------------------------------------------------------------
# preset evaluation
# ---------------------------------------------------------------------------


def scalar_field(spec, dom):
    x1 = dom.x1[:, None]
    x2 = dom.x2[None, :]
    if isinstance(spec, ConstantScalar):
        return np.full(dom.nodal_shape, float(spec.value))
    if isinstance(spec, LinearScalar):
        return spec.base + spec.slope_x1 * x1 + spec.slope_x2 * x2 + 0.0 * x1 * x2
    return np.array(spec.values, dtype=float)


def nodal_vector(spec, dom):
    if isinstance(spec, ZeroField):
        return None
    if isinstance(spec, UniformVector):
        v = np.asarray(spec.value, dtype=float)
        return np.broadcast_to(v[:, None, None], (2,) + dom.nodal_shape).copy()
    return np.array(spec.values, dtype=float)


def modal_value(spec, dom, t):
    shape = (2,) + dom.modal_shape
    if isinstance(spec, ZeroField):
        return np.zeros(shape)
    if isinstance(spec, ModeField):
        out = np.zeros(shape)
        out[spec.component - 1, spec.j - 1, spec.k - 1] = spec.amplitude * np.cos(2 * np.pi * spec.frequency * t)
        return out
    if isinstance(spec, RandomModal):
        rng = np.random.default_rng(spec.seed)
        return random_modal(rng, dom, smoothness=spec.smoothness, scale=spec.scale)
    return np.array(spec.values, dtype=float)


def modal_fn(spec, dom):
    if isinstance(spec, ZeroField):
        return None
    if isinstance(spec, ModeField) and spec.frequency != 0:
        return lambda t: modal_value(spec, dom, t)
    v = modal_value(spec, dom, 0.0)
    return lambda t: v


def reference_nodal(spec, dom):
    """u_ref as a function of t returning nodal values."""
    if isinstance(spec, ZeroField):
        return None
    return lambda t: synthesize(modal_value(spec, dom, t), dom)


def _check_scalar(path, spec, dom, positive=None):
    out = []
    if isinstance(spec, GridScalar):
        shape = np.shape(spec.values)
        if shape != dom.nodal_shape:
            return [f"{path}.values: shape {shape} != nodal grid {dom.nodal_shape}"]
    vals = scalar_field(spec, dom)
    if not np.all(np.isfinite(vals)):
        out.append(f"{path}: values must be finite")
    elif positive and vals.min() <= 0:
        out.append(f"{path}: {positive} (got min {vals.min():g})")
    return out


def _check_nodal_vector(path, spec, dom):
    if isinstance(spec, UniformVector) and len(spec.value) != 2:
        return [f"{path}.value: needs two components"]
    if isinstance(spec, GridVector) and np.shape(spec.values) != (2,) + dom.nodal_shape:
        return [f"{path}.values: shape {np.shape(spec.values)} != {(2,) + dom.nodal_shape}"]
    return []


def _check_modal(path, spec, dom):
    if isinstance(spec, ModeField) and (spec.j > dom.modes_x1 or spec.k > dom.modes_x2):
        return [f"{path}: mode ({spec.j}, {spec.k}) outside the span"]
    if isinstance(spec, CoefficientField) and np.shape(spec.values) != (2,) + dom.modal_shape:
        return [f"{path}.values: shape {np.shape(spec.values)} != {(2,) + dom.modal_shape}"]
    return []


# ---------------------------------------------------------------------------
# parse / dump
# ---------------------------------------------------------------------------


def _format_errors(err):
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        msg = e["msg"]
        if e["type"] == "value_error" and not loc:
            # cross-section checks arrive joined in one message
            msg = msg.removeprefix("Value error, ")
            out.extend(m.strip() for m in msg.split(" | "))
        else:
            out.append(f"{loc}: {msg}" if loc else msg)
    return out


def config_from_dict(data):
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def parse_config(path):
    """Read and validate a JSON run configuration or the config echo of a run manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror or exc})"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    if "master_seed" in data and isinstance(data.get("config"), dict):
        # a run manifest; its config echo already carries every override
        data = data["config"]
    return config_from_dict(data)


def dump_config(cfg, path=None):
    """JSON text of the config with every default written out."""
    text = json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
