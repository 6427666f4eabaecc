"""Run configuration: INI-style text with a fixed expression catalog.

The format is [section] headers over key = value lines, # comments, no
nesting.  Data functions (psi, phi_b, phi_s) come from a small catalog of
named expressions with analytic time derivatives; chi comes from a
matching catalog of constant tensors.  Parsing is strict: unknown
sections or keys, duplicates, and malformed values all fail with the
offending line number, and the assembled problem is validated before any
compute starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidConfigurationError
from .flow import GridFunction, NewtonConfig, ProblemSpec
from .grids import BOX, COMPONENTS, Grid, PERIODIC, ScalarField, SymTensorField
from .monitors import WeightParams
from .operators import make_operator

_REQUIRED = object()

SECTION_NAMES = ("grid", "operator", "chi", "psi", "phi_b", "phi_s", "flow",
                 "newton", "monitors", "steady", "subsolution", "certify",
                 "structure")

EXPRESSION_KINDS = ("constant", "affine", "quadratic", "trig", "gaussian")


def _parse_sections(text):
    """Raw pass: {section: {key: (value, line_no)}} with duplicate checks."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SECTION_NAMES:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", line=lineno)
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside any [section]", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in [{current}]", line=lineno)
        sections[current][key] = (value, lineno)
    return sections


class _Section:
    """Typed access to one raw section with unknown-key accounting."""

    def __init__(self, name, raw):
        self.name = name
        self.raw = raw
        self.used = set()

    def _fetch(self, key, default):
        if key in self.raw:
            self.used.add(key)
            return self.raw[key][0]
        if default is _REQUIRED:
            raise ConfigError(f"[{self.name}] is missing required key '{key}'")
        return None

    def line_of(self, key):
        return self.raw[key][1] if key in self.raw else None

    def string(self, key, default=_REQUIRED, choices=None):
        val = self._fetch(key, default)
        if val is None:
            return default
        if choices is not None and val not in choices:
            raise ConfigError(
                f"[{self.name}] {key} must be one of {', '.join(choices)}; "
                f"got '{val}'", line=self.line_of(key))
        return val

    def real(self, key, default=_REQUIRED):
        val = self._fetch(key, default)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} is not a number: '{val}'",
                              line=self.line_of(key)) from None

    def integer(self, key, default=_REQUIRED):
        val = self._fetch(key, default)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} is not an integer: '{val}'",
                              line=self.line_of(key)) from None

    def reals(self, key, count=None, default=_REQUIRED):
        val = self._fetch(key, default)
        if val is None:
            return default
        try:
            out = tuple(float(tok) for tok in val.split())
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} has non-numeric entries",
                              line=self.line_of(key)) from None
        if count is not None and len(out) != count:
            raise ConfigError(
                f"[{self.name}] {key} needs {count} values, got {len(out)}",
                line=self.line_of(key))
        return out

    def integers(self, key, default=_REQUIRED):
        val = self._fetch(key, default)
        if val is None:
            return default
        try:
            return tuple(int(tok) for tok in val.split())
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} has non-integer entries",
                              line=self.line_of(key)) from None

    def rows(self, key, default=_REQUIRED):
        """Semicolon-separated rows of floats."""
        val = self._fetch(key, default)
        if val is None:
            return default
        out = []
        for part in val.split(";"):
            part = part.strip()
            if not part:
                continue
            try:
                out.append(tuple(float(tok) for tok in part.split()))
            except ValueError:
                raise ConfigError(f"[{self.name}] {key} has a malformed row "
                                  f"'{part}'", line=self.line_of(key)) from None
        return out

    def finish(self):
        leftover = sorted(set(self.raw) - self.used)
        if leftover:
            key = leftover[0]
            raise ConfigError(f"[{self.name}] has unknown key '{key}'",
                              line=self.line_of(key))


def _section(sections, name):
    return _Section(name, sections.get(name, {}))


def build_expression(sec, n):
    """One catalog expression as a GridFunction with an analytic rate."""
    kind = sec.string("kind", choices=EXPRESSION_KINDS)

    if kind == "constant":
        value = sec.real("value")
        return GridFunction(lambda coords, t: np.full(coords[0].shape, value),
                            time_independent=True)

    if kind == "affine":
        c0 = sec.real("constant", 0.0)
        lin = np.array(sec.reals("linear", count=n, default=(0.0,) * n))
        rate = sec.real("rate", 0.0)

        def fn(coords, t):
            out = np.full(coords[0].shape, c0 + rate * t)
            for i in range(n):
                out += lin[i] * coords[i]
            return out

        return GridFunction(fn, fn_dt=lambda coords, t: np.full(
            coords[0].shape, rate), time_independent=rate == 0.0)

    if kind == "quadratic":
        c0 = sec.real("constant", 0.0)
        lin = np.array(sec.reals("linear", count=n, default=(0.0,) * n))
        slots = COMPONENTS[n]
        quad = np.array(sec.reals("quad", count=len(slots),
                                  default=(0.0,) * len(slots)))
        rate = sec.real("rate", 0.0)

        def fn(coords, t):
            out = np.full(coords[0].shape, c0 + rate * t)
            for i in range(n):
                out += lin[i] * coords[i]
            for q, (i, j) in zip(quad, slots):
                if i == j:
                    out += 0.5 * q * coords[i] * coords[i]
                else:
                    out += q * coords[i] * coords[j]
            return out

        return GridFunction(fn, fn_dt=lambda coords, t: np.full(
            coords[0].shape, rate), time_independent=rate == 0.0)

    if kind == "trig":
        amp = sec.real("amp")
        freq = np.array(sec.reals("freq", count=n))
        phase = np.array(sec.reals("phase", count=n, default=(0.0,) * n))
        decay = sec.real("decay", 0.0)
        offset = sec.real("offset", 0.0)

        def spatial(coords):
            out = np.full(coords[0].shape, amp)
            for i in range(n):
                if freq[i] == 0.0 and phase[i] == 0.0:
                    continue  # idle axis contributes a factor of one
                out = out * np.sin(freq[i] * coords[i] + phase[i])
            return out

        fn = lambda coords, t: spatial(coords) * np.exp(-decay * t) + offset
        fn_dt = lambda coords, t: -decay * spatial(coords) * np.exp(-decay * t)
        return GridFunction(fn, fn_dt=fn_dt, time_independent=decay == 0.0)

    amp = sec.real("amp")
    center = np.array(sec.reals("center", count=n))
    width = np.array(sec.reals("width", count=n))
    if np.any(width <= 0):
        raise ConfigError(f"[{sec.name}] width entries must be positive",
                          line=sec.line_of("width"))
    decay = sec.real("decay", 0.0)
    offset = sec.real("offset", 0.0)

    def bump(coords):
        expo = np.zeros(coords[0].shape)
        for i in range(n):
            expo -= (coords[i] - center[i]) ** 2 / (2.0 * width[i] ** 2)
        return amp * np.exp(expo)

    fn = lambda coords, t: bump(coords) * np.exp(-decay * t) + offset
    fn_dt = lambda coords, t: -decay * bump(coords) * np.exp(-decay * t)
    return GridFunction(fn, fn_dt=fn_dt, time_independent=decay == 0.0)


def build_chi(sec, grid):
    kind = sec.string("kind", choices=("zero", "scaled_identity", "constant"))
    if kind == "zero":
        return SymTensorField.zero(grid)
    if kind == "scaled_identity":
        return SymTensorField.scaled_identity(grid, sec.real("scale"))
    slots = COMPONENTS[grid.n]
    entries = sec.reals("entries", count=len(slots))
    comps = np.empty(grid.shape + (len(slots),))
    for s, val in enumerate(entries):
        comps[..., s] = val
    return SymTensorField(grid, comps)


@dataclass
class MonitorSettings:
    sample_every: int = 1
    snapshot_every: int = None
    subsolution: str = "none"
    safety: float = 0.1
    weight: WeightParams = None


@dataclass
class SteadySettings:
    tol: float = 1e-8
    max_steps: int = 200


@dataclass
class SubsolutionSettings:
    safety: float = 0.1
    strict_delta: float = 0.0
    times: tuple = None


@dataclass
class CertifySettings:
    beta: float = None
    mu: list = None
    gap_budget: int = 100000
    levels: tuple = None
    anchors: list = None
    eps: float = 0.05
    parabolic_budget: int = 100000
    pad: float = 1.0


@dataclass
class StructureSettings:
    sample_budget: int = 2000
    f_band: tuple = (0.5, 2.0)


@dataclass
class RunConfig:
    problem: ProblemSpec
    monitors: MonitorSettings
    steady: SteadySettings
    subsolution: SubsolutionSettings
    certify: CertifySettings
    structure: StructureSettings


def parse_config(text):
    """Parse and fully validate a run configuration."""
    sections = _parse_sections(text)

    gsec = _section(sections, "grid")
    if not gsec.raw:
        raise ConfigError("missing required section [grid]")
    shape = gsec.integers("shape")
    lengths = gsec.reals("lengths", count=len(shape))
    topology = gsec.string("topology", PERIODIC, choices=(PERIODIC, BOX))
    origin = gsec.reals("origin", count=len(shape), default=None)
    gsec.finish()
    try:
        grid = Grid(shape=shape, lengths=lengths, topology=topology,
                    origin=origin)
    except (InvalidConfigurationError, ValueError) as exc:
        raise ConfigError(f"[grid] {exc}") from exc

    osec = _section(sections, "operator")
    if not osec.raw:
        raise ConfigError("missing required section [operator]")
    family = osec.string("family")
    k = osec.integer("k", None)
    l = osec.integer("l", None)
    osec.finish()
    try:
        operator = make_operator(family, grid.n, k=k, l=l)
    except (InvalidConfigurationError, ValueError) as exc:
        raise ConfigError(f"[operator] {exc}") from exc

    csec = _section(sections, "chi")
    if csec.raw:
        chi = build_chi(csec, grid)
        csec.finish()
    else:
        chi = SymTensorField.zero(grid)

    psec = _section(sections, "psi")
    if not psec.raw:
        raise ConfigError("missing required section [psi]")
    psi = build_expression(psec, grid.n)
    psec.finish()

    bsec = _section(sections, "phi_b")
    if not bsec.raw:
        raise ConfigError("missing required section [phi_b]")
    phi_b_fn = build_expression(bsec, grid.n)
    bsec.finish()
    phi_b = ScalarField(grid, phi_b_fn(grid.coords(), 0.0))

    phi_s = None
    if "phi_s" in sections:
        ssec = _section(sections, "phi_s")
        phi_s = build_expression(ssec, grid.n)
        ssec.finish()

    fsec = _section(sections, "flow")
    form = fsec.string("form", "additive", choices=("additive", "exponential"))
    stepper = fsec.string("stepper", "implicit",
                          choices=("implicit", "explicit"))
    dt = fsec.real("dt", 0.01)
    horizon = fsec.real("horizon", 1.0)
    fsec.finish()

    nsec = _section(sections, "newton")
    try:
        newton = NewtonConfig(
            residual_tol=nsec.real("residual_tol", 1e-10),
            max_iters=nsec.integer("max_iters", 30),
            damping_floor=nsec.real("damping_floor", 1e-4),
            linear_tol=nsec.real("linear_tol", 1e-8),
            admissibility_margin=nsec.real("admissibility_margin", 1e-8))
    except ValueError as exc:
        raise ConfigError(f"[newton] {exc}") from exc
    nsec.finish()

    problem = ProblemSpec(grid=grid, operator=operator, chi=chi, psi=psi,
                          phi_b=phi_b, phi_s=phi_s, form=form, horizon=horizon,
                          stepper=stepper, dt=dt, newton=newton)
    try:
        problem.validate()
    except InvalidConfigurationError as exc:
        raise ConfigError(str(exc)) from exc

    msec = _section(sections, "monitors")
    weight = None
    if any(key in msec.raw for key in ("weight_a", "weight_b", "weight_delta")):
        weight = WeightParams(a=msec.real("weight_a"), b=msec.real("weight_b"),
                              delta01=msec.integer("weight_delta"))
    monitors = MonitorSettings(
        sample_every=msec.integer("sample_every", 1),
        snapshot_every=msec.integer("snapshot_every", None),
        subsolution=msec.string("subsolution", "none",
                                choices=("none", "linear")),
        safety=msec.real("safety", 0.1),
        weight=weight)
    msec.finish()
    if monitors.weight is not None and monitors.subsolution == "none":
        raise ConfigError("[monitors] weight tracking needs subsolution = linear")

    tsec = _section(sections, "steady")
    steady = SteadySettings(tol=tsec.real("tol", 1e-8),
                            max_steps=tsec.integer("max_steps", 200))
    tsec.finish()

    usec = _section(sections, "subsolution")
    subsolution = SubsolutionSettings(
        safety=usec.real("safety", 0.1),
        strict_delta=usec.real("strict_delta", 0.0),
        times=usec.reals("times", default=None))
    usec.finish()

    esec = _section(sections, "certify")
    certify = CertifySettings(
        beta=esec.real("beta", None),
        mu=esec.rows("mu", default=None),
        gap_budget=esec.integer("gap_budget", 100000),
        levels=esec.reals("levels", default=None),
        anchors=esec.rows("anchors", default=None),
        eps=esec.real("eps", 0.05),
        parabolic_budget=esec.integer("parabolic_budget", 100000),
        pad=esec.real("pad", 1.0))
    esec.finish()
    if certify.beta is not None and certify.mu is None:
        raise ConfigError("[certify] beta needs anchor rows in mu")
    if certify.levels is not None and certify.anchors is None:
        raise ConfigError("[certify] levels need anchor rows in anchors")
    for row in certify.mu or []:
        if len(row) != grid.n:
            raise ConfigError(f"[certify] mu row has {len(row)} entries, "
                              f"expected {grid.n}")
    for row in certify.anchors or []:
        if len(row) != grid.n + 1:
            raise ConfigError(f"[certify] anchor rows need {grid.n} eigenvalues "
                              f"plus a rate")

    ssec2 = _section(sections, "structure")
    structure = StructureSettings(
        sample_budget=ssec2.integer("sample_budget", 2000),
        f_band=ssec2.reals("f_band", count=2, default=(0.5, 2.0)))
    ssec2.finish()

    return RunConfig(problem=problem, monitors=monitors, steady=steady,
                     subsolution=subsolution, certify=certify,
                     structure=structure)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
