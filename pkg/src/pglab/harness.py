"""Scenario-driven experiment runner.

A scenario is a plain ``key = value`` text file (one key per line, ``#``
comments) fully describing one reproducible experiment: grid, viscosities,
horizon, seeded initial data, monitors, and post-processing switches.  The
same seed always regenerates the same data (counter-based generator, named in
the schema file), so reports are bitwise reproducible.

``run_scenario`` generates data, advances the solver, post-processes through
the diagnostics and Lagrangian layers, and writes a CSV summary (one row per
run), a JSON report, a machine-readable column schema, and binary field
snapshots.  Exit status: 0 on success, 2 when an invariant or paired-run
assertion fails, 3 on numerical breakdown.  Scenario variants can fan out
into several runs: a viscosity-rescaled twin (``rescale_with``) or a sweep
over total viscosities (``nu_sweep``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dfield, fields as dfields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics, lagrangian, solver
from .field import Field, Torus, random_band_limited, save_field
from .solver import (
    CFLError,
    InvariantViolation,
    SimulationAbort,
    State,
    Trajectory,
)

RNG_ALGORITHM = "philox"
FLOAT_FORMAT = "%.17g"

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_ABORT = 3


class ScenarioError(ValueError):
    pass


def fmt17(x) -> str:
    """Canonical float rendering: 17 significant digits round-trips exactly."""
    return FLOAT_FORMAT % float(x)


# ---------------------------------------------------------------------------
# Scenario definition and the key=value format

@dataclass
class Scenario:
    name: str = "unnamed"
    dim: int = 2
    N: int = 32
    L: float = 2.0 * np.pi
    mu: float = 1.0
    mu_prime: float = 0.0
    T: float = 1.0
    dt: float = 0.005
    seed: int = 0
    u0_amplitude: float = 0.25
    u0_kmin: int = 1
    u0_kmax: int = 2
    u0_pq_balance: float = 0.5
    u0_target_p: Optional[float] = None   # 2D: pin the P-part data Besov norm
    u0_target_q: Optional[float] = None   # 2D: pin the Q-part data Besov norm
    u0_target: Optional[float] = None     # 3D: pin the data Besov norm
    rho0_amplitude: float = 0.1
    rho0_kmax: int = 2
    monitors: object = "default"
    store_velocity: bool = False
    store_density: bool = False
    flow: bool = False
    rescale_with: Optional[float] = None
    nu_sweep: Optional[list] = None
    eta_L4: Optional[float] = None
    C_cal: float = 1.0
    out: Optional[str] = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ScenarioError(f"dim must be 2 or 3, got {self.dim}")
        if not 0.0 <= self.rho0_amplitude < 1.0:
            raise ScenarioError("rho0.amplitude must lie in [0, 1)")
        if self.u0_amplitude < 0:
            raise ScenarioError("u0.amplitude must be nonnegative")
        if not 0.0 <= self.u0_pq_balance <= 1.0:
            raise ScenarioError("u0.pq_balance must lie in [0, 1]")
        if self.monitors != "default":
            for m in self.monitors:
                if m not in solver.MONITORS:
                    raise ScenarioError(f"unknown monitor '{m}'")
                if self.dim not in solver.MONITORS[m].dims:
                    raise ScenarioError(
                        f"monitor '{m}' is not defined in dimension {self.dim}"
                    )

    def monitor_list(self) -> list:
        if self.monitors == "default":
            return solver.default_monitors(self.dim)
        return list(self.monitors)


_KEY_MAP = {
    "name": "name", "dim": "dim", "N": "N", "L": "L", "mu": "mu",
    "mu_prime": "mu_prime", "T": "T", "dt": "dt", "seed": "seed",
    "u0.amplitude": "u0_amplitude", "u0.kmin": "u0_kmin", "u0.kmax": "u0_kmax",
    "u0.pq_balance": "u0_pq_balance", "u0.target_p": "u0_target_p",
    "u0.target_q": "u0_target_q", "u0.target": "u0_target",
    "rho0.amplitude": "rho0_amplitude", "rho0.kmax": "rho0_kmax",
    "monitors": "monitors", "store_velocity": "store_velocity",
    "store_density": "store_density", "flow": "flow",
    "rescale_with": "rescale_with", "nu_sweep": "nu_sweep",
    "eta_L4": "eta_L4", "C_cal": "C_cal", "out": "out",
}
_ATTR_MAP = {v: k for k, v in _KEY_MAP.items()}
_INT_KEYS = {"dim", "N", "seed", "u0_kmin", "u0_kmax", "rho0_kmax"}
_BOOL_KEYS = {"store_velocity", "store_density", "flow"}
_STR_KEYS = {"name", "out"}
_LIST_KEYS = {"monitors", "nu_sweep"}


def parse_scenario(text: str) -> Scenario:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEY_MAP:
            raise ScenarioError(f"line {lineno}: unknown key '{key}'")
        attr = _KEY_MAP[key]
        if attr in values:
            raise ScenarioError(f"line {lineno}: duplicate key '{key}'")
        values[attr] = _parse_value(attr, val, lineno)
    return Scenario(**values)


def _parse_value(attr, val, lineno):
    if attr in _STR_KEYS:
        return val
    if attr in _BOOL_KEYS:
        low = val.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ScenarioError(f"line {lineno}: boolean expected, got {val!r}")
    if attr == "monitors":
        return "default" if val == "default" else [s.strip() for s in val.split(",")]
    if attr == "nu_sweep":
        return [float(s) for s in val.split(",")]
    if val.lower() == "none":
        return None
    try:
        return int(val) if attr in _INT_KEYS else float(val)
    except ValueError:
        raise ScenarioError(f"line {lineno}: bad number {val!r} for '{attr}'")


def format_scenario(sc: Scenario) -> str:
    lines = []
    for f in dfields(Scenario):
        v = getattr(sc, f.name)
        if v is None:
            continue
        key = _ATTR_MAP[f.name]
        if f.name in _BOOL_KEYS:
            out = "true" if v else "false"
        elif f.name == "monitors":
            out = v if v == "default" else ", ".join(v)
        elif f.name == "nu_sweep":
            out = ", ".join(fmt17(x) for x in v)
        elif isinstance(v, float):
            out = fmt17(v)
        else:
            out = str(v)
        lines.append(f"{key} = {out}")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


# ---------------------------------------------------------------------------
# Seeded data generation

def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def generate_initial_data(sc: Scenario):
    """(rho0, u0) from the scenario's seed; the generator fully determines both.

    The velocity is band-limited noise split into divergence-free and
    potential parts, mixed by ``u0.pq_balance`` (0 = all P, 1 = all Q) at
    ``u0.amplitude``; optional targets rescale each part to a prescribed
    data-space Besov norm instead.
    """
    tor = Torus(sc.dim, sc.L, sc.N)
    rng = make_rng(sc.seed)
    d = sc.dim

    raw = random_band_limited(tor, rng, sc.u0_kmax, kmin=sc.u0_kmin, ncomp=d)
    noise = random_band_limited(tor, rng, sc.rho0_kmax, kmin=1, ncomp=1)

    if sc.u0_amplitude == 0.0 and sc.u0_target_p is None and sc.u0_target is None:
        u0 = Field(tor, np.zeros((d,) + tor.shape))
    else:
        pq = solver.helmholtz(raw)
        P, Q = pq.P_part, pq.Q_part

        def unit(f):
            m = float(f.magnitude().max())
            return Field(tor, f.values / m) if m > 0 else f

        if d == 2 and (sc.u0_target_p is not None or sc.u0_target_q is not None):
            from .besov import besov_norm

            vals = np.zeros((d,) + tor.shape)
            if sc.u0_target_p is not None:
                np_ = besov_norm(P, 0.5, 4.0 / 3.0, 1.0)
                vals += sc.u0_target_p / np_ * P.values
            if sc.u0_target_q is not None:
                nq = besov_norm(Q, 0.5, 4.0 / 3.0, 1.0)
                vals += sc.u0_target_q / nq * Q.values
            u0 = Field(tor, vals)
        elif d == 3 and sc.u0_target is not None:
            from .besov import besov_norm

            mix = Field(tor, (1.0 - sc.u0_pq_balance) * unit(P).values
                        + sc.u0_pq_balance * unit(Q).values)
            n0 = besov_norm(mix, 1.2, 2.5, 1.0)
            u0 = Field(tor, sc.u0_target / n0 * mix.values)
        else:
            mix = (1.0 - sc.u0_pq_balance) * unit(P).values + sc.u0_pq_balance * unit(Q).values
            m = np.max(np.sqrt(np.sum(mix**2, axis=0)))
            u0 = Field(tor, sc.u0_amplitude * mix / m if m > 0 else mix)

    if sc.rho0_amplitude == 0.0:
        rho0 = Field(tor, np.ones(tor.shape))
    else:
        rho0 = Field(tor, 1.0 + sc.rho0_amplitude * noise.values[0])
    return rho0, u0


# ---------------------------------------------------------------------------
# Output plumbing

def output_root(override=None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get("PGL_OUTPUT_DIR")
    return Path(env) if env else Path("pgl_out")


def _csv_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt17(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def write_schema(path, columns) -> None:
    schema = {
        "columns": list(columns),
        "rng": RNG_ALGORITHM,
        "float_format": FLOAT_FORMAT,
    }
    with open(path, "w") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Running

@dataclass
class ScenarioResult:
    exit_code: int
    message: str
    scenario: Scenario
    output_dir: Optional[Path]
    rows: list = dfield(default_factory=list)
    reports: list = dfield(default_factory=list)
    trajectories: list = dfield(default_factory=list)
    extras: dict = dfield(default_factory=dict)


def _variants(sc: Scenario):
    """Expand a scenario into (label, mu, mu_prime, T, dt, data_scale) runs.

    The rescaled twin multiplies the velocity data by the factor and shrinks
    the horizon accordingly, so the pair is related by the exact scaling
    symmetry of the system.  A nu sweep keeps mu = 1 and varies the second
    viscosity so nu = mu + mu' hits each requested value with fixed data.
    """
    if sc.rescale_with is not None:
        lam = sc.rescale_with
        return [
            ("mu1", sc.mu, sc.mu_prime, sc.T, sc.dt, 1.0),
            (f"mu{fmt17(lam)}" if lam != int(lam) else f"mu{int(lam)}",
             sc.mu * lam, sc.mu_prime * lam, sc.T / lam, sc.dt / lam, lam),
        ]
    if sc.nu_sweep is not None:
        out = []
        for nu in sc.nu_sweep:
            if nu < sc.mu:
                raise ScenarioError(f"nu_sweep value {nu} below mu={sc.mu}")
            out.append((f"nu{int(nu) if nu == int(nu) else fmt17(nu)}",
                        sc.mu, nu - sc.mu, sc.T, sc.dt, 1.0))
        return out
    return [("run", sc.mu, sc.mu_prime, sc.T, sc.dt, 1.0)]


def run_scenario(sc: Scenario, output_dir=None, write_artifacts: bool = True) -> ScenarioResult:
    rho0, u0 = generate_initial_data(sc)
    tor = rho0.torus
    outdir = None
    if write_artifacts:
        outdir = output_root(output_dir) / (sc.out or sc.name)
        outdir.mkdir(parents=True, exist_ok=True)

    need_store = sc.flow or sc.store_velocity
    monitors = sc.monitor_list()
    cfg = diagnostics.DiagnosticsConfig(C_cal=sc.C_cal, eta_L4=sc.eta_L4)

    rows, reports, trajs, labels = [], [], [], []
    extras = {}
    try:
        for label, mu, mup, T, dt, scale in _variants(sc):
            init = State(0.0, rho0, Field(tor, u0.values * scale), mu, mup)
            traj = solver.run(
                init, T, dt, monitors=monitors,
                store_velocity=need_store, store_density=sc.store_density or sc.flow,
            )
            rep = diagnostics.diagnose(traj, cfg)
            trajs.append(traj)
            reports.append(rep)
            labels.append(label)

            row = [
                ("name", sc.name), ("run", label), ("seed", sc.seed),
                ("N", sc.N), ("L", sc.L), ("T", T), ("dt", dt),
            ] + rep.csv_items()
            if sc.flow:
                flow = lagrangian.integrate_flow(traj)
                resid = lagrangian.mass_identity_check(
                    flow, traj.density_frames, traj.times
                )
                row.append(("mass_identity_residual", resid))
                extras.setdefault("flows", []).append(flow)
                if resid > 1e-3:
                    raise InvariantViolation(
                        f"mass-transport identity residual {resid:.3e} > 1e-3 "
                        f"on run '{label}'"
                    )
            rows.append(row)

        _cross_run_assertions(sc, labels, trajs, reports, extras)
    except (InvariantViolation, CFLError) as exc:
        return _finish(sc, outdir, rows, reports, trajs, extras,
                       EXIT_INVARIANT, f"invariant violation: {exc}")
    except SimulationAbort as exc:
        where = f" (step {exc.step}, t={exc.time:.6g})" if exc.step is not None else ""
        return _finish(sc, outdir, rows, reports, trajs, extras,
                       EXIT_ABORT, f"numerical abort: {exc}{where}")

    res = _finish(sc, outdir, rows, reports, trajs, extras, EXIT_OK, "ok")
    if write_artifacts:
        _write_artifacts(sc, outdir, rho0, u0, labels, trajs, extras)
    return res


def _cross_run_assertions(sc, labels, trajs, reports, extras):
    if sc.rescale_with is not None and len(trajs) == 2:
        base, twin = trajs
        lam = sc.rescale_with
        worst = 0.0
        for name in base.monitors:
            p = solver.MONITORS[name].mu_power
            a = base.monitors[name] * base.mu**p
            b = twin.monitors[name] * twin.mu**p
            scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
            worst = max(worst, float(np.abs(a - b).max()) / scale)
        extras["rescale_monitor_mismatch"] = worst
        if worst > 1e-6:
            raise InvariantViolation(
                f"rescaled-pair monitor mismatch {worst:.3e} > 1e-6"
            )
        rworst = 0.0
        for k in reports[0].inequality_ratios:
            a, b = reports[0].inequality_ratios[k], reports[1].inequality_ratios[k]
            rworst = max(rworst, abs(a - b) / max(abs(a), abs(b), 1e-300))
        extras["rescale_ratio_mismatch"] = rworst
        if rworst > 1e-6:
            raise InvariantViolation(
                f"rescaled-pair inequality-ratio mismatch {rworst:.3e} > 1e-6"
            )
    if sc.nu_sweep is not None:
        ints = [r.div_u_L1Linf for r in reports]
        extras["div_u_integrals"] = ints
        for a, b in zip(ints, ints[1:]):
            if b > a * (1.0 + 1e-9):
                raise InvariantViolation(
                    "div-u integral not nonincreasing across nu sweep: "
                    + ", ".join(fmt17(x) for x in ints)
                )


def _finish(sc, outdir, rows, reports, trajs, extras, code, message) -> ScenarioResult:
    if outdir is not None and rows:
        header = [k for k, _ in rows[0]]
        write_csv(outdir / "summary.csv", header, [[v for _, v in r] for r in rows])
        write_schema(outdir / "schema.json", header)
        payload = {
            "scenario": format_scenario(sc),
            "exit_code": code,
            "message": message,
            "reports": [r.to_dict() for r in reports],
        }
        for k, v in extras.items():
            if k != "flows":
                payload[k] = v
        with open(outdir / "report.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return ScenarioResult(
        exit_code=code, message=message, scenario=sc, output_dir=outdir,
        rows=rows, reports=reports, trajectories=trajs, extras=extras,
    )


def _write_artifacts(sc, outdir, rho0, u0, labels, trajs, extras):
    (outdir / "scenario.txt").write_text(format_scenario(sc))
    save_field(outdir / "initial_rho.pglf", rho0)
    save_field(outdir / "initial_u.pglf", u0)
    for label, traj in zip(labels, trajs):
        save_field(outdir / f"final_u_{label}.pglf", traj.final.u)
        save_field(outdir / f"final_rho_{label}.pglf", traj.final.rho)
    for i, flow in enumerate(extras.get("flows", [])):
        lagrangian.save_flow(outdir / f"flow_{labels[i]}.pglf", flow)


# ---------------------------------------------------------------------------
# Built-in scenarios

BUILTIN_SCENARIOS = {
    "null": """\
name = null
dim = 2
N = 16
T = 0.1
dt = 0.01
u0.amplitude = 0
rho0.amplitude = 0
""",
    "calibration-2d": """\
name = calibration-2d
dim = 2
N = 32
mu = 1.0
mu_prime = 0.5
T = 1.0
dt = 0.005
seed = 2001
u0.amplitude = 0.3
u0.kmax = 2
rho0.amplitude = 0.1
""",
    "rescale-pair": """\
name = rescale-pair
dim = 2
N = 32
mu = 1.0
mu_prime = 0.5
T = 1.0
dt = 0.005
seed = 2002
u0.amplitude = 0.3
rho0.amplitude = 0.1
rescale_with = 4
""",
    "nu-sweep": """\
name = nu-sweep
dim = 2
N = 32
mu = 1.0
T = 1.0
dt = 0.001          # the nu=64 coupling term is explicit, so keep dt small
seed = 2003
u0.amplitude = 0.3
u0.pq_balance = 0.7   # mostly potential part so div u is active
rho0.amplitude = 0.05
nu_sweep = 1, 4, 16, 64
""",
    "small-3d": """\
name = small-3d
dim = 3
N = 32
mu = 1.0
T = 5.0
dt = 0.005
seed = 3001
u0.target = 0.4
u0.pq_balance = 0.5
rho0.amplitude = 0.05
""",
    "mass-transport-2d": """\
name = mass-transport-2d
dim = 2
N = 32
mu = 0.4
mu_prime = 0.2
T = 0.5
dt = 0.005
seed = 2004
u0.amplitude = 0.4
u0.pq_balance = 0.6
rho0.amplitude = 0.1
store_velocity = true
store_density = true
flow = true
""",
}


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioError(
            f"no built-in scenario '{name}'; available: "
            + ", ".join(sorted(BUILTIN_SCENARIOS))
        )
    return parse_scenario(BUILTIN_SCENARIOS[name])
