"""Command-line front end: identity suite, state validation, matrix dumps,
solver runs and parameter sweeps.

Exit codes: 0 success, 1 check failure or solver error, 2 config error.
"""
import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basic_state import (CurvedFamily, boundary_coefficients, check_constraints, check_stability,
                          make_planar_state)
from .eos import EosParams
from .errors import ConfigError, MhdLabError
from .lifting import FrontField, make_cutoff, sup_normal_derivative
from .plasma import (InterfaceGeometry, PlasmaState, a_matrix, atilde1_matrix, cal_a_matrix,
                     constant_E)
from .solver import Grid, energy_report, energy_rows, interface_matrices, run_energy_experiment, thread_count
from .vacuum import (RegularizationParams, b_matrix, det_frakB1, det_M1_formula, frakb_matrix,
                     m_matrix)

REQUIRED_KEYS = ("grid.N1", "grid.N2", "grid.N3", "grid.dt", "run.T", "reg.epsilon", "reg.gamma",
                 "state.family", "forcing.family", "forcing.amplitude")
STATE_FAMILIES = ("planar", "curved")
FORCING_FAMILIES = ("compact", "zero")
DIGITS = 17


def fmt(x):
    return f"{float(x):.{DIGITS}g}"


# ---------------------------------------------------------------- config

@dataclass
class SolverConfig:
    N1: int
    N2: int
    N3: int
    dt: object
    T: float
    epsilon: float
    gamma: float
    state_family: str
    forcing_family: str
    forcing_amplitude: float
    forcing_duration: float = 0.5
    samples: int = 100
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text):
        raw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
        return cls.from_mapping(raw)

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_text(text)

    @classmethod
    def from_mapping(cls, raw):
        for k in REQUIRED_KEYS:
            if k not in raw:
                raise ConfigError(f"missing key {k}")

        def num(key, kind=float):
            try:
                return kind(raw[key])
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {raw[key]!r} as {kind.__name__}") from None

        dt = raw["grid.dt"]
        if dt != "auto":
            dt = num("grid.dt")
            if not dt > 0:
                raise ConfigError("grid.dt must be positive or 'auto'")
        cfg = cls(N1=num("grid.N1", int), N2=num("grid.N2", int), N3=num("grid.N3", int), dt=dt,
                  T=num("run.T"), epsilon=num("reg.epsilon"), gamma=num("reg.gamma"),
                  state_family=raw["state.family"], forcing_family=raw["forcing.family"],
                  forcing_amplitude=num("forcing.amplitude"))
        if "forcing.duration" in raw:
            cfg.forcing_duration = num("forcing.duration")
        if "run.samples" in raw:
            cfg.samples = num("run.samples", int)
        known = set(REQUIRED_KEYS) | {"forcing.duration", "run.samples"}
        cfg.extras = {k: v for k, v in raw.items() if k not in known}
        cfg.validate()
        return cfg

    def validate(self):
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"reg.epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.gamma >= 1:
            raise ConfigError(f"reg.gamma must be >= 1, got {self.gamma}")
        if not self.T > 0:
            raise ConfigError("run.T must be positive")
        if self.state_family not in STATE_FAMILIES:
            raise ConfigError(f"state.family must be one of {STATE_FAMILIES}")
        if self.forcing_family not in FORCING_FAMILIES:
            raise ConfigError(f"forcing.family must be one of {FORCING_FAMILIES}")
        if not self.forcing_duration > 0:
            raise ConfigError("forcing.duration must be positive")
        for key, n in (("grid.N1", self.N1), ("grid.N2", self.N2), ("grid.N3", self.N3)):
            if n < 4:
                raise ConfigError(f"{key} must be at least 4")
        for key, n in (("grid.N2", self.N2), ("grid.N3", self.N3)):
            if n & (n - 1):
                raise ConfigError(f"{key} must be a power of two")

    def grid(self):
        if self.dt == "auto":
            return Grid.for_epsilon(self.N1, self.N2, self.N3, self.T, self.epsilon)
        return Grid(self.N1, self.N2, self.N3, self.dt, self.T)

    def family(self):
        return state_family(self.state_family)

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return SolverConfig(**d)


def state_family(name):
    """Named basic states: the reference planar state or the curved family."""
    if name == "planar":
        return make_planar_state((0, 1, 0), (0, 0, 1), (0, 0.3, 0.2), 2.0)
    if name == "curved":
        return CurvedFamily()
    raise ConfigError(f"state.family must be one of {STATE_FAMILIES}")


# ---------------------------------------------------------------- identity suite

@dataclass
class Draw:
    U: PlasmaState
    geom: InterfaceGeometry
    wall: InterfaceGeometry
    eps: float
    nu: np.ndarray
    nu_bad: np.ndarray
    v: np.ndarray


def random_draw(rng):
    """One admissible random point: plasma state, geometry, epsilon and nu."""
    H = rng.normal(0, 1, 3)
    p = rng.uniform(0.5, 2.0)
    U = PlasmaState(p + 0.5 * H @ H, rng.normal(0, 0.5, 3), H, rng.uniform(-0.5, 0.5))
    g = rng.uniform(-0.5, 0.5, 3)
    geom = InterfaceGeometry(g[0], g[1], g[2], rng.uniform(0.5, 2.0))
    wall = InterfaceGeometry(g[0], g[1], g[2], 1.0)
    eps = rng.uniform(0.05, 0.9)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    nu = d * rng.uniform(0.05, 0.95) / eps
    nu_bad = d * rng.uniform(1.05, 2.0) / eps
    v = rng.normal(0, 0.5, 3)
    return Draw(U, geom, wall, eps, nu, nu_bad, v)


def _sym_err(M):
    return float(np.max(np.abs(M - M.T)) / max(np.max(np.abs(M)), 1e-300))


def _is_pd(M):
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0)


def _counts(M, tol=1e-9):
    lam = np.linalg.eigvalsh(M)
    t = tol * np.max(np.abs(lam))
    return int(np.sum(lam < -t)), int(np.sum(np.abs(lam) <= t)), int(np.sum(lam > t))


def draw_checks(d: Draw, eos=EosParams(), corrupt=False):
    """(name, passed, value) for every identity at one draw."""
    out = []
    A = [a_matrix(k, d.U, eos) for k in range(4)]
    if corrupt:
        A[0] = A[0].copy()
        A[0][0, 4] += 1e-3
    built = {f"A{k}": A[k] for k in range(4)}
    built["Atilde1"] = atilde1_matrix(d.U, d.geom, eos)
    built.update({f"calA{k}": cal_a_matrix(k, d.U, d.geom, eos) for k in range(4)})
    built.update({f"B{j}": b_matrix(j, d.eps) for j in (1, 2, 3)})
    built.update({f"frakB{k}": frakb_matrix(k, d.eps, d.nu) for k in range(4)})
    built.update({f"M{k}": m_matrix(k, d.eps, d.nu, d.geom) for k in range(4)})
    for name, M in built.items():
        e = _sym_err(M)
        out.append((f"symmetric {name}", e <= 1e-12, e))
    for name in ("A0", "calA0", "frakB0", "M0"):
        out.append((f"positive definite {name}", _is_pd(built[name]), np.linalg.eigvalsh(built[name])[0]))
    bad = frakb_matrix(0, d.eps, d.nu_bad)
    out.append(("frakB0 not positive definite for eps|nu| > 1", not _is_pd(bad), np.linalg.eigvalsh(bad)[0]))
    prm = RegularizationParams(d.eps, d.nu)
    num = np.linalg.det(frakb_matrix(1, d.eps, d.nu))
    ref = det_frakB1(prm)
    out.append(("det frakB1 formula", abs(num - ref) <= 1e-10 * abs(ref), abs(num - ref) / abs(ref)))
    num = np.linalg.det(m_matrix(1, d.eps, d.nu, d.wall))
    ref = det_M1_formula(prm, d.wall.dPsi_2, d.wall.dPsi_3)
    out.append(("det M1 formula", abs(num - ref) <= 1e-8 * abs(ref), abs(num - ref) / abs(ref)))
    nu_c = np.array([d.v[1] * d.wall.dPsi_2 + d.v[2] * d.wall.dPsi_3, d.v[1], d.v[2]])
    eps_c = min(d.eps, 0.9 / max(np.linalg.norm(nu_c), 1e-12))
    M1c = m_matrix(1, eps_c, nu_c, d.wall)
    scale = np.max(np.abs(M1c)) ** 6
    dc = abs(np.linalg.det(M1c))
    out.append(("det M1 vanishes for the characteristic nu", dc <= 1e-8 * scale, dc / scale))
    c = _counts(constant_E(2).entries)
    out.append(("E12 spectrum (-1, +1, 0 x6)", c == (1, 6, 1)
                and np.allclose(np.linalg.eigvalsh(constant_E(2).entries)[[0, -1]], [-1, 1]), c))
    lam = np.linalg.eigvalsh(b_matrix(1, d.eps))
    ok = _counts(b_matrix(1, d.eps)) == (2, 2, 2) and np.allclose(lam[[0, 1, 4, 5]], np.array([-1, -1, 1, 1]) / d.eps)
    out.append(("B1 spectrum (-1/eps x2, 0 x2, +1/eps x2)", ok, _counts(b_matrix(1, d.eps))))
    return out


def identity_suite(seed, draws, corrupt=False):
    """Run every identity over `draws` random draws; returns (summary, failures)."""
    rng = np.random.default_rng(seed)
    summary, failures = {}, []
    for i in range(draws):
        d = random_draw(rng)
        for name, ok, val in draw_checks(d, corrupt=corrupt):
            summary.setdefault(name, True)
            if not ok:
                summary[name] = False
                failures.append((i, name, val, d))
    return summary, failures


# ---------------------------------------------------------------- commands

def cmd_identities(args):
    summary, failures = identity_suite(args.seed, args.draws, corrupt=args.inject_fault)
    for name, ok in summary.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for i, name, val, d in failures[:10]:
        print(f"failed draw {i} (seed {args.seed}): {name}, value {val}; q={fmt(d.U.q)} v={d.U.v.tolist()} "
              f"H={d.U.H.tolist()} S={fmt(d.U.S)} eps={fmt(d.eps)} nu={d.nu.tolist()}")
    print(f"{len(summary)} identities, {args.draws} draws, {len(failures)} failures")
    return 1 if failures else 0


def cmd_validate_state(args):
    cfg = _config_or_default(args)
    fam = cfg.family()
    x2 = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    X2, X3 = np.meshgrid(x2, x2, indexing="ij")
    ok = True
    try:
        x1 = np.zeros_like(X2)
        res = check_constraints(fam, 0.0, x1, X2, X3)
        for k, v in res.items():
            print(f"constraint {k}: {fmt(v)}")
        rep = check_stability(fam, float(cfg.extras.get("state.delta", 0.1)), 0.0, X2, X3)
        print(f"stability margin: {fmt(rep.margin)} (identity error {fmt(rep.identity_error)})")
    except MhdLabError as e:
        print(f"FAIL {type(e).__name__}: {e}")
        ok = False
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _dump(fh, tag, M):
    fh.write(f"# {tag}\n")
    for row in np.atleast_2d(M):
        fh.write(" ".join(fmt(x) for x in row) + "\n")


def cmd_dump_matrices(args):
    eos = EosParams()
    if args.config:
        cfg = SolverConfig.from_file(args.config)
        bc = boundary_coefficients(cfg.family(), 0.0, 0.0, 0.0)
        U, geom = bc.point.Uhat, bc.point.geometry
        A_wall, M1, G, _ = interface_matrices(bc, cfg.epsilon, eos)
        mats = {f"calA{k}": cal_a_matrix(k, U, geom, eos) for k in range(4)}
        mats.update({"wall plasma matrix": A_wall, "M1 at wall": M1, "metric G": G})
    else:
        d = random_draw(np.random.default_rng(args.seed))
        mats = {f"A{k}": a_matrix(k, d.U, eos) for k in range(4)}
        mats["Atilde1"] = atilde1_matrix(d.U, d.geom, eos)
        mats.update({f"calA{k}": cal_a_matrix(k, d.U, d.geom, eos) for k in range(4)})
        mats.update({f"E1{j}": constant_E(j).entries for j in (2, 3, 4)})
        mats.update({f"B{j}": b_matrix(j, d.eps) for j in (1, 2, 3)})
        mats.update({f"frakB{k}": frakb_matrix(k, d.eps, d.nu) for k in range(4)})
        mats.update({f"M{k}": m_matrix(k, d.eps, d.nu, d.geom) for k in range(4)})
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        for tag, M in mats.items():
            _dump(fh, tag, np.asarray(M))
    finally:
        if args.out:
            fh.close()
    return 0


ENERGY_COLUMNS = ("t", "plasma_h1tan", "vacuum_h1", "trace_h12", "front_h1", "boundary_form",
                  "div_h", "div_frakh", "div_frake")


def write_energy_csv(path, rec, gamma):
    cols = energy_rows(rec, gamma)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENERGY_COLUMNS)
        for i in range(len(cols["t"])):
            w.writerow([fmt(cols[c][i]) for c in ENERGY_COLUMNS])


def _out_path(args, default):
    if not args.out:
        return Path(default)
    p = Path(args.out)
    return p / default if p.is_dir() or not p.suffix else p


def cmd_run(args):
    cfg = _config_or_default(args)
    rep, rec = run_energy_experiment(cfg, samples=cfg.samples)
    path = _out_path(args, "energy.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_energy_csv(path, rec, cfg.gamma)
    print(f"gamma={fmt(rep.gamma)} lhs={fmt(rep.lhs)} rhs={fmt(rep.rhs)} ratio={fmt(rep.ratio)} "
          f"boundary_form={fmt(rep.boundary_form)} csv={path}")
    return 0


def _energy_point(cfg):
    rep, _ = run_energy_experiment(cfg, samples=cfg.samples)
    return rep


def _lifting_point(M, N=64):
    x = np.arange(N) * 2 * np.pi / N
    X2, X3 = np.meshgrid(x, x, indexing="ij")
    phi = FrontField(0.05 * np.cos(X2) * np.sin(X3) + 0.02 * np.cos(2 * X2 + X3))
    return sup_normal_derivative(phi, make_cutoff(M), np.linspace(0, M, 257))


def _map(fn, items):
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def cmd_sweep(args):
    if args.param not in ("gamma", "epsilon", "M"):
        raise ConfigError(f"--param must be gamma, epsilon or M, got {args.param!r}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: cannot parse {args.values!r}") from None
    if not values:
        raise ConfigError("--values is empty")
    rows = []
    if args.param == "M":
        header = ("M", "sup_d1psi", "sup_over_h2")
        res = _map(_lifting_point, values)
        rows = [(v, *r) for v, r in zip(values, res)]
    else:
        cfg = _config_or_default(args)
        header = (args.param, "lhs", "rhs", "ratio")
        if args.param == "gamma":
            for g in values:
                if g < 1:
                    raise ConfigError("reg.gamma must be >= 1")
            # gamma weights are applied after the fact, so one run serves the sweep
            _, rec = run_energy_experiment(cfg, samples=cfg.samples)
            reps = [energy_report(rec, g) for g in values]
        else:
            cfgs = [cfg.replace(epsilon=e) for e in values]
            for c in cfgs:
                c.validate()
            reps = _map(_energy_point, cfgs)
        rows = [(v, r.lhs, r.rhs, r.ratio) for v, r in zip(values, reps)]
    path = _out_path(args, "sweep.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
    for r in rows:
        print(" ".join(fmt(x) for x in r))
    return 0


def _config_or_default(args):
    if getattr(args, "config", None):
        return SolverConfig.from_file(args.config)
    raise ConfigError("--config is required")


def build_parser():
    p = argparse.ArgumentParser(prog="mhdlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("identities", help="run the matrix identity suite")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--draws", type=int, default=100)
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_identities)
    s = sub.add_parser("validate-state", help="check the basic state named in a config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_validate_state)
    s = sub.add_parser("dump-matrices", help="print assembled matrices")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dump_matrices)
    s = sub.add_parser("run", help="run the energy experiment and write energy.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="sweep gamma, epsilon or the cutoff bound M")
    s.add_argument("--config")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except MhdLabError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
