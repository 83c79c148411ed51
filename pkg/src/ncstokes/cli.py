"""Command line driver for the numerical experiments and constant calculators."""
import argparse
import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    convergence_rate,
    costabel_dauge_beta,
    costabel_dauge_simplified,
    discrete_infsup,
    l2_velocity_error,
    named_domain_beta,
    stability_constants,
)
from .assembly import SourceTerm, assemble_system
from .errors import ConfigurationError, SolverError
from .mesh import Mesh, build_structured_unit_square
from .problems import gradient_problem, trig_problem
from .solver import factorize

COMMANDS = ("gradient-test", "trig-test", "infsup", "constants")
DEFAULT_LEVELS = {"gradient-test": {"cr": (20,), "fs": (20,)},
                  "trig-test": {"cr": (20, 40, 80, 160), "fs": (20, 40, 80)},
                  "infsup": {"cr": (2, 4, 8), "fs": (2, 4, 8)}}
DEFAULT_NU = {"gradient-test": (1.0, 1e-3, 1e-4), "trig-test": (1e-3,)}
CSV_HEADER = "element,projection,nu,n,h,eps0"


@dataclass
class ExperimentConfig:
    command: str
    elements: tuple = ("cr", "fs")
    projections: tuple = ("none", "rt")
    nu: tuple = ()
    levels: tuple = ()
    output_path: str = None
    seed: int = 0
    perturb: float = 0.0
    domain: str = None
    k: float = 1.0
    c_div: float = None
    c_nc: float = None
    fmt: str = "table"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        for e in self.elements:
            if e not in ("cr", "fs"):
                raise ConfigurationError(f"unknown element {e!r}")
        for p in self.projections:
            if p not in ("none", "rt"):
                raise ConfigurationError(f"unknown projection {p!r}")
        if any(not (v > 0 and math.isfinite(v)) for v in self.nu):
            raise ConfigurationError("nu must be positive")
        if any(n < 1 for n in self.levels):
            raise ConfigurationError("grid resolutions must be positive")
        if not 0.0 <= self.perturb < 0.5:
            raise ConfigurationError("perturb must lie in [0, 0.5)")
        if self.fmt not in ("table", "csv"):
            raise ConfigurationError("format must be 'table' or 'csv'")
        return self

    def levels_for(self, element):
        return self.levels or DEFAULT_LEVELS[self.command][element]

    def nus(self):
        return self.nu or DEFAULT_NU.get(self.command, (1.0,))


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)  # (element, projection, nu, n, h, eps0)
    rates: dict = field(default_factory=dict)  # series key -> rate

    def series(self):
        keys = []
        for r in self.rows:
            if r[:3] not in keys:
                keys.append(r[:3])
        return keys

    def finalize(self):
        for key in self.series():
            pts = [(r[4], r[5]) for r in self.rows if r[:3] == key]
            if len(pts) >= 2 and all(e > 0 for _, e in pts):
                h, e = zip(*pts)
                self.rates[key] = convergence_rate(h, e)
        return self

    def to_csv(self):
        lines = [CSV_HEADER]
        for key in self.series():
            for r in self.rows:
                if r[:3] == key:
                    el, pr, nu, n, h, e = r
                    lines.append(f"{el},{pr},{nu:.17g},{n},{h:.17g},{e:.17g}")
            if key in self.rates:
                lines.append(f"# rate={self.rates[key]:.17g}")
        return "\n".join(lines) + "\n"

    def to_table(self):
        head = ("element", "projection", "nu", "n", "h", "eps0")
        body = [(el.upper(), pr, f"{nu:.2e}", str(n), f"{h:.2e}", f"{e:.2e}")
                for el, pr, nu, n, h, e in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        fmt = "  ".join(f"{{:>{w}}}" for w in widths)
        out = [fmt.format(*head)] + [fmt.format(*b) for b in body]
        for (el, pr, nu), rate in self.rates.items():
            out.append(f"rate {el.upper()} {pr} nu={nu:.2e}: h^{rate:.2f}")
        return "\n".join(out) + "\n"


def make_mesh(config, n):
    mesh = build_structured_unit_square(n)
    if config.perturb == 0.0:
        return mesh
    rng = np.random.default_rng(config.seed)
    v = mesh.vertices.copy()
    inner = ~mesh.boundary_vertices
    v[inner] += config.perturb / n * rng.uniform(-1.0, 1.0, (inner.sum(), 2))
    return Mesh(v, mesh.cells, h_grid=mesh.h_grid)


def _run_sweep(config, problem_for):
    report = ExperimentReport()
    for element in config.elements:
        for nu in config.nus():
            problem = problem_for(nu)
            for n in config.levels_for(element):
                mesh = make_mesh(config, n)
                system = assemble_system(mesh, element, nu, SourceTerm.analytic(problem.f),
                                         config.projections)
                try:
                    fact = factorize(system)
                    for proj in config.projections:
                        sol = fact.solve(system.rhs[proj])
                        err = l2_velocity_error(sol, problem.u)
                        report.rows.append((element, proj, nu, n, mesh.h_grid, err.eps0))
                except SolverError as exc:
                    raise SolverError(
                        f"{config.command} element={element} nu={nu:g} n={n}: {exc}", exc.pivot
                    ) from exc
    report.rows.sort(key=lambda r: (config.elements.index(r[0]), config.projections.index(r[1]),
                                    config.nus().index(r[2])))
    return report.finalize()


def run_gradient_test(config):
    return _run_sweep(config, gradient_problem)


def run_trig_test(config):
    return _run_sweep(config, trig_problem)


def run_infsup(config):
    lines = ["element,n,h,beta"]
    table = []
    for element in config.elements:
        for n in config.levels_for(element):
            mesh = make_mesh(config, n)
            beta = discrete_infsup(mesh, element)
            lines.append(f"{element},{n},{mesh.h_grid:.17g},{beta:.17g}")
            table.append(f"{element.upper():>3}  n={n:<4d} beta_T = {beta:.6g}")
    return "\n".join(lines) + "\n", "\n".join(table) + "\n"


def run_constants(config):
    entries = []
    c_div = config.c_div
    if config.domain is not None:
        beta = named_domain_beta(config.domain, config.k)
        entries.append(("beta_lower_bound", beta))
        if c_div is None:
            c_div = 1.0 / beta
    if c_div is None:
        raise ConfigurationError("constants needs --domain or --cdiv")
    nu = config.nus()[0]
    rep = stability_constants(c_div, nu, config.c_nc)
    entries += [("c_div", rep.c_div), ("nu", rep.nu)]
    if rep.c_nc is not None:
        entries += [("c_nc", rep.c_nc), ("c_div_nc", rep.c_div_nc)]
    entries += [("c_min", rep.c_min), ("c_max", rep.c_max), ("c_stab", rep.c_stab)]
    csv = "quantity,value\n" + "".join(f"{k},{v:.17g}\n" for k, v in entries)
    width = max(len(k) for k, _ in entries)
    table = "".join(f"{k:<{width}} = {v:.6g}\n" for k, v in entries)
    return csv, table


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _split(value):
    return [v for v in value.replace(",", " ").split() if v]


def _config_from_mapping(command, mapping):
    conv = {
        "element": ("elements", lambda v: tuple(_expand(_split(v.lower()), ("cr", "fs")))),
        "elements": ("elements", lambda v: tuple(_expand(_split(v.lower()), ("cr", "fs")))),
        "projection": ("projections", lambda v: tuple(_expand(_split(v.lower()), ("none", "rt")))),
        "nu": ("nu", lambda v: tuple(float(x) for x in _split(v))),
        "levels": ("levels", lambda v: tuple(int(x) for x in _split(v))),
        "n": ("levels", lambda v: tuple(int(x) for x in _split(v))),
        "output": ("output_path", str),
        "output_path": ("output_path", str),
        "seed": ("seed", int),
        "perturb": ("perturb", float),
        "domain": ("domain", str),
        "k": ("k", float),
        "cdiv": ("c_div", float),
        "c_div": ("c_div", float),
        "cnc": ("c_nc", float),
        "c_nc": ("c_nc", float),
        "format": ("fmt", str),
    }
    kwargs = {}
    for key, value in mapping.items():
        if key == "command":
            if value != command:
                raise ConfigurationError(f"config file is for {value!r}, not {command!r}")
            continue
        if key not in conv:
            raise ConfigurationError(f"unknown config key {key!r}")
        name, fn = conv[key]
        try:
            kwargs[name] = fn(value)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key!r}: {value!r}") from exc
    return kwargs


def _expand(items, choices):
    out = []
    for item in items:
        out.extend(choices if item == "all" else (item,))
    return out


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ncstokes",
        description="Nonconforming Stokes experiments (CR/P0 and FS/P1-disc, optional RT reconstruction).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="file of 'key = value' lines; flags override it")
        p.add_argument("--format", dest="format", choices=("table", "csv"), help="stdout format")
        p.add_argument("--output", help="write CSV to this path")
        p.add_argument("--nu", nargs="+", type=float)
        if name in ("gradient-test", "trig-test", "infsup"):
            p.add_argument("--element", nargs="+", choices=("cr", "fs", "all"))
            p.add_argument("--levels", "--n", dest="levels", nargs="+", type=int,
                           help="grid resolutions (cells per side)")
            p.add_argument("--seed", type=int, help="seed for --perturb")
            p.add_argument("--perturb", type=float,
                           help="random interior vertex displacement, as a fraction of 1/n")
        if name in ("gradient-test", "trig-test"):
            p.add_argument("--projection", nargs="+", choices=("none", "rt", "all"))
        if name == "constants":
            p.add_argument("--domain", help="ball, square, stretched, l-shape or cross")
            p.add_argument("--k", type=float, help="aspect ratio for stretched, L and cross domains")
            p.add_argument("--cdiv", type=float, help="divergence constant C_div = 1/beta")
            p.add_argument("--cnc", type=float, help="interpolation constant for the discrete case")
            p.add_argument("--rho", type=float, help="inner radius for the Costabel-Dauge bound")
            p.add_argument("--radius", type=float, help="outer radius for the Costabel-Dauge bound")
    return parser


def config_from_args(args):
    mapping = read_config_file(args.config) if getattr(args, "config", None) else {}
    kwargs = _config_from_mapping(args.command, mapping)
    flags = {
        "elements": getattr(args, "element", None) and tuple(_expand(args.element, ("cr", "fs"))),
        "projections": getattr(args, "projection", None)
        and tuple(_expand(args.projection, ("none", "rt"))),
        "nu": args.nu and tuple(args.nu),
        "levels": getattr(args, "levels", None) and tuple(args.levels),
        "output_path": args.output,
        "seed": getattr(args, "seed", None),
        "perturb": getattr(args, "perturb", None),
        "domain": getattr(args, "domain", None),
        "k": getattr(args, "k", None),
        "c_div": getattr(args, "cdiv", None),
        "c_nc": getattr(args, "cnc", None),
        "fmt": args.format,
    }
    kwargs.update({k: v for k, v in flags.items() if v is not None})
    return replace(ExperimentConfig(args.command), **kwargs).validate()


def run(config, rho=None, radius=None):
    """Execute a validated config; returns ``(csv_text, table_text)``."""
    if config.command in ("gradient-test", "trig-test"):
        fn = run_gradient_test if config.command == "gradient-test" else run_trig_test
        report = fn(config)
        return report.to_csv(), report.to_table()
    if config.command == "infsup":
        return run_infsup(config)
    csv, table = run_constants(config)
    if rho is not None or radius is not None:
        if rho is None or radius is None:
            raise ConfigurationError("--rho and --radius go together")
        full, simple = costabel_dauge_beta(rho, radius), costabel_dauge_simplified(rho, radius)
        csv += f"costabel_dauge,{full:.17g}\ncostabel_dauge_simplified,{simple:.17g}\n"
        table += f"costabel_dauge = {full:.6g}\ncostabel_dauge_simplified = {simple:.6g}\n"
    return csv, table


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        config = config_from_args(args)
        csv, table = run(config, getattr(args, "rho", None), getattr(args, "radius", None))
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    if config.output_path:
        with open(config.output_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv)
    sys.stdout.write(csv if config.fmt == "csv" else table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
