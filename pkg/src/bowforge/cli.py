"""Command-line driver: config parsing, pipelines and report files."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import bow as bowmod
from .dirac import (NonGenericPointError, RefineMeshError, assemble_delta, backend_angles, grid_kernel,
                    kernel, spectral_gap, twist_point)
from .nahm import DegenerateConfigurationError, abelian_bow_solution, small_solution, verify_moment_map
from .quat import SingularInputError
from .taubnut import (ETA_SIGN, ORIENTATION, TAU_PERIOD, AbelianInstanton, BasePoint, TaubNutConfig,
                      abelian_connection, ch2_abelian)
from .uptransform import (asymptotic_fit, chern_report, connection_at_center, curvature, curvature_decay,
                          local_stencil, taub_nut_of)

COMMANDS = ("solve-small", "nahm-check", "kernel", "connection", "asd-check", "asymptotics", "chern", "all")
EXIT_OK, EXIT_CHECKS, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 3, 4, 64

DEFAULT_TOLERANCES = {
    "moment_map": 1e-12,
    "kernel_gap": 1e3,
    "oracle": 1e-3,
    "anti_hermitian": 1e-10,
    "asd": 1e-3,
    "asd_order": 1.5,
    "lambda_fit": 1e-3,
    "residual_slope": [-2.3, -1.7],
    "curvature_slope": [-2.2, -1.8],
    "sigma_slope": [0.9, 1.1],
    "green_slope": [-2.2, -1.8],
    "ch1": 1e-2,
    "backend_angle": 1e-3,
}

DEFAULT_GRID = {
    "points": 20,
    "radius": 1.5,
    "h": "1/400",
    "asd_point": [0.6, -0.4, 0.9, 0.5],
    "asd_step": 0.04,
    "refine": 3,
    "rays": [[1.0, 0.0, 0.0], [0.3, 0.5, 0.8], [-0.5, 0.2, -0.6]],
    "fit_radii": [20.0, 200.0, 8],
    "gap_radii": [10.0, 100.0, 6],
    "cigar_directions": None,
}


class ConfigError(ValueError):
    pass


def _frac_str(x) -> str:
    return str(bowmod.as_fraction(x))


@dataclass
class RunConfig:
    name: str
    ell: Fraction
    nuts: list
    p_points: list
    lambda_points: list  # [{"position": Fraction, "class": str}]
    ranks: list
    T: dict  # arc index -> 3-vector
    phases: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    pipelines: list = field(default_factory=lambda: [c for c in COMMANDS if c != "all"])
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            tn = d["taubnut"]
            bw = d["bow"]
            sol = d.get("solution", {})
            lam = [{"position": bowmod.as_fraction(x["position"]), "class": x.get("class")} for x in bw.get("lambda", [])]
            grid = dict(DEFAULT_GRID)
            grid.update(d.get("grid", {}))
            tol = dict(DEFAULT_TOLERANCES)
            tol.update(d.get("tolerances", {}))
            return cls(
                name=str(d.get("name", "run")),
                ell=bowmod.as_fraction(tn["ell"]),
                nuts=[[float(v) for v in n] for n in tn["nuts"]],
                p_points=[bowmod.as_fraction(p) for p in bw["p"]],
                lambda_points=lam,
                ranks=[int(r) for r in bw["ranks"]],
                T={int(k): [float(v) for v in val] for k, val in sol.get("T", {}).items()},
                phases={str(k): float(v) for k, v in sol.get("phases", {}).items()},
                grid=grid,
                tolerances=tol,
                pipelines=list(d.get("pipelines", [c for c in COMMANDS if c != "all"])),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"malformed config: {exc!r}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "taubnut": {"ell": _frac_str(self.ell), "nuts": self.nuts},
            "bow": {
                "p": [_frac_str(p) for p in self.p_points],
                "lambda": [{"position": _frac_str(x["position"]), "class": x["class"]} for x in self.lambda_points],
                "ranks": self.ranks,
            },
            "solution": {"T": {str(k): v for k, v in self.T.items()}, "phases": self.phases},
            "grid": self.grid,
            "tolerances": self.tolerances,
            "pipelines": self.pipelines,
        }

    def representation(self) -> bowmod.BowRepresentation:
        tags = [x["class"] for x in self.lambda_points]
        return bowmod.make_representation(
            self.ell, self.p_points, [x["position"] for x in self.lambda_points], self.ranks,
            tags=tags if all(t is not None for t in tags) else None)

    def validate(self) -> list:
        problems = bowmod.validate(self.representation()).violations
        for k, v in self.tolerances.items():
            vals = v if isinstance(v, list) else [v]
            if k.endswith("slope"):
                continue
            if any(x <= 0 for x in vals):
                problems.append(f"tolerance {k} must be positive")
        if len(self.nuts) != len(self.p_points):
            problems.append(f"{len(self.nuts)} NUT positions for {len(self.p_points)} p-points")
        unknown = [p for p in self.pipelines if p not in COMMANDS]
        if unknown:
            problems.append(f"unknown pipelines {unknown}")
        return problems

    def solution(self):
        rep = self.representation()
        ph = {}
        for k, v in self.phases.items():
            kind, idx = k.split(":")
            ph[(kind, int(idx))] = v
        return abelian_bow_solution(rep, np.array(self.nuts), self.T, phases=ph)


def bundled_config(name: str) -> Path:
    """Path of an example configuration shipped with the package."""
    return Path(str(resources.files("bowforge") / "data" / name))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists() and bundled_config(path.name).exists():
        path = bundled_config(path.name)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(data)


# --- reporting -------------------------------------------------------------------


@dataclass
class ReportRow:
    run: str
    check: str
    measured: float
    reference: float
    tolerance: object
    passed: bool


class Report:
    def __init__(self, run: str):
        self.run = run
        self.rows: list[ReportRow] = []

    def close(self, check, measured, reference, tol):
        ok = bool(abs(measured - reference) <= tol)
        self.rows.append(ReportRow(self.run, check, float(measured), float(reference), tol, ok))
        return ok

    def within(self, check, measured, lo, hi):
        ok = bool(lo <= measured <= hi)
        self.rows.append(ReportRow(self.run, check, float(measured), (lo + hi) / 2, [lo, hi], ok))
        return ok

    def at_most(self, check, measured, bound):
        ok = bool(measured <= bound)
        self.rows.append(ReportRow(self.run, check, float(measured), 0.0, bound, ok))
        return ok

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.rows)


def fmt(x) -> str:
    return "%.17g" % x


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


# --- pipelines -------------------------------------------------------------------


def random_points(cfg: RunConfig, n: int, rng) -> np.ndarray:
    r = float(cfg.grid["radius"])
    out = []
    while len(out) < n:
        t = rng.uniform(-r, r, size=3)
        if np.linalg.norm(t) <= r:
            out.append(np.concatenate([t, [rng.uniform(0, 2 * np.pi)]]))
    return np.array(out)


def run_solve_small(cfg, sol, out, report, pool, rng, args):
    rep = bowmod.make_representation(cfg.ell, cfg.p_points, [], [1] * (len(cfg.p_points) + 1))
    rows = []
    for x in random_points(cfg, 5, rng):
        s = small_solution(rep, np.array(cfg.nuts), x[:3])
        res = verify_moment_map(s).max_residual
        rows.append([*x[:3], res])
        report.at_most("small moment map", res, cfg.tolerances["moment_map"])
    write_csv(out / "small.csv", ["t1", "t2", "t3", "residual"], rows)


def run_nahm_check(cfg, sol, out, report, pool, rng, args):
    rr = verify_moment_map(sol, cfg.tolerances["moment_map"])
    report.at_most("moment map residual", rr.max_residual, cfg.tolerances["moment_map"])
    with open(out / "solution.json", "w", encoding="utf-8") as fh:
        json.dump(sol.to_document(), fh, indent=1, sort_keys=True)


def run_kernel(cfg, sol, out, report, pool, rng, args):
    n = args.points if args.points is not None else int(cfg.grid["points"])
    pts = random_points(cfg, n, rng)
    expected = len(cfg.lambda_points)

    def one(x):
        sys_ = assemble_delta(sol, twist_point(np.array(cfg.nuts), x[:3], x[3]))
        K = kernel(sys_, min_gap=0.0)
        return x, K.singular_values, K.dim, K.gap

    results = list(pool.map(one, pts))
    width = max(len(r[1]) for r in results)
    rows = []
    for x, sv, dim, gap in results:
        rows.append([*x, *sv, *[""] * (width - len(sv)), dim])
        report.close("kernel dimension", dim, expected, 0)
        report.at_most("inverse kernel gap", 1.0 / gap, 1.0 / cfg.tolerances["kernel_gap"])
    write_csv(out / "kernel.csv", ["t1", "t2", "t3", "tau", *[f"sigma_{i + 1}" for i in range(width)], "dim"], rows)
    h = float(bowmod.as_fraction(cfg.grid["h"]))
    for x in pts[:3]:
        pt = twist_point(np.array(cfg.nuts), x[:3], x[3])
        K = kernel(assemble_delta(sol, pt), expected_dim=expected)
        G = grid_kernel(sol, pt, h, expected_dim=expected)
        report.at_most("backend principal angle", float(backend_angles(K, G).max()), cfg.tolerances["backend_angle"])


def _is_abelian_oracle(cfg) -> bool:
    return len(cfg.lambda_points) == 1 and all(r == 1 for r in cfg.ranks)


def run_connection(cfg, sol, out, report, pool, rng, args):
    n = args.points if args.points is not None else int(cfg.grid["points"])
    pts = random_points(cfg, n, rng)
    tn = taub_nut_of(sol)

    def one(x):
        st = local_stencil(sol, x, 1e-4)
        return x, st.at((0, 0, 0, 0)).patches, connection_at_center(st)

    rows = []
    for x, patches, A in pool.map(one, pts):
        dim = A.shape[-1]
        herm = max(float(np.abs(A[mu] + A[mu].conj().T).max()) for mu in range(4))
        report.at_most("connection anti-hermitian", herm, cfg.tolerances["anti_hermitian"])
        rows.append([*x, *[v for mu in range(4) for v in (A[mu].real.ravel().tolist() + A[mu].imag.ravel().tolist())]])
        if _is_abelian_oracle(cfg):
            lam = float(cfg.lambda_points[0]["position"])
            v = tuple(1 if float(p) < lam else 0 for p in cfg.p_points)
            a = abelian_connection(tn, AbelianInstanton(lam, v), BasePoint(x[:3], x[3], patches))
            report.at_most("abelian oracle", float(np.abs(A[:, 0, 0] - 1j * a).max()), cfg.tolerances["oracle"])
    header = ["t1", "t2", "t3", "tau"]
    for mu in ("t1", "t2", "t3", "tau"):
        header += [f"A_{mu}_re_{i}" for i in range(dim * dim)] + [f"A_{mu}_im_{i}" for i in range(dim * dim)]
    write_csv(out / "connection.csv", header, rows)


def run_asd(cfg, sol, out, report, pool, rng, args):
    refine = args.refine if args.refine is not None else int(cfg.grid["refine"])
    x = np.array(cfg.grid["asd_point"], float)
    h0 = float(cfg.grid["asd_step"])
    steps = [h0 / 2**i for i in range(refine)]
    tn = taub_nut_of(sol)
    res = [curvature(sol, x, h).asd_residual(tn) for h in steps]
    write_csv(out / "asd.csv", ["step", "residual"], [[h, r] for h, r in zip(steps, res)])
    report.at_most("asd residual", res[-1], cfg.tolerances["asd"])
    if len(res) >= 2:
        order = float(np.log2(res[-2] / res[-1]))
        report.within("asd convergence order", order, cfg.tolerances["asd_order"], 10.0)


def run_asymptotics(cfg, sol, out, report, pool, rng, args):
    lo, hi, n = cfg.grid["fit_radii"]
    radii = np.geomspace(lo, hi, int(n))
    fit = asymptotic_fit(sol, cfg.grid["rays"], radii)
    rows = []
    for ir in range(len(fit.rays)):
        for k, r in enumerate(radii):
            rows.append([ir, r, *fit.eigenvalues[ir, k]])
    write_csv(out / "asymptotics.csv", ["ray", "radius", *[f"eig_{i}" for i in range(fit.eigenvalues.shape[2])]], rows)
    ell = float(cfg.ell)
    report.at_most("lambda fit error / ell", fit.lam_error() / ell, cfg.tolerances["lambda_fit"])
    report.close("m_hat exact", float(fit.m_exact()), 1.0, 0)
    lo_s, hi_s = cfg.tolerances["residual_slope"]
    for s in fit.residual_slope.ravel():
        report.within("fit residual slope", s, lo_s, hi_s)
    norms, slope = curvature_decay(sol, cfg.grid["rays"][1], np.geomspace(lo, hi, 5))
    report.within("curvature norm slope", slope, *cfg.tolerances["curvature_slope"])
    glo, ghi, gn = cfg.grid["gap_radii"]
    tab = spectral_gap(sol, np.array(cfg.nuts), cfg.grid["rays"][1], np.geomspace(glo, ghi, int(gn)))
    write_csv(out / "spectral_gap.csv", ["radius", "sigma_min", "green_norm"],
              [[r, s, g] for r, s, g in zip(tab.radii, tab.sigma_min, tab.green_norm)])
    report.within("sigma_min slope", tab.sigma_slope, *cfg.tolerances["sigma_slope"])
    report.within("green norm slope", tab.green_slope, *cfg.tolerances["green_slope"])


def run_chern(cfg, sol, out, report, pool, rng, args):
    rep = chern_report(sol, cfg.grid.get("cigar_directions"))
    doc = rep.to_dict()
    doc["conventions"] = {"eta_sign": ETA_SIGN, "orientation": ORIENTATION, "tau_period": TAU_PERIOD}
    if _is_abelian_oracle(cfg):
        lam = float(cfg.lambda_points[0]["position"])
        v = tuple(1 if float(p) < lam else 0 for p in cfg.p_points)
        doc["ch2_abelian"] = ch2_abelian(TaubNutConfig(float(cfg.ell), cfg.nuts), AbelianInstanton(lam, v))
    with open(out / "chern.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    for num, ref in zip(rep.ch1_numeric, rep.ch1_formula):
        report.close("cigar ch1", num, ref, cfg.tolerances["ch1"])
    report.close("index equals R0", rep.index, cfg.ranks[0], 0)


PIPELINES = {
    "solve-small": run_solve_small,
    "nahm-check": run_nahm_check,
    "kernel": run_kernel,
    "connection": run_connection,
    "asd-check": run_asd,
    "asymptotics": run_asymptotics,
    "chern": run_chern,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bowforge", description="Instantons on multi-Taub-NUT from bow data.")
    p.add_argument("command", nargs="?", default="all", help=" | ".join(COMMANDS))
    p.add_argument("-c", "--config", required=True, help="JSON run configuration")
    p.add_argument("--only", help="run a single pipeline of 'all'")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", default="bowforge-out")
    p.add_argument("--points", type=int, default=None, help="number of random base points")
    p.add_argument("--refine", type=int, default=None, help="number of step halvings for asd-check")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.command not in COMMANDS or (args.only is not None and args.only not in COMMANDS):
        parser.print_usage(sys.stderr)
        print(f"bowforge: unknown command {args.only if args.command in COMMANDS else args.command!r}",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"bowforge: {exc}", file=sys.stderr)
        return EXIT_PARSE
    problems = cfg.validate()
    if problems:
        for msg in problems:
            print(f"bowforge: invalid config: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg.seed = args.seed
    if args.only:
        selected = [args.only]
    elif args.command == "all":
        selected = cfg.pipelines
    else:
        selected = [args.command]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = Report(cfg.name)
    try:
        sol = cfg.solution()
        with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
            for name in selected:
                rng = np.random.default_rng([cfg.seed, COMMANDS.index(name)])
                PIPELINES[name](cfg, sol, out, report, pool, rng, args)
    except bowmod.ValidationError as exc:
        print(f"bowforge: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NonGenericPointError, RefineMeshError, DegenerateConfigurationError, SingularInputError,
            np.linalg.LinAlgError, ValueError) as exc:
        print(f"bowforge: numerical abort: {exc}", file=sys.stderr)
        _write_report(out, report)
        return EXIT_NUMERIC
    _write_report(out, report)
    for r in report.rows:
        if not r.passed:
            print(f"FAIL {r.check}: measured {r.measured:.6g}, reference {r.reference:.6g}, tol {r.tolerance}",
                  file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_CHECKS


def _write_report(out: Path, report: Report):
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump([asdict(r) for r in report.rows], fh, indent=1)


if __name__ == "__main__":
    sys.exit(main())
