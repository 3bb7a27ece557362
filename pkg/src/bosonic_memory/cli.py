"""Command-line entry point.

Exit codes: 0 success, 2 domain or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import enum
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import capacity, forgetful, spectra
from .errors import DomainError, NumericalError
from .model import ChannelParams, Threshold, classify_regime

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERICAL = 0, 2, 3
SYMBOL_SAMPLES = 512
MAP_POINTS = 101
MAP_PHOTONS = 8.0
PRESETS = ("quantum-map", "classical-map")


def fmt(x) -> str:
    return format(float(x), ".9g")


class Quantity(enum.Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"
    CLASSICAL_LOWER = "classical-lower"
    CLASSICAL_ANY = "classical-any"
    SPECTRUM_SUMMARY = "spectrum-summary"


@dataclass(frozen=True)
class SweepSpec:
    """Grid sweep of one quantity; rows are emitted mu-major, kappa-minor.

    ``classical-any`` evaluates the exact capacity where kappa <= 1 and the
    Gaussian lower bound where kappa > 1.
    """

    mu_grid: tuple
    kappa_grid: tuple
    quantity: Quantity
    N: float | None = None
    quad_points: int = 4096

    def __post_init__(self):
        for name, grid in (("mu", self.mu_grid), ("kappa", self.kappa_grid)):
            if not grid:
                raise DomainError(f"{name} grid is empty")
            if any(b < a for a, b in zip(grid, grid[1:])):
                raise DomainError(f"{name} grid must be sorted")
        if self.mu_grid[0] < 0 or self.mu_grid[-1] > 1:
            raise DomainError("mu grid must lie in [0, 1]")
        if self.kappa_grid[0] < 0:
            raise DomainError("kappa grid must be non-negative")
        if self.quantity is Quantity.CLASSICAL and self.kappa_grid[-1] > 1:
            raise DomainError("classical capacity requires kappa <= 1 on the whole grid")
        if self.quantity is Quantity.CLASSICAL_LOWER and self.kappa_grid[0] <= 1:
            raise DomainError("classical lower bound requires kappa > 1 on the whole grid")
        needs_n = self.quantity in (Quantity.CLASSICAL, Quantity.CLASSICAL_LOWER, Quantity.CLASSICAL_ANY)
        if needs_n and not (self.N and self.N > 0):
            raise DomainError("classical quantities need a positive --mean-photon")

    def points(self):
        return [(mu, kappa) for mu in self.mu_grid for kappa in self.kappa_grid]


def evaluate_point(spec: SweepSpec, mu: float, kappa: float) -> float:
    quad = spectra.QuadratureSpec(points=spec.quad_points)
    q = spec.quantity
    if q is Quantity.QUANTUM:
        if mu == 1.0 or kappa == 1.0:
            return math.inf
        return capacity.quantum_capacity(mu, kappa, quad)
    if q is Quantity.SPECTRUM_SUMMARY:
        if classify_regime(ChannelParams(mu, kappa)).threshold is Threshold.AT and mu < 1.0:
            return math.inf
        return spectra.szego_average(lambda x: x, mu, kappa, quad).value
    if q is Quantity.CLASSICAL or (q is Quantity.CLASSICAL_ANY and kappa <= 1.0):
        return capacity.classical_capacity(mu, kappa, spec.N, quad)
    return capacity.classical_capacity_lower_amplifier(mu, kappa, spec.N, quad)


def _evaluate_chunk(args):
    spec, pts = args
    return [evaluate_point(spec, mu, kappa) for mu, kappa in pts]


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[tuple[float, float, float]]:
    """Evaluate every grid point; the result order never depends on scheduling."""
    pts = spec.points()
    if jobs <= 1:
        values = [evaluate_point(spec, mu, kappa) for mu, kappa in pts]
    else:
        size = max(1, len(pts) // (8 * jobs))
        chunks = [(spec, pts[i : i + size]) for i in range(0, len(pts), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            values = [v for chunk in pool.map(_evaluate_chunk, chunks) for v in chunk]
    return [(mu, kappa, v) for (mu, kappa), v in zip(pts, values)]


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mu", "kappa", "value"])
    for mu, kappa, v in rows:
        writer.writerow([fmt(mu), fmt(kappa), fmt(v)])
    return buf.getvalue()


def sweep_json(rows) -> str:
    return json.dumps([{"mu": mu, "kappa": kappa, "value": fmt(v)} for mu, kappa, v in rows])


def map_grids() -> tuple[tuple, tuple]:
    """101 x 101 grids for the capacity maps: mu in [0, 1), kappa in [0, 3], neither hitting 1."""
    mu = tuple(i / MAP_POINTS for i in range(MAP_POINTS))
    kappa = tuple(3.0 * k / (MAP_POINTS - 1) for k in range(MAP_POINTS))
    return mu, kappa


def preset_spec(name: str, quad_points: int = 4096) -> SweepSpec:
    """``quantum-map``: Q over the map grid; ``classical-map``: C or its amplifier bound at N = 8."""
    mu, kappa = map_grids()
    if name == "quantum-map":
        return SweepSpec(mu, kappa, Quantity.QUANTUM, None, quad_points)
    if name == "classical-map":
        return SweepSpec(mu, kappa, Quantity.CLASSICAL_ANY, MAP_PHOTONS, quad_points)
    raise DomainError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------


def _grid(text: str) -> tuple:
    """``a,b,c`` or ``start:stop:count`` (inclusive linspace)."""
    if ":" in text:
        start, stop, count = text.split(":")
        return tuple(float(x) for x in np.linspace(float(start), float(stop), int(count)))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _quad(args) -> spectra.QuadratureSpec:
    return spectra.QuadratureSpec(points=args.quad_points)


def cmd_qcap(args) -> int:
    value = capacity.quantum_capacity(args.mu, args.kappa, _quad(args))
    _emit(fmt(value) + "\n", args.out)
    return EXIT_OK


def cmd_ccap(args) -> int:
    if args.kappa > 1.0:
        value = capacity.classical_capacity_lower_amplifier(
            args.mu, args.kappa, args.mean_photon, _quad(args), offset=args.offset
        )
    else:
        value = capacity.classical_capacity(args.mu, args.kappa, args.mean_photon, _quad(args))
    _emit(fmt(value) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.preset:
        spec = preset_spec(args.preset, args.quad_points)
    else:
        if not (args.mu_grid and args.kappa_grid and args.quantity):
            raise DomainError("sweep needs --mu-grid, --kappa-grid and --quantity (or --preset)")
        spec = SweepSpec(
            _grid(args.mu_grid), _grid(args.kappa_grid), Quantity(args.quantity), args.mean_photon, args.quad_points
        )
    rows = run_sweep(spec, args.jobs)
    text = sweep_json(rows) + "\n" if args.format == "json" else sweep_csv(rows)
    _emit(text, args.out)
    return EXIT_OK


def spectrum_table(mu: float, kappa: float, n: int):
    eta = spectra.gram_spectrum(ChannelParams(mu, kappa, n))
    z = np.linspace(0.0, 2.0 * math.pi, SYMBOL_SAMPLES)
    sym = spectra.symbol_eval(mu, kappa, z)
    rows = []
    for i in range(max(n, SYMBOL_SAMPLES)):
        rows.append(
            [
                str(i + 1) if i < n else "",
                fmt(eta[i]) if i < n else "",
                fmt(z[i]) if i < SYMBOL_SAMPLES else "",
                fmt(sym[i]) if i < SYMBOL_SAMPLES else "",
            ]
        )
    return eta, rows


def cmd_spectrum(args) -> int:
    eta, rows = spectrum_table(args.mu, args.kappa, args.n)
    if args.format == "json":
        z = np.linspace(0.0, 2.0 * math.pi, SYMBOL_SAMPLES)
        sym = spectra.symbol_eval(args.mu, args.kappa, z)
        text = json.dumps({"eta": [fmt(x) for x in eta], "z": [fmt(x) for x in z], "symbol": [fmt(x) for x in sym]}) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["j", "eta", "z", "symbol"])
        writer.writerows(rows)
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def bounds_report(mu, kappa, blocks_list, n_schedule, N=None) -> dict:
    params = ChannelParams(mu, kappa)
    if N is not None and params.amplifying:
        raise DomainError("exact classical capacity unavailable for amplifier (kappa > 1)")
    report = {"mu": mu, "kappa": kappa, "n_schedule": list(n_schedule), "quantum": []}
    if N is not None:
        report["mean_photon"] = N
        report["classical"] = []
    unconverged = []
    for P in blocks_list:
        blocks = capacity.block_bounds(params, P, n_schedule)
        lo, hi = capacity.quantum_bounds_from_blocks(blocks, params.amplifying)
        report["quantum"].append({"P": P, "lower": lo, "upper": hi, "converged": blocks.converged})
        if N is not None:
            clo, chi = capacity.classical_bounds_from_blocks(blocks, N)
            report["classical"].append({"P": P, "lower": clo, "upper": chi, "converged": blocks.converged})
        if not blocks.converged:
            unconverged.append(P)
    if unconverged:
        report["warning"] = (
            f"block extremes still moving by more than {capacity.BOUNDS_CONVERGENCE:g} at the last n "
            f"for P in {unconverged}; bounds are valid but not yet at their n-limit"
        )
    return report


def cmd_bounds(args) -> int:
    report = bounds_report(args.mu, args.kappa, _ints(args.blocks), _ints(args.n_schedule), args.mean_photon)
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK


def canonical_scenarios(n: int):
    """Vacuum memory versus a displaced, thermally heated memory; identical inputs."""
    return (
        forgetful.GaussianMemoryScenario.vacuum(n),
        forgetful.GaussianMemoryScenario.vacuum(n, mean_m=1.0, V_m=1.5),
    )


def cmd_forget(args) -> int:
    params = ChannelParams(args.mu, args.kappa)
    a, b = canonical_scenarios(args.n)
    report = forgetful.forgetfulness_decay(params, a, b, range(1, args.n + 1))
    lines = report.json_lines()
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "delta_mean", "delta_var", "fitted_rate"])
        for row in lines:
            rate = "" if row["fitted_rate"] is None else fmt(row["fitted_rate"])
            writer.writerow([row["n"], fmt(row["delta_mean"]), fmt(row["delta_var"]), rate])
        text = buf.getvalue()
    else:
        text = "".join(json.dumps(row) + "\n" for row in lines)
    _emit(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bosonic-memory", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n=False):
        p.add_argument("--mu", type=float, required=True)
        p.add_argument("--kappa", type=float, required=True)
        if n:
            p.add_argument("--n", type=int, required=True)
        p.add_argument("--quad-points", type=int, default=4096)
        p.add_argument("--out")
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("qcap", help="quantum capacity (qubits per use)")
    common(p)
    p.set_defaults(func=cmd_qcap)

    p = sub.add_parser("ccap", help="classical capacity (kappa <= 1) or Gaussian lower bound (kappa > 1)")
    common(p)
    p.add_argument("--mean-photon", type=float, required=True)
    p.add_argument("--offset", type=int, choices=[1, -1], default=1)
    p.set_defaults(func=cmd_ccap)

    p = sub.add_parser("sweep", help="capacity map over a (mu, kappa) grid")
    p.add_argument("--quantity", choices=[q.value for q in Quantity])
    p.add_argument("--mu-grid")
    p.add_argument("--kappa-grid")
    p.add_argument("--preset", choices=PRESETS, help="full 101 x 101 capacity map")
    p.add_argument("--mean-photon", type=float)
    p.add_argument("--quad-points", type=int, default=4096)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", help="normal-mode spectrum next to samples of the symbol")
    common(p, n=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("bounds", help="block bounds on Q (and C with --mean-photon) as JSON")
    common(p)
    p.add_argument("--blocks", default="2,4,8,16")
    p.add_argument("--n-schedule", default="64,128,256,512")
    p.add_argument("--mean-photon", type=float)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("forget", help="memory-moment decay report (JSON lines)")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--n", type=int, required=True, help="largest number of uses")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.set_defaults(func=cmd_forget)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
