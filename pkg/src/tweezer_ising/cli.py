"""Command-line front end.

Subcommands: modes, couplings, feasibility, optimize, misalign,
experiment, and reproduce <fig3|fig4|fig5|fig6|fig7|table1|table2>.
Exit codes: 0 success, 1 validation error, 2 convergence failure; errors
are printed to stderr as `error: <code>: <message>`.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import MHZ, RunConfig, parse_config
from .constants import YB171
from .coupling import DriveConfig, coupling_error, coupling_matrix
from .crystal import length_scale, make_lattice, solve_equilibrium
from .errors import ConvergenceError, InvalidArgumentError, TweezerIsingError
from .experiment import (
    YB_PLUS_LINES,
    AtomicLines,
    TweezerBeam,
    differential_stark_shift,
    load_atomic_lines,
    misalignment_scan,
    scattering_rate,
    stark_homogenize,
    tweezer_trap_frequency,
)
from .feasibility import build_sign_constraints, feasibility_test
from .iofmt import load_result, read_summary, save_result, write_matrix_csv, write_summary, write_table_csv
from .modes import TweezerPattern, build_hessian, lamb_dicke, mode_spectrum
from .optimizer import run_pipeline, untweezed_baseline
from .scenarios import (
    SCENARIO_TOKENS,
    frustrated_ladder_12,
    misalignment_settings,
    nn_chain_12,
    power_law_chain_12,
    power_law_exponents,
    run_scenario,
    triangular_af_19,
)
from .sensitivity import coupling_jacobian_diag
from .targets import build_target


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; we keep 1 for usage
        raise InvalidArgumentError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tweezer-ising", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("modes", True),
        ("couplings", True),
        ("feasibility", True),
        ("optimize", True),
        ("misalign", True),
        ("experiment", True),
        ("reproduce", False),
    ):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--allow-anticonfinement", action="store_true")
        p.add_argument("--pin-axes", default=None, metavar="x|y|z|yz|...")
        if name == "misalign":
            p.add_argument("--in", dest="in_dir", default=None, help="reuse a saved optimize run")
        if name == "reproduce":
            p.add_argument("token", choices=SCENARIO_TOKENS)
            p.add_argument("--fast", action="store_true", help="reduced grids and samples")
    return parser


def _load_config(args) -> RunConfig:
    overrides: dict = {}
    if args.threads is not None:
        overrides.setdefault("run", {})["threads"] = str(args.threads)
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = str(args.seed)
    if args.pin_axes is not None:
        overrides.setdefault("search", {})["pin_axes"] = args.pin_axes
    if args.allow_anticonfinement:
        overrides.setdefault("search", {})["allow_anticonfinement"] = "true"
    return parse_config(args.config, overrides=overrides)


def _outdir(args, default: str) -> Path:
    out = Path(args.out if args.out else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _crystal_from_config(cfg: RunConfig):
    guess = None
    if cfg.geometry == "triangular":
        spacing = 1.5 * length_scale(min(cfg.trap.omegas), cfg.species)
        weak = np.argsort(cfg.trap.omegas, kind="stable")[:2]
        plane = tuple(sorted(int(a) for a in weak))
        guess = make_lattice("triangular", cfg.trap.n_ions, spacing, plane=plane)
    return solve_equilibrium(cfg.trap, cfg.species, cfg.trap.n_ions, guess)


def _pattern_from_config(cfg: RunConfig):
    if cfg.pinning is None:
        return None
    return TweezerPattern.from_frequencies(cfg.pinning, axes=cfg.space.pin_axes)


def _drive_from_config(cfg: RunConfig, spectrum=None) -> DriveConfig:
    if cfg.mu is None:
        raise InvalidArgumentError("this command needs [drive] mu_mhz")
    return DriveConfig(
        mu=cfg.mu,
        drive_axis=cfg.drive_axis,
        g=cfg.g,
        k_eff=cfg.k_eff,
        resonance_guard=cfg.resonance_guard,
    )


def _cmd_modes(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, "runs/modes")
    crystal = _crystal_from_config(cfg)
    spectrum = mode_spectrum(build_hessian(crystal, _pattern_from_config(cfg)))
    write_matrix_csv(out / "positions.csv", crystal.positions * 1e6, "positions", "um")
    write_matrix_csv(out / "eigenvectors.csv", spectrum.eigenvectors, "eigenvectors", "columns_are_modes")
    write_table_csv(
        out / "spectrum.csv",
        ["mode", "frequency_mhz", "weight_x", "weight_y", "weight_z"],
        [
            (m, spectrum.frequencies[m] / MHZ, *spectrum.direction_weights[m])
            for m in range(spectrum.n_modes)
        ],
        {"name": "mode_spectrum"},
    )
    print(f"wrote spectrum of {crystal.n_ions} ions to {out}")
    return 0


def _cmd_couplings(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, "runs/couplings")
    crystal = _crystal_from_config(cfg)
    spectrum = mode_spectrum(build_hessian(crystal, _pattern_from_config(cfg)))
    drive = _drive_from_config(cfg)
    j = coupling_matrix(spectrum, drive, cfg.species)
    units = "rad/s" if (cfg.g is not None and cfg.k_eff is not None) else "g^2*hbar*k^2/2M = 1"
    write_matrix_csv(out / "couplings.csv", j.matrix, "coupling_matrix", units)
    target = build_target(cfg.target, crystal)
    eps, jtilde = coupling_error(target, j)
    write_matrix_csv(out / "couplings_normalized.csv", jtilde.matrix, "coupling_matrix_normalized", "target_scale")
    write_matrix_csv(out / "target_matrix.csv", target.matrix, "target_matrix", "normalized")
    write_summary(out / "comparison.txt", {"comparison": {"epsilon": eps, "mu_mhz": drive.mu / MHZ}})
    print(f"epsilon = {eps:.6f} at mu/2pi = {drive.mu / MHZ:.4f} MHz; files in {out}")
    return 0


def _cmd_feasibility(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, "runs/feasibility")
    crystal = _crystal_from_config(cfg)
    drive = _drive_from_config(cfg)
    target = build_target(cfg.target, crystal)
    from .optimizer import PinProblem, _per_ion_gradient, _selection_pairs

    problem = PinProblem(crystal, target, drive.drive_axis, cfg.space.pin_axes)
    native = problem.native_spectrum()
    grads = _per_ion_gradient(coupling_jacobian_diag(native, drive, cfg.species), problem)
    pairs = _selection_pairs(cfg.space, crystal)
    system = build_sign_constraints(
        target, coupling_matrix(native, drive, cfg.species), grads,
        selection=pairs, rows=cfg.space.feasibility_rows,
    )
    verdict = feasibility_test(system, pinning_sign=cfg.space.pinning_sign)
    sections = {
        "feasibility": {
            "verdict": "feasible" if verdict.feasible else "infeasible",
            "margin": verdict.margin,
            "rows": system.n_rows,
            "excluded_pairs": len(system.excluded),
            "pinning_sign": cfg.space.pinning_sign,
        }
    }
    if verdict.witness is not None:
        sections["witness"] = {"omega_direction": list(verdict.witness)}
    write_summary(out / "feasibility.txt", sections)
    if system.n_rows:
        write_table_csv(
            out / "constraint_rows.csv",
            ["ion_k", "ion_l", "target_sign"] + [f"grad_ion_{i}" for i in range(crystal.n_ions)],
            [
                (k, l, s, *(system.matrix[r] / np.abs(system.matrix).max()))
                for r, (k, l, s) in enumerate(system.provenance)
            ],
            {"name": "sign_constraints", "scaling": "rows normalized to global max"},
        )
    print(f"{'feasible' if verdict.feasible else 'infeasible'} "
          f"({system.n_rows} rows, margin {verdict.margin:.3e}); files in {out}")
    return 0


def _cmd_optimize(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, "runs/optimize")
    result = run_pipeline(
        cfg.target,
        cfg.space,
        cfg.trap,
        cfg.species,
        symmetry=cfg.symmetry,
        drive_axis=cfg.drive_axis,
        geometry_mode=cfg.stage1_geometry,
        final_geometry=cfg.final_geometry,
        seed=cfg.seed,
        threads=cfg.threads,
    )
    save_result(result, out, cfg.species_name)
    print(
        f"epsilon = {result.epsilon:.6f} at mu/2pi = {result.mu / MHZ:.4f} MHz, "
        f"max pin = {np.abs(result.pin_frequencies).max() / MHZ:.4f} MHz; files in {out}"
    )
    return 0


def _cmd_misalign(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, "runs/misalign")
    if args.in_dir:
        result = load_result(args.in_dir)
    else:
        result = run_pipeline(
            cfg.target, cfg.space, cfg.trap, cfg.species,
            symmetry=cfg.symmetry, drive_axis=cfg.drive_axis,
            geometry_mode=cfg.stage1_geometry, final_geometry=cfg.final_geometry,
            seed=cfg.seed, threads=cfg.threads,
        )
        save_result(result, out / "aligned", cfg.species_name)
    scan = misalignment_scan(
        result, cfg.misalign_scales, cfg.misalign_samples, cfg.seed, axes=cfg.misalign_axes
    )
    write_table_csv(
        out / "misalignment.csv",
        ["average_misalignment_nm", "epsilon"],
        [(avg * 1e9, eps) for avg, eps in scan.records],
        {
            "name": "misalignment_scan",
            "aligned_epsilon": repr(float(scan.aligned_epsilon)),
            "samples": cfg.misalign_samples,
            "failed": scan.n_failed,
        },
    )
    print(
        f"{len(scan.records)} samples ({scan.n_failed} failed), aligned epsilon "
        f"{scan.aligned_epsilon:.6f}; files in {out}"
    )
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args, "runs/experiment")
    beam = TweezerBeam(cfg.beam_power, cfg.beam_waist, cfg.beam_wavelength)
    lines: AtomicLines = (
        load_atomic_lines(cfg.lines_file, cfg.hyperfine) if cfg.lines_file else YB_PLUS_LINES
    )
    rate = scattering_rate(beam, lines)
    omega_p = tweezer_trap_frequency(beam, lines, cfg.species)
    stark = differential_stark_shift(beam, lines)
    sections = {
        "beam": {
            "power_w": beam.power,
            "waist_um": beam.waist * 1e6,
            "wavelength_nm": beam.wavelength * 1e9,
        },
        "estimates": {
            "scattering_rate_per_s": rate,
            "tweezer_frequency_khz": omega_p / (2 * np.pi * 1e3),
            "differential_stark_khz": stark / (2 * np.pi * 1e3),
        },
    }
    if cfg.pinning is not None:
        wanted = [w for w in cfg.pinning if w > 0]
        beams = stark_homogenize(wanted, beam, lines, cfg.species)
        write_table_csv(
            out / "homogenized_beams.csv",
            ["pin_frequency_mhz", "power_w", "waist_um"],
            [(w / MHZ, b.power, b.waist * 1e6) for w, b in zip(wanted, beams)],
            {"name": "stark_homogenized_beams"},
        )
    write_summary(out / "estimators.txt", sections)
    print(
        f"scattering {rate:.2f} /s, pinning {omega_p / (2 * np.pi * 1e3):.0f} kHz, "
        f"stark {stark / (2 * np.pi * 1e3):.1f} kHz; files in {out}"
    )
    return 0


def _cmd_reproduce(args) -> int:
    token = args.token
    fast = args.fast
    threads = args.threads or 1
    out = _outdir(args, f"runs/{token}")
    if token in ("fig3", "table1"):
        nn = run_scenario(nn_chain_12(fast), threads)
        save_result(nn, out / "nn_chain_12")
        rows = [("nn_chain_12", nn.omega_scan / MHZ, nn.mu / MHZ,
                 np.abs(nn.pin_frequencies).max() / MHZ, nn.epsilon)]
        if token == "table1":
            for xi in (3.5, 1.5):
                for even in (True, False):
                    sc = power_law_chain_12(xi, even, fast)
                    res = run_scenario(sc, threads)
                    save_result(res, out / sc.name)
                    rows.append((sc.name, res.omega_scan / MHZ, res.mu / MHZ,
                                 np.abs(res.pin_frequencies).max() / MHZ, res.epsilon))
        write_table_csv(
            out / "summary_table.csv",
            ["scenario", "omega_scan_mhz", "mu_mhz", "max_pin_mhz", "epsilon"],
            rows,
            {"name": token},
        )
    elif token == "fig4":
        rows = []
        for xi in power_law_exponents(fast):
            entry = [xi]
            for even in (True, False):
                res = run_scenario(power_law_chain_12(xi, even, fast), threads)
                entry.append(res.epsilon)
            sc = power_law_chain_12(xi, even=False, fast=fast)
            crystal = solve_equilibrium(sc.trap, YB171, sc.trap.n_ions)
            base_eps, _, _ = untweezed_baseline(
                sc.target, sc.trap, YB171, sc.space.mu, drive_axis=sc.drive_axis,
                pin_axes=sc.space.pin_axes, crystal=crystal,
            )
            entry.append(base_eps)
            rows.append(tuple(entry))
        write_table_csv(
            out / "power_law_errors.csv",
            ["exponent", "epsilon_even", "epsilon_uneven", "epsilon_unpinned"],
            rows,
            {"name": "power_law_error_sweep"},
        )
    elif token in ("fig5", "fig6", "table2"):
        rows = []
        scenarios = []
        if token in ("fig5", "table2"):
            scenarios.append(frustrated_ladder_12(fast))
        if token in ("fig6", "table2"):
            scenarios.append(triangular_af_19(fast))
        for sc in scenarios:
            res = run_scenario(sc, threads)
            save_result(res, out / sc.name)
            rows.append((sc.name, res.omega_scan / MHZ, res.mu / MHZ,
                         np.abs(res.pin_frequencies).max() / MHZ, res.epsilon))
        write_table_csv(
            out / "summary_table.csv",
            ["scenario", "omega_scan_mhz", "mu_mhz", "max_pin_mhz", "epsilon"],
            rows,
            {"name": token},
        )
    elif token == "fig7":
        nn = run_scenario(nn_chain_12(fast), threads)
        save_result(nn, out / "nn_chain_12")
        scales, samples, seed = misalignment_settings(fast)
        scan = misalignment_scan(nn, scales, samples, seed)
        write_table_csv(
            out / "misalignment.csv",
            ["average_misalignment_nm", "epsilon"],
            [(avg * 1e9, eps) for avg, eps in scan.records],
            {
                "name": "misalignment_scan",
                "aligned_epsilon": repr(float(scan.aligned_epsilon)),
                "samples": samples,
                "failed": scan.n_failed,
            },
        )
    print(f"scenario {token} written to {out}")
    return 0


_COMMANDS = {
    "modes": _cmd_modes,
    "couplings": _cmd_couplings,
    "feasibility": _cmd_feasibility,
    "optimize": _cmd_optimize,
    "misalign": _cmd_misalign,
    "experiment": _cmd_experiment,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConvergenceError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 2
    except TweezerIsingError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
