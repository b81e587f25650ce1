"""Command-line entry point: ``parametric-qed <subcommand> --config run.json``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io, plotting
from .analytic import (DetuningError, OverdampedError, AmplitudeRecord, effective_rabi,
                       eigenfrequencies, occupations_ode)
from .config import RunConfig, load_config
from .lindblad_oracle import InvariantError, evolve_density
from .model import ConfigError, build_basis, build_hamiltonian, build_operators, validate_rwa
from .spectra import (InconsistentRatiosError, Spectrum, extract_rates, peak_analysis,
                      phonon_spectrum_analytic, photon_spectrum_analytic, predicted_ratios,
                      spectrum_from_correlator)
from .stochastic import STATES, EnsembleError, run_ensemble

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_MODEL = 0, 2, 3, 4
LABELS = {"000": (0, 0, 0), "010": (0, 1, 0), "100": (1, 0, 0), "110": (1, 1, 0), "001": (0, 0, 1)}
COMPARE_TOL = 0.10


class ModelValidityError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class _Run:
    def __init__(self, cfg: RunConfig, fmt: str, no_mc: bool):
        self.cfg, self.fmt, self.no_mc = cfg, fmt, no_mc
        self.out = Path(cfg.output_dir)
        self.header = cfg.resolved()
        self.files: list[str] = []

    def table(self, name, columns):
        p = io.write_table(self.out / f"{name}.csv", columns, self.header, self.cfg.frequency_unit,
                           fmt=self.fmt)
        self.files.append(str(p))

    def json(self, name, obj):
        self.files.append(str(io.write_json(self.out / f"{name}.json", obj, self.header)))

    def svg(self, name, *args, **kw):
        self.files.append(str(plotting.line_chart(self.out / f"{name}.svg", *args, **kw)))

    def dat(self, name, x, y):
        self.files.append(str(io.write_dat(self.out / f"{name}.dat", x, y)))


def _require_rwa(cfg: RunConfig):
    if not cfg.options["check_rwa"]:
        return
    rep = validate_rwa(cfg.params, cfg.options["rwa_threshold"])
    if not rep.passed:
        raise ModelValidityError("rotating-wave conditions violated", rep.to_dict())


def _require_parametric(cfg, what):
    if cfg.model != "parametric":
        raise ConfigError(f"model: {what} needs the parametric model, got {cfg.model!r}")


def _t_max(cfg: RunConfig) -> float:
    if cfg.grids["t_max"] is not None:
        return float(cfg.grids["t_max"])
    p = cfg.params
    if cfg.model == "parametric" and sum(p.rates) > 0:
        return 5.0 / ((p.mu_omega + p.mu_v + p.gamma_e) / 4)
    coupling = abs(p.rabi3 if cfg.model == "parametric" else p.rabi2)
    return 3 * math.pi / coupling


def cmd_validate(run: _Run) -> int:
    rep = validate_rwa(run.cfg.params, run.cfg.options["rwa_threshold"])
    run.json("validate", {"rwa": rep.to_dict(), "detuning": run.cfg.params.detuning})
    return EXIT_OK if rep.passed else EXIT_MODEL


def cmd_hamiltonian(run: _Run) -> int:
    cfg = run.cfg
    basis = build_basis(cfg.basis["n_phonon_max"], cfg.basis["n_photon_max"])
    H = build_hamiltonian(cfg.model, cfg.params, cfg.coupling, basis)
    rows, cols = np.nonzero(np.abs(H) > 0)
    lab = ["%d%d%d" % basis.label(k) for k in range(basis.dim)]
    run.table("hamiltonian", {"row": rows, "col": cols,
                              "bra": [lab[r] for r in rows], "ket": [lab[c] for c in cols],
                              "re": H[rows, cols].real, "im": H[rows, cols].imag})
    return EXIT_OK


def _frame(cfg):
    return (cfg.params.omega, cfg.params.omega_v) if cfg.model == "parametric" else (cfg.params.omega, 0.0)


def cmd_dynamics(run: _Run) -> int:
    cfg = run.cfg
    _require_rwa(cfg)
    p = cfg.params
    t_max = _t_max(cfg)
    t = np.linspace(0.0, t_max, int(cfg.grids["n_t"]))
    use_mc = cfg.model == "parametric" and not run.no_mc
    if use_mc:
        dt = cfg.noise.dt
        t = np.unique(np.rint(t / dt)) * dt
    basis = build_basis(cfg.basis["n_phonon_max"], cfg.basis["n_photon_max"])
    ops = build_operators(basis)
    H = build_hamiltonian(cfg.model, p, cfg.coupling, ops=ops, frame=_frame(cfg))
    psi0 = basis.ket(0, 0, 1)
    evo = evolve_density(np.outer(psi0, psi0.conj()), H, p, ops, t)
    oracle = {s: evo.population(basis.index(*LABELS[s])) for s in STATES}
    run.table("dynamics_oracle", {"t": t, **{f"p{s}": oracle[s] for s in STATES},
                                  "trace": np.trace(evo.rho, axis1=1, axis2=2).real})
    summary = {"t_max": t_max, "oracle_dt": evo.dt}
    series, styles = {}, {}
    for s in ("001", "110"):
        series[f"oracle |{s}>"] = oracle[s]
        styles[f"oracle |{s}>"] = {"ls": "--"}

    analytic_ok = cfg.model == "parametric"
    if analytic_ok:
        try:
            rec = AmplitudeRecord.closed_form(t, p, rotating=True)
        except (OverdampedError, DetuningError) as exc:
            summary["analytic_skipped"] = str(exc)
            analytic_ok = False
    if analytic_ok:
        ode = occupations_ode(t, p)
        run.table("dynamics_analytic", {
            "t": t, **{f"p{s}": rec.occupations[s] for s in STATES},
            "C001_re": rec.C001.real, "C001_im": rec.C001.imag,
            "C110_re": rec.C110.real, "C110_im": rec.C110.imag,
            "ode_p100": ode[0], "ode_p010": ode[1], "ode_p000": ode[2]})
        summary["analytic_vs_oracle_sup"] = {
            s: float(np.abs(rec.occupations[s] - oracle[s]).max()) for s in STATES}
        for s in ("001", "110"):
            series[f"analytic |{s}>"] = rec.occupations[s]

    if use_mc:
        ens = run_ensemble(p, t[-1], cfg.noise, checkpoints=t)
        obs, tt, mean, se = [], [], [], []
        for k, s in enumerate(STATES):
            obs += [f"p{s}"] * len(t)
            tt.append(ens.t)
            mean.append(ens.mean[:, k])
            se.append(ens.stderr[:, k])
        obs += ["norm"] * len(t)
        tt.append(ens.t)
        mean.append(ens.norm_mean)
        se.append(ens.norm_stderr)
        run.table("dynamics_mc", {"t": np.concatenate(tt), "observable": obs,
                                  "mean": np.concatenate(mean), "stderr": np.concatenate(se)})
        oracle_arr = np.column_stack([oracle[s] for s in STATES])
        # zero-variance components are compared at the oracle accuracy floor
        z = np.abs(ens.mean - oracle_arr) / np.maximum(ens.stderr, 1e-8 / 3)
        summary["mc_max_z"] = {s: float(z[:, k].max()) for k, s in enumerate(STATES)}
        summary["mc_aborted"] = ens.n_aborted
    run.svg("dynamics", t, series, "t", "population", styles=styles)
    run.json("dynamics_summary", summary)
    return EXIT_OK


def _spectra_for(cfg, field):
    p = cfg.params
    W, _, _ = effective_rabi(p)
    half = cfg.grids["detuning_half_span"] * W
    d = np.linspace(-half, half, int(cfg.grids["n_detuning"]))
    fn = photon_spectrum_analytic if field == "photon" else phonon_spectrum_analytic
    return fn(p, detuning=d, include_s3=cfg.options["include_s3"])


def cmd_spectrum(run: _Run) -> int:
    cfg = run.cfg
    _require_parametric(cfg, "spectrum")
    _require_rwa(cfg)
    fields = ["photon", "phonon"] if cfg.options["field"] == "both" else [cfg.options["field"]]
    report = {}
    for field in fields:
        sp = _spectra_for(cfg, field)
        run.table(f"spectrum_{field}", {"nu": sp.nu, "S": sp.S, "S1": sp.S1, "S2": sp.S2, "S3": sp.S3})
        run.dat(f"spectrum_{field}", sp.nu, sp.S)
        series = {"analytic": sp.S}
        entry = {"analytic": peak_analysis(sp).to_dict()}
        for src in cfg.options["spectrum_sources"]:
            if src == "analytic" or (src == "mc" and run.no_mc):
                continue
            num = spectrum_from_correlator(src, cfg.params, detuning=sp.detuning, field=field,
                                           cfg=cfg.noise)
            run.table(f"spectrum_{field}_{src}", {"nu": num.nu, "S": num.S})
            series[src] = num.S
            entry[src] = peak_analysis(num).to_dict()
            entry[src]["sup_error_vs_analytic"] = float(np.abs(num.S - sp.S).max() / sp.S.max())
            entry[src]["truncation_error"] = num.truncation_error
        report[field] = entry
        run.svg(f"spectrum_{field}", sp.nu, series, "nu", "S(nu)",
                styles={"qrt": {"ls": "--"}, "mc": {"ls": ":"}})
    run.json("peaks", report)
    return EXIT_OK


def cmd_anticrossing(run: _Run) -> int:
    cfg = run.cfg
    _require_parametric(cfg, "anticrossing")
    p = cfg.params
    span = cfg.grids["anticrossing_half_span"] * abs(p.rabi3)
    d = np.linspace(-span, span, int(cfg.grids["n_anticrossing"]))
    lp, lm = eigenfrequencies(d, p)
    run.table("anticrossing", {"detuning": d, "re_plus": lp.real, "im_plus": lp.imag,
                               "re_minus": lm.real, "im_minus": lm.imag})
    run.svg("anticrossing", d, {"Re lambda+": lp.real - p.omega_e, "Re lambda-": lm.real - p.omega_e},
            "detuning", "Re lambda - omega_e")
    return EXIT_OK


def _spectrum_from_csv(path, field):
    cols = io.read_table(path)
    if "nu" not in cols or "S" not in cols:
        raise ConfigError(f"{path}: needs columns nu and S")
    return Spectrum(cols["nu"], cols["S"], 0.0, field)


def cmd_extract_rates(run: _Run) -> int:
    cfg = run.cfg
    o = cfg.options
    if o["photon_spectrum"] or o["phonon_spectrum"]:
        if not (o["photon_spectrum"] and o["phonon_spectrum"]):
            raise ConfigError("options: photon_spectrum and phonon_spectrum must be given together")
        sp = _spectrum_from_csv(o["photon_spectrum"], "photon")
        sq = _spectrum_from_csv(o["phonon_spectrum"], "phonon")
        origin = "files"
    else:
        _require_parametric(cfg, "extract-rates without spectrum files")
        sp, sq = _spectra_for(cfg, "photon"), _spectra_for(cfg, "phonon")
        origin = "analytic spectra of the configured parameters"
    rp, rq = peak_analysis(sp), peak_analysis(sq)
    out = {"origin": origin, "xi_omega": rp.ratio, "xi_Omega": rq.ratio,
           "photon_peaks": rp.to_dict(), "phonon_peaks": rq.to_dict()}
    p = cfg.params
    if p.mu_omega > 0 and p.mu_v > 0:
        xw, xv = predicted_ratios(p)
        out["predicted"] = {"xi_omega": xw, "xi_Omega": xv, "x": p.mu_v / p.mu_omega,
                            "y": p.gamma_e / p.mu_omega}
    if rp.ratio is None or rq.ratio is None:
        out["error"] = "three peaks are needed in both spectra"
        run.json("rates", out)
        raise InconsistentRatiosError(out["error"])
    est = extract_rates(rp.ratio, rq.ratio)
    out.update(est.to_dict())
    run.json("rates", out)
    return EXIT_OK


def cmd_compare(run: _Run) -> int:
    from .universality import compare_to_parametric, cutoff_shift

    cfg = run.cfg
    if cfg.model == "parametric":
        raise ConfigError("model: compare needs a molecular or optomechanical model")
    _require_rwa(cfg)
    res = compare_to_parametric(cfg.model, cfg.params, cfg.coupling,
                                rabi_periods=cfg.options["rabi_periods"],
                                n_phonon_max=cfg.basis["n_phonon_max"])
    shift = cutoff_shift(cfg.model, res.params_kind, cfg.coupling, cfg.basis["n_phonon_max"],
                         res.t[-1])
    run.table(f"compare_{cfg.model}", {"t": res.t, "p110_kind": res.p_kind,
                                       "p110_parametric": res.p_parametric,
                                       "env_kind": res.env_kind, "env_parametric": res.env_parametric})
    summary = {**res.summary(), "tolerance": COMPARE_TOL, "cutoff_doubling_shift": shift,
               "passed": res.envelope_error < COMPARE_TOL}
    run.json("compare", summary)
    run.svg(f"compare_{cfg.model}", res.t, {cfg.model: res.env_kind, "parametric": res.env_parametric},
            "t", "|C_110|^2 envelope")
    return EXIT_OK if summary["passed"] else EXIT_INVARIANT


COMMANDS = {
    "validate": (cmd_validate, "rotating-wave validity report"),
    "hamiltonian": (cmd_hamiltonian, "dump the Hamiltonian matrix"),
    "dynamics": (cmd_dynamics, "closed-form, master-equation and Monte-Carlo populations"),
    "spectrum": (cmd_spectrum, "photon and/or phonon emission spectra with peak reports"),
    "anticrossing": (cmd_anticrossing, "eigenfrequency branches versus detuning"),
    "extract-rates": (cmd_extract_rates, "relaxation-rate ratios from spectral peak heights"),
    "compare": (cmd_compare, "molecular/optomechanical versus three-wave dynamics"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parametric-qed",
        description="Dynamics and emission spectra at the electron-photon-phonon parametric "
                    "resonance. Exit codes: 0 ok, 2 config error, 3 numerical invariant "
                    "violated, 4 model validity (RWA) failure.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override noise.seed")
        sp.add_argument("--out", metavar="DIR", help="override output_dir")
        sp.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of tabular outputs (default csv)")
        sp.add_argument("--no-mc", action="store_true", help="skip Monte-Carlo stages")
    return parser


def _fail(code, kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra},
                     default=str), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.noise = dataclasses.replace(cfg.noise, seed=args.seed)
        if args.out:
            cfg.output_dir = args.out
        run = _Run(cfg, args.format, args.no_mc)
        code = COMMANDS[args.command][0](run)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), problems=exc.problems)
    except ModelValidityError as exc:
        return _fail(EXIT_MODEL, "model_validity", str(exc), report=exc.report)
    except (OverdampedError, DetuningError, InconsistentRatiosError) as exc:
        return _fail(EXIT_MODEL, "model_validity", str(exc))
    except (InvariantError, EnsembleError) as exc:
        return _fail(EXIT_INVARIANT, "numerical_invariant", str(exc))
    print(json.dumps({"command": args.command, "exit_code": code, "files": run.files}))
    return code


if __name__ == "__main__":
    sys.exit(main())
