"""Command-line front end.

Every command writes <command>.json (schema 1) plus CSV and two-column
plot-data siblings, and a PNG rendering of the plot data, into --out.
Exit codes: 0 success, 1 configuration error, 2 computation error,
3 verification failure.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import __version__, io

EXIT_CONFIG, EXIT_COMPUTE, EXIT_VERIFY = 1, 2, 3


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def parse_potential(spec: str):
    from .potential import PotentialError, load_potential, make_lame_one_gap, zero_potential
    try:
        if spec == "zero":
            return zero_potential()
        if spec.startswith("lame:"):
            return make_lame_one_gap(float(spec[5:]))
        if spec.startswith("trig:"):
            return load_potential(spec[5:])
    except (OSError, ValueError, KeyError, PotentialError) as exc:
        raise ConfigError(f"cannot build potential {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown potential {spec!r}; use zero, lame:<k> or trig:<file>")


def parse_nset(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --nset {text!r}") from exc
    if len(vals) < 3 or min(vals) < 1:
        raise ConfigError("--nset needs at least three positive integers")
    return vals


DEFAULTS = {"potential": "lame:0.5", "nmax": None, "N": 1, "nset": "8,11,16,23,32,45",
            "out": "kdvnf_out", "seed": 0, "quick": False}


def merge_config(config_path, **flags) -> dict:
    cfg = dict(DEFAULTS)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS) - {"family"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    if cfg.get("nmax") is not None and int(cfg["nmax"]) < 1:
        raise ConfigError("--nmax must be positive")
    if int(cfg.get("N", 1)) < 0:
        raise ConfigError("--N must be non-negative")
    return cfg


def common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="JSON file with any of the flags below."),
        click.option("--potential", default=None, help="zero | lame:<k> | trig:<file>"),
        click.option("--nmax", type=int, default=None),
        click.option("--N", "N", type=int, default=None),
        click.option("--nset", default=None, help="comma separated n values"),
        click.option("--out", default=None, type=click.Path()),
        click.option("--seed", type=int, default=None),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _emit(cfg, command, results, csv_rows=None, plots=None):
    """Write the report, CSV and plot data; plots: name -> (x, y, xlabel, ylabel, log)."""
    from . import plotting
    out = io.ensure_dir(cfg["out"])
    io.write_json(os.path.join(out, f"{command}.json"), io.report(command, {k: v for k, v in cfg.items() if k != "out"}, results,
                                                                 __version__))
    if csv_rows is not None:
        io.write_csv(os.path.join(out, f"{command}.csv"), csv_rows)
    for name, (x, y, xl, yl, logy) in (plots or {}).items():
        io.write_plot_data(os.path.join(out, f"{name}.dat"), x, y, header=f"{xl} {yl}")
        plotting.line_plot(os.path.join(out, f"{name}.png"), [(x, y, "")], xl, yl, name,
                           logy=logy)
    click.echo(f"wrote {command} report to {out}")


@click.group()
@click.version_option(__version__, prog_name="kdvnf")
def cli():
    """Spectral data, expansions and normal-form checks for periodic KdV."""


@cli.command()
@common
def spectrum(config_path, **kw):
    """Periodic, Dirichlet and Neumann eigenvalues with gap lengths."""
    from .hill import spectral_table
    cfg = merge_config(config_path, **kw)
    q = parse_potential(cfg["potential"])
    t = spectral_table(q, int(cfg["nmax"] or 12))
    n = np.arange(1, t.n_max + 1)
    _emit(cfg, "spectrum", {"potential": q.to_json(), "table": t.to_json(),
                            "open_gaps": t.open_gaps()},
          list(t.csv_rows()), {"gaps": (n, np.maximum(t.gamma[1:], 1e-300), "n", "gamma_n", True)})


@cli.command()
@common
def floquet(config_path, **kw):
    """Floquet coefficients, gap factors, normalizations and W_n for n in --nset (collapsed gaps)."""
    from . import floquet as fl
    from .hill import spectral_table
    cfg = merge_config(config_path, **kw)
    q = parse_potential(cfg["potential"])
    ns = parse_nset(cfg["nset"])
    t = spectral_table(q, max(max(ns), int(cfg["nmax"] or 0)))
    rows = [["n", "re_a_plus", "im_a_plus", "xi", "d", "beta", "HH", "GG", "HG"]]
    records = []
    for n in ns:
        ap, am = fl.floquet_coefficient(q, t, n)
        H, G = fl.normalized_pair(q, t, n)
        r = fl.normalization_residuals(H, G)
        xi, d, b = fl.gap_factor_xi(q, t, n), fl.gap_factor_d(q, t, n, check=None), fl.beta_angle(q, t, n)
        W, _ = fl.W_function(q, t, n)
        records.append({"n": n, "a_plus": ap, "a_minus": am, "xi": xi, "d": d, "beta": b,
                        "normalization": r, "W_samples": W})
        rows.append([n, ap.real, ap.imag, xi, d, b, r["HH"], r["GG"], r["HG"]])
    res = {"nsamples": fl.NSAMPLES, "records": records}
    n0 = ns[0]
    fp, _ = fl.floquet_solution(q, t, n0)
    W, _ = fl.W_function(q, t, n0)
    x = np.linspace(0, 1, len(fp))
    _emit(cfg, "floquet", res, rows,
          {f"f_plus_{n0}_re": (x, fp.real, "x", "Re f", False),
           f"W_{n0}_re": (x[:-1], W.real, "x", "Re W", False)})


@cli.command()
@common
@click.option("--family", default=None,
              type=click.Choice(["f", "W", "tau", "a", "xi", "d", "beta", "omega", "Omega"]))
def expand(config_path, family, **kw):
    """Large-n expansion of one family with the sup-remainder table over --nset."""
    from . import asympt
    from .hill import spectral_table
    cfg = merge_config(config_path, family=family, **kw)
    fam = cfg.get("family") or "W"
    q = parse_potential(cfg["potential"])
    ns = parse_nset(cfg["nset"])
    N = int(cfg["N"])
    t = spectral_table(q, max(ns))
    if fam == "f":
        rep = asympt.floquet_expansion(q, t, N, ns)
    elif fam == "W":
        rep = asympt.W_expansion(q, t, N, ns)
    else:
        rep = asympt.scalar_expansions(q, t, fam, N, ns)
    res = {"family": fam, "N": N, **rep.to_json(), "bounded": rep.bounded()}
    rows = [["n", "sup_remainder"]] + [[int(n), float(s)] for n, s in zip(rep.ns, rep.sup)]
    _emit(cfg, "expand", res, rows,
          {f"remainder_{fam}": (rep.ns, rep.sup, "n", "sup |R_N|", True)})


@cli.command()
@common
def freqs(config_path, **kw):
    """Actions of open gaps and frequencies omega_n, Omega_n for n in --nset."""
    from . import floquet as fl
    from .hill import spectral_table
    from .potential import hamiltonian_kdv
    cfg = merge_config(config_path, **kw)
    q = parse_potential(cfg["potential"])
    ns = parse_nset(cfg["nset"])
    t = spectral_table(q, max(max(ns), int(cfg["nmax"] or 0)))
    actions = {str(k): fl.action(q, t, k) for k in t.open_gaps()}
    res = {"actions": actions, "H": hamiltonian_kdv(q)}
    rows = [["n", "omega", "Omega"]]
    om = []
    for n in (1,) + tuple(ns):
        w = fl.frequency(q, t, n)
        rows.append([n, w, w / (2 * np.pi * n)])
        om.append(w)
    res["omega"] = {str(n): w for n, w in zip((1,) + tuple(ns), om)}
    nn = np.array(ns)
    dev = np.abs(np.array(om[1:]) - (2 * np.pi * nn) ** 3) * 2 * np.pi * nn
    _emit(cfg, "freqs", res, rows,
          {"omega_deviation": (nn, np.maximum(dev, 1e-300), "n", "2 pi n |omega_n - (2 pi n)^3|", True)})


def _chart_from(cfg, default_nmax=32):
    from . import nfmap as nf
    spec = cfg["potential"]
    if not spec.startswith("lame:"):
        raise ConfigError("the one-gap chart needs --potential lame:<k>")
    k = float(spec[5:])
    if not 0 < k < 1:
        raise ConfigError("elliptic modulus must lie in (0, 1)")
    tc = nf.TruncConfig(n_max=int(cfg["nmax"] or default_nmax))
    return nf.OneGapChart(tc, 0.0, nf.action_of_modulus(k), modulus_guess=k)


@cli.command()
@common
@click.option("--export-matrices", is_flag=True, default=False,
              help="also write L(z) and Psi_1 as binary matrices")
def corrector(config_path, export_matrices, **kw):
    """Symplectic corrector: fixed points, inverse flow, residuals, L rows and parametrix."""
    from . import nfmap as nf
    cfg = merge_config(config_path, **kw)
    ch = _chart_from(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    z0 = nf.base_state(ch)
    zp = nf.random_perp(ch.cfg, rng, ch.cfg.radius, flat=True)
    z = z0 + zp
    ns, rows_L, slope = nf.L_perp_row_norms(ch, z)
    # symbol band 6, narrowed on small truncations so the fit window is not empty
    band = max(1, min(6, ch.cfg.n_max // 2 - 2))
    p1 = nf.parametrix_coeffs(ch, z, band=band)
    p2 = nf.parametrix_coeffs(ch, z0 + 2 * zp, band=band)
    res = {
        "modulus": ch.modulus, "I1": ch.I1,
        "base_fixed": float(np.max(np.abs(nf.psi_C(ch, z0) - z0))),
        "inverse": float(np.max(np.abs(nf.psi_C_inv(ch, nf.psi_C(ch, z)) - z))),
        "symplectic_residual": nf.symplectic_residual(ch, z, seed=int(cfg["seed"])),
        "symplectic_residual_no_corrector": nf.symplectic_residual(ch, z, seed=int(cfg["seed"]),
                                                                   corrector=False),
        "transpose_identity": nf.psi1_transpose_identity(ch),
        "L_perp_row_slope": slope,
        "parametrix": {"a1_norm": p1["a_norm"][1], "a1_scaling": p2["a_norm"][1] / p1["a_norm"][1],
                       "remainder_slope": p1["slope"]},
    }
    rows = [["n", "L_perp_row_norm"]] + [[int(n), float(r)] for n, r in zip(ns, rows_L)]
    if export_matrices:
        out = io.ensure_dir(cfg["out"])
        nf.export_matrix(os.path.join(out, "L.bin"), nf.L_blocks(ch, z))
        nf.export_matrix(os.path.join(out, "psi1.bin"), nf.psi1_matrix(ch))
    o = np.argsort(p1["ns"], kind="stable")
    _emit(cfg, "corrector", res, rows,
          {"L_rows": (ns, rows_L, "n", "row norm", True),
           "parametrix_remainder": (p1["ns"][o], p1["rows"][o], "|n|", "|R_n|", True)})


@cli.command()
@common
def normalform(config_path, **kw):
    """Quadratic form, operator identity and cubic scaling of H o Psi_L o Psi_C."""
    from . import nfmap as nf
    cfg = merge_config(config_path, **kw)
    ch = _chart_from(cfg)
    rep = nf.hamiltonian_normal_form_check(ch)
    quad = rep["quadratic"]["relative"]
    rows = [["n", "relative_error"]] + [[n, v] for n, v in quad.items()]
    n = np.array(list(quad))
    _emit(cfg, "normalform", rep, rows,
          {"quadratic_relative": (n, np.maximum(list(quad.values()), 1e-300), "n",
                                  "|Q_n - Omega_n| / Omega_n", True),
           "cubic_defect": (rep["cubic"]["eps"], rep["cubic"]["defect"], "eps", "defect", True)})


@cli.command()
@common
def paracalc(config_path, **kw):
    """Composition constants and band-doubling behaviour of the paradifferential bounds."""
    from . import paracalc as pc
    cfg = merge_config(config_path, **kw)
    chi = pc.make_cutoff()
    a = np.array([1.0, 0.0, 1.0], complex)
    rows = pc.constants_table(a, i_max=3)
    N = max(int(cfg["N"]), 2)
    rng = np.random.default_rng(int(cfg["seed"]))
    b = pc.random_function(rng, 6, decay=3)
    bands = [32, 64, 128, 256]
    psi = [pc.psido_compose_expand(b, 1, 1, N, B).remainder_norm for B in bands]
    par = [pc.para_compose_expand(chi, b, 1, 1, N, B).remainder_norm for B in bands]
    tr = [pc.transpose_smoothing(chi, b, 0, 2, B) for B in bands]
    sigma, _ = pc.sigma_stabilization(chi, 1, 1, N, seed=int(cfg["seed"]))
    res = {"constants": [r[:5] for r in rows], "max_discrepancy": max(r[5] for r in rows),
           "bands": bands, "psido_remainder": psi, "para_remainder": par, "transpose": tr,
           "sigma_stable": sigma}
    _emit(cfg, "paracalc", res, [["k", "j", "i", "C_i", "fit_residual"]] + [r[:5] for r in rows],
          {"para_remainder": (bands, par, "band", "remainder norm", True)})


@cli.command()
@common
@click.option("--quick", is_flag=True, default=None, help="only the closed-form q=0 suite")
@click.option("--only", default=None, help="comma separated criterion numbers")
def verify(config_path, quick, only, **kw):
    """Run the acceptance suite and print one line per criterion."""
    from . import acceptance
    cfg = merge_config(config_path, quick=quick, **kw)
    sel = [int(v) for v in only.split(",")] if only else None
    results = acceptance.run_all(quick=bool(cfg["quick"]), only=sel)
    for r in results:
        click.echo(r.line())
    ok = all(r.passed for r in results)
    rep = {str(r.number): {"name": r.name, "passed": r.passed,
                           "details": {k: v for k, v in r.details.items() if "seconds" not in k}}
           for r in results}
    _emit(cfg, "verify", {"criteria": rep, "all_passed": ok},
          [["criterion", "name", "passed"]] + [[r.number, r.name, r.passed] for r in results])
    return 0 if ok else EXIT_VERIFY


def dispatch(argv=None) -> int:
    """Run the CLI and return the exit code instead of exiting."""
    from .asympt import AsymptError
    from .floquet import FloquetError
    from .hill import HillError
    from .nfmap import NFMapError
    from .paracalc import ParacalcError
    from .potential import PotentialError
    try:
        rv = cli.main(args=argv, prog_name="kdvnf", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except (HillError, FloquetError, AsymptError, NFMapError, ParacalcError, PotentialError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        click.echo(f"computation error in {type(exc).__module__}: {exc}", err=True)
        return EXIT_COMPUTE
    return int(rv or 0)


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
