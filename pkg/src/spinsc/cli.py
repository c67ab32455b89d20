"""Batch command-line interface: config parsing, task dispatch, reports.

Every task writes a JSON report (validating against the versioned schemas
shipped under ``spinsc/schemas``) plus CSV plot data.  Runs are
deterministic: the same config produces byte-identical files, floats are
written with 17 significant digits, and no timestamps enter the output.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .hp_quantization import (CriticalAssembly, assembly_spectrum,
                              closed_form_function)
from .matrix_elements import (MatrixElementRecord, ObservableSpec,
                              critical_f0, critical_f_k, effective_period,
                              exact_f_k, observable_matrix, records_to_csv,
                              regular_f_k)
from .numerics import DEFAULT_TOL
from .operator_algebra import ModelParams, hamiltonian_operator, symbol_of
from .phase_space import (bs_spectrum, critical_energies,
                          find_critical_points, hyperbolic_points,
                          level_set_branches)
from .spectrum import (build_matrix, default_hp_radius, eigensystem,
                       exact_spectrum, husimi_weight, spectrum_to_csv,
                       wavefunction_zeros)

TASKS = ("spectrum", "classify", "quantize", "bs", "matelem", "husimi",
         "compare", "figure")
FIGURES = ("fig2_homo", "fig2_hetero", "fig3")


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

class ConfigError(ValueError):
    pass


def _flatten_dict(obj: dict, prefix: str = "") -> dict:
    out: dict = {}
    for k, v in obj.items():
        key = prefix + str(k)
        if isinstance(v, dict):
            out.update(_flatten_dict(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        return text


def parse_config_text(text: str) -> dict:
    """Flat dotted-key text (``model.h = 1.0``) or a JSON object."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _flatten_dict(json.loads(text))
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        out[key.strip()] = _parse_value(val.strip())
    return out


_KNOWN_KEYS = {
    "task", "n", "out",
    "model.h", "model.gamma_x", "model.gamma_y", "model.mu",
    "window.eta_abs", "window.e_min", "window.e_max",
    "quantize.method", "quantize.eps_c",
    "matelem.observable", "matelem.k_max", "matelem.region", "matelem.eps",
    "husimi.state", "husimi.radius",
    "figure.which",
}


@dataclass
class RunConfig:
    """Validated run description; ``raw`` keeps the flat config echo."""

    task: str
    model: ModelParams
    n: list[int]
    out: Path
    raw: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    @classmethod
    def from_flat(cls, flat: dict, out_dir: str | None = None) -> "RunConfig":
        for key in flat:
            if key not in _KNOWN_KEYS and not key.startswith("tol."):
                raise ConfigError(f"unknown config key {key!r}")
        task = flat.get("task")
        if task not in TASKS:
            raise ConfigError(
                f"task must be one of {', '.join(TASKS)}; got {task!r}")
        if task == "figure":
            which = flat.get("figure.which")
            if which not in FIGURES:
                raise ConfigError(
                    f"figure.which must be one of {', '.join(FIGURES)}")
            model = ModelParams(h=1.0)     # pinned per figure, placeholder
        else:
            if "model.h" not in flat:
                raise ConfigError("model.h is required")
            model = ModelParams(
                h=float(flat["model.h"]),
                gamma_x=float(flat.get("model.gamma_x", 0.0)),
                gamma_y=float(flat.get("model.gamma_y", 0.0)),
                mu=float(flat.get("model.mu", 0.0)))
        n_raw = flat.get("n", [])
        if isinstance(n_raw, (int, float)):
            n_list = [int(n_raw)]
        elif isinstance(n_raw, list):
            n_list = [int(v) for v in n_raw]
        else:
            raise ConfigError("n must be an integer or a list of integers")
        if any(v < 1 or v != float(f) for v, f in
               zip(n_list, np.atleast_1d(n_raw))):
            raise ConfigError("n values must be integers >= 1")
        if task not in ("classify", "figure") and not n_list:
            raise ConfigError(f"task {task!r} requires n")
        if task in ("matelem", "husimi") and len(n_list) != 1:
            raise ConfigError(f"task {task!r} takes a single n")
        if task == "bs" and not ("window.e_min" in flat
                                 and "window.e_max" in flat):
            raise ConfigError("task 'bs' requires window.e_min / window.e_max")
        if task == "matelem" and flat.get("matelem.region", "critical") \
                not in ("critical", "regular"):
            raise ConfigError("matelem.region must be critical or regular")
        if flat.get("matelem.region") == "regular" \
                and "matelem.eps" not in flat:
            raise ConfigError("regular-region matelem requires matelem.eps")
        out = Path(out_dir if out_dir is not None else flat.get("out", "."))
        return cls(task=task, model=model, n=n_list, out=out, raw=dict(flat))


# ----------------------------------------------------------------------
# report plumbing
# ----------------------------------------------------------------------

def load_schema(ident: str) -> dict:
    """Schema document for an identifier like ``spinsc/compare/v1``."""
    _, name, version = ident.split("/")
    from importlib import resources

    ref = resources.files("spinsc.schemas") / f"{name}-{version}.json"
    return json.loads(ref.read_text())

def _round17(obj):
    """Floats round-tripped through the fixed 17-sig-digit format."""
    if isinstance(obj, dict):
        return {k: _round17(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_round17(v) for v in obj]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(fmt(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": float(fmt(obj.real)), "im": float(fmt(obj.imag))}
    raise TypeError(f"cannot serialize {type(obj)!r}")


def provenance(cfg: RunConfig) -> dict:
    return {"package": "spinsc", "version": __version__,
            "config": dict(cfg.raw), "tolerances": asdict(DEFAULT_TOL)}


def write_report(cfg: RunConfig, name: str, payload: dict) -> Path:
    payload = dict(payload)
    payload.setdefault("schema", f"spinsc/{cfg.task}/v1")
    payload["task"] = cfg.task
    payload["provenance"] = provenance(cfg)
    path = cfg.out / name
    with open(path, "w") as fh:
        json.dump(_round17(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path: Path, header: list[str], rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int)) else fmt(v)
                        for v in row])


def _sym_of(cfg: RunConfig):
    return symbol_of(hamiltonian_operator(cfg.model))


def _hp_energy(sym, cfg: RunConfig) -> float:
    if "quantize.eps_c" in cfg.raw:
        return float(cfg.raw["quantize.eps_c"])
    hps = hyperbolic_points(sym)
    if not hps:
        raise ConfigError("model has no hyperbolic point; nothing to quantize")
    counts: dict[float, list] = {}
    for fp in hps:
        counts.setdefault(round(fp.energy, 9), []).append(fp)
    best = sorted(counts, key=lambda e: (-len(counts[e]), e))
    if len(best) > 1 and len(counts[best[0]]) == len(counts[best[1]]):
        raise ConfigError(
            f"ambiguous hyperbolic energies {best}; set quantize.eps_c")
    return float(counts[best[0]][0].energy)


# ----------------------------------------------------------------------
# tasks
# ----------------------------------------------------------------------

def run_spectrum(cfg: RunConfig) -> dict:
    entries = []
    files = {}
    for n in cfg.n:
        m = build_matrix(cfg.model, n)
        eig = eigensystem(m)
        name = f"spectrum_n{n}.csv"
        spectrum_to_csv(cfg.out / name, eig.values)
        files[f"n{n}"] = name
        entries.append({
            "n": n, "count": len(eig.values),
            "e_min": float(eig.values[0]), "e_max": float(eig.values[-1]),
            "trace": float(m.trace()),
            "doublets": len(eig.doublets)})
    return {"spectra": entries, "files": files}


def run_classify(cfg: RunConfig) -> dict:
    sym = _sym_of(cfg)
    fps = find_critical_points(sym)
    rows = [[fp.kind,
             fp.to_dict()["re_abar"] if fp.to_dict()["re_abar"] is not None
             else "inf",
             fp.to_dict()["im_abar"] if fp.to_dict()["im_abar"] is not None
             else "inf",
             fp.energy, fp.sigma] for fp in fps]
    _write_csv(cfg.out / "fixed_points.csv",
               ["kind", "re_abar", "im_abar", "energy", "sigma"], rows)
    return {"fixed_points": [fp.to_dict() for fp in fps],
            "critical_energies": [float(e) for e in critical_energies(sym)],
            "files": {"fixed_points": "fixed_points.csv"}}


def run_quantize(cfg: RunConfig) -> dict:
    sym = _sym_of(cfg)
    eps_c = _hp_energy(sym, cfg)
    w = float(cfg.get("window.eta_abs", 3.0))
    method = cfg.get("quantize.method", "auto")
    out_entries = []
    files = {}
    for n in cfg.n:
        asm = CriticalAssembly(sym, eps_c, n)
        zeros = assembly_spectrum(asm, (-w, w), method)
        name = f"critical_zeros_n{n}.csv"
        _write_csv(cfg.out / name, ["eps1", "eta", "eps"],
                   [[z.eps1, z.eta, z.eps] for z in zeros])
        files[f"n{n}"] = name
        out_entries.append({"n": n, "count": len(zeros),
                            "hp_count": len(asm.lins)})
    return {"eps_c": eps_c, "eta_window": w, "method": method,
            "results": out_entries, "files": files}


def run_bs(cfg: RunConfig) -> dict:
    sym = _sym_of(cfg)
    window = (float(cfg.raw["window.e_min"]), float(cfg.raw["window.e_max"]))
    entries = []
    files = {}
    for n in cfg.n:
        levels = bs_spectrum(sym, n, window)
        name = f"bs_levels_n{n}.csv"
        _write_csv(cfg.out / name, ["index", "energy"],
                   [[i, e] for i, e in enumerate(levels)])
        files[f"n{n}"] = name
        entries.append({"n": n, "count": len(levels)})
    return {"window": list(window), "results": entries, "files": files}


def _critical_index(values: np.ndarray, n: int, eps_c: float) -> int:
    return int(np.argmin(np.abs(values - eps_c)))


def run_matelem(cfg: RunConfig) -> dict:
    sym = _sym_of(cfg)
    n = cfg.n[0]
    A = ObservableSpec.from_name(cfg.get("matelem.observable", "sz"))
    A.check_hermitian()
    k_max = int(cfg.get("matelem.k_max", 6))
    region = cfg.get("matelem.region", "critical")
    eig = exact_spectrum(cfg.model, n)
    mat = observable_matrix(A, n)
    records: list[MatrixElementRecord] = []
    if region == "regular":
        eps = float(cfg.raw["matelem.eps"])
        m = int(np.argmin(np.abs(eig.values - eps)))
        for k in range(1, k_max + 1):
            omega = n * (eig.values[m + k] - eig.values[m])
            records.append(MatrixElementRecord(
                m=m, k=k, omega=float(omega),
                f_exact=exact_f_k(eig, A, m, k, mat),
                f_semiclassical=regular_f_k(sym, A, eig.values[m], k),
                method="regular_fourier"))
    else:
        eps_c = _hp_energy(sym, cfg)
        asm = CriticalAssembly(sym, eps_c, n)
        m = _critical_index(eig.values, n, eps_c)
        records.append(MatrixElementRecord(
            m=m, k=0, omega=0.0,
            f_exact=exact_f_k(eig, A, m, 0, mat),
            f_semiclassical=complex(critical_f0(A, asm.lins)),
            method="critical_hp_average"))
        for k in range(1, k_max + 1):
            omega = n * (eig.values[m + k] - eig.values[m])
            period = effective_period(float(omega), k)
            records.append(MatrixElementRecord(
                m=m, k=k, omega=float(omega),
                f_exact=exact_f_k(eig, A, m, k, mat),
                f_semiclassical=critical_f_k(asm, A, float(omega), period),
                method="critical_branch_fourier"))
    records_to_csv(cfg.out / "matrix_elements.csv", records)
    ratios = [abs(r.f_semiclassical) / abs(r.f_exact)
              for r in records if r.k != 0 and abs(r.f_exact) > 0]
    return {"n": n, "observable": A.label, "region": region,
            "state_index": records[0].m, "k_max": k_max,
            "count": len(records),
            "max_abs_ratio": float(max(max(ratios), 1 / min(ratios)))
            if ratios else None,
            "files": {"records": "matrix_elements.csv"}}


def run_husimi(cfg: RunConfig) -> dict:
    sym = _sym_of(cfg)
    n = cfg.n[0]
    eig = exact_spectrum(cfg.model, n)
    state = cfg.get("husimi.state", "critical")
    if state == "critical":
        idx = _critical_index(eig.values, n, _hp_energy(sym, cfg))
    else:
        idx = int(state)
        if not 0 <= idx <= n:
            raise ConfigError(f"husimi.state index {idx} out of range")
    radius = float(cfg.get("husimi.radius", default_hp_radius(n)))
    vec = eig.vectors[:, idx]
    rows = []
    payload_rows = []
    for i, hp in enumerate(hyperbolic_points(sym)):
        c = complex(hp.abar)
        w1 = husimi_weight(vec, c, radius, n)
        w_half = husimi_weight(vec, c, 0.5 * radius, n)
        w_twice = husimi_weight(vec, c, 2.0 * radius, n)
        rows.append([i, c.real, c.imag, radius, w1, w_half, w_twice])
        payload_rows.append({"hp": i, "re_abar": c.real, "im_abar": c.imag,
                             "weight": w1, "weight_half_radius": w_half,
                             "weight_double_radius": w_twice})
    _write_csv(cfg.out / "husimi_weights.csv",
               ["hp", "re_abar", "im_abar", "radius", "weight",
                "weight_half_radius", "weight_double_radius"], rows)
    return {"n": n, "state_index": idx, "energy": float(eig.values[idx]),
            "radius": radius, "weights": payload_rows,
            "files": {"weights": "husimi_weights.csv"}}


def compare_records(sym, model: ModelParams, n: int, eta_abs: float,
                    method: str = "auto", eps_c: float | None = None):
    """Match exact eigenvalues in the η window to predicted critical zeros."""
    if eps_c is None:
        eps_c = hyperbolic_points(sym)[0].energy
    asm = CriticalAssembly(sym, eps_c, n)
    lin = asm.lins[0]
    zeros = assembly_spectrum(asm, (-eta_abs - 0.5, eta_abs + 0.5), method)
    if not zeros:
        raise RuntimeError("no predicted zeros in the window")
    pred = np.array([z.eps for z in zeros])
    ev = exact_spectrum(model, n).values
    recs = []
    for i, e in enumerate(ev):
        eta = lin.eta(n * (e - eps_c))
        if abs(eta) > eta_abs:
            continue
        lo = ev[i - 1] if i > 0 else None
        hi = ev[i + 1] if i + 1 < len(ev) else None
        gaps = [g for g in (None if lo is None else e - lo,
                            None if hi is None else hi - e) if g]
        spacing = float(np.mean(gaps))
        j = int(np.argmin(np.abs(pred - e)))
        recs.append({"eps_exact": float(e), "eps_pred": float(pred[j]),
                     "eta": float(eta),
                     "residual": float(pred[j] - e),
                     "local_spacing": spacing,
                     "residual_over_spacing":
                         float(abs(pred[j] - e) / spacing)})
    recs.sort(key=lambda r: r["eps_exact"])
    return recs, asm


def run_compare(cfg: RunConfig) -> dict:
    sym = _sym_of(cfg)
    eps_c = _hp_energy(sym, cfg)
    eta_abs = float(cfg.get("window.eta_abs", 2.0))
    method = cfg.get("quantize.method", "auto")
    results = []
    files = {}
    for n in cfg.n:
        recs, _ = compare_records(sym, cfg.model, n, eta_abs, method, eps_c)
        name = f"compare_n{n}.csv"
        _write_csv(cfg.out / name,
                   ["eps_exact", "eps_pred", "eta", "residual",
                    "local_spacing", "residual_over_spacing"],
                   [[r["eps_exact"], r["eps_pred"], r["eta"], r["residual"],
                     r["local_spacing"], r["residual_over_spacing"]]
                    for r in recs])
        files[f"n{n}"] = name
        rel = [r["residual_over_spacing"] for r in recs]
        results.append({
            "n": n, "records": recs,
            "summary": {"count": len(recs),
                        "max_residual_over_spacing": float(max(rel)),
                        "mean_residual_over_spacing": float(np.mean(rel))}})
    return {"eps_c": eps_c, "eta_window": eta_abs, "method": method,
            "results": results, "files": files}


# ----------------------------------------------------------------------
# figure reproduction
# ----------------------------------------------------------------------

_HOMO = ModelParams(1.0, 4.0, 0.25, 5.0)
_HETERO = ModelParams(1.0, 5.0, 2.0, 6.0)


def _fig2_bundle(out: Path, params: ModelParams, tag: str,
                 n_spec: int = 500, n_zeros: int = 120,
                 eta_abs: float = 2.5) -> dict:
    sym = symbol_of(hamiltonian_operator(params))
    eps_c = hyperbolic_points(sym)[0].energy
    asm = CriticalAssembly(sym, eps_c, n_spec)
    lin = asm.lins[0]
    slope = (1.0 / (4 * lin.rho ** 2 * lin.tau2)).real
    files = {}

    # panel left: the determinant curve over eta plus exact-level ticks
    etas = np.linspace(-eta_abs, eta_abs, 1601)
    if len(asm.lins) == 1:
        f = closed_form_function(asm)
        dvals = np.array([f((eta - lin.eta(0.0)) / slope) for eta in etas])
        _write_csv(out / f"{tag}_det_curve.csv", ["eta", "d"],
                   [[e, d] for e, d in zip(etas, dvals)])
    else:
        dvals = np.array([abs(asm.determinant((eta - lin.eta(0.0)) / slope))
                          for eta in etas])
        _write_csv(out / f"{tag}_det_curve.csv", ["eta", "abs_d"],
                   [[e, d] for e, d in zip(etas, dvals)])
    files["det_curve"] = f"{tag}_det_curve.csv"

    eig = exact_spectrum(params, n_spec)
    ticks = [[float(lin.eta(n_spec * (e - eps_c))), float(e)]
             for e in eig.values
             if abs(lin.eta(n_spec * (e - eps_c))) <= eta_abs]
    _write_csv(out / f"{tag}_exact_ticks.csv", ["eta", "eps"], ticks)
    files["exact_ticks"] = f"{tag}_exact_ticks.csv"

    # panel right: separatrix projection and wavefunction zeros at small n
    rows = []
    for i, br in enumerate(level_set_branches(sym, eps_c)):
        rows += [[i, a.real, a.imag] for a in br.abar]
    _write_csv(out / f"{tag}_separatrix.csv",
               ["branch", "re_abar", "im_abar"], rows)
    files["separatrix"] = f"{tag}_separatrix.csv"

    eig_small = exact_spectrum(params, n_zeros)
    idx = _critical_index(eig_small.values, n_zeros, eps_c)
    roots = wavefunction_zeros(eig_small.vectors[:, idx], n_zeros)
    _write_csv(out / f"{tag}_zeros.csv", ["re_abar", "im_abar", "residual"],
               [[r.real, r.imag, s]
                for r, s in zip(roots.roots, roots.residuals)])
    files["zeros"] = f"{tag}_zeros.csv"
    return {"figure": tag, "eps_c": float(eps_c), "n_spectrum": n_spec,
            "n_zeros": n_zeros, "zero_count": len(roots.roots),
            "files": files}


def _fig3_bundle(out: Path, ns=(1000, 2000), k_max: int = 6) -> dict:
    sym = symbol_of(hamiltonian_operator(_HOMO))
    eps_c = hyperbolic_points(sym)[0].energy
    A = ObservableSpec.from_name("sz")
    files = {}
    summaries = []
    for n in ns:
        eig = exact_spectrum(_HOMO, n)
        mat = observable_matrix(A, n)
        asm = CriticalAssembly(sym, eps_c, n)
        m = _critical_index(eig.values, n, eps_c)
        rows = []
        for k in range(1, k_max + 1):
            omega = float(n * (eig.values[m + k] - eig.values[m]))
            fe = exact_f_k(eig, A, m, k, mat)
            fs = critical_f_k(asm, A, omega, effective_period(omega, k))
            rows.append([k, omega, abs(fe), abs(fs)])
        name = f"fig3_fk_n{n}.csv"
        _write_csv(out / name, ["k", "omega", "abs_f_exact", "abs_f_sc"],
                   rows)
        files[f"n{n}"] = name
        summaries.append({"n": n, "state_index": m,
                          "abs_f_exact": [r[2] for r in rows],
                          "abs_f_sc": [r[3] for r in rows]})
    return {"figure": "fig3", "observable": "sz", "k_max": k_max,
            "results": summaries, "files": files}


def reproduce_figure(which: str, out_dir) -> dict:
    """Emit the plot-ready data bundle for one of the pinned figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if which == "fig2_homo":
        payload = _fig2_bundle(out, _HOMO, "fig2_homo")
    elif which == "fig2_hetero":
        payload = _fig2_bundle(out, _HETERO, "fig2_hetero")
    elif which == "fig3":
        payload = _fig3_bundle(out)
    else:
        raise ConfigError(f"unknown figure {which!r}")
    return payload


def run_figure(cfg: RunConfig) -> dict:
    return reproduce_figure(cfg.raw["figure.which"], cfg.out)


# ----------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------

_RUNNERS = {"spectrum": run_spectrum, "classify": run_classify,
            "quantize": run_quantize, "bs": run_bs, "matelem": run_matelem,
            "husimi": run_husimi, "compare": run_compare,
            "figure": run_figure}


def run(cfg: RunConfig) -> Path:
    """Execute a validated config; returns the path of the JSON report."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    payload = _RUNNERS[cfg.task](cfg)
    return write_report(cfg, f"{cfg.task}_report.json", payload)


def _error_json(kind: str, message: str) -> str:
    return json.dumps({"schema": "spinsc/error/v1",
                       "error": {"type": kind, "message": message}},
                      sort_keys=True)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="spinsc",
        description="semiclassical spin spectra near critical energies")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", help="flat dotted-key or JSON config file")
    ap.add_argument("--out", help="output directory (overrides config)")
    ap.add_argument("--n", type=int, help="single n (overrides config)")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="key=value", help="override a config key")
    args = ap.parse_args(argv)
    try:
        flat: dict = {}
        if args.config:
            flat = parse_config_text(Path(args.config).read_text())
        flat["task"] = args.task
        if args.n is not None:
            flat["n"] = args.n
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, val = item.split("=", 1)
            flat[key.strip()] = _parse_value(val.strip())
        cfg = RunConfig.from_flat(flat, out_dir=args.out)
        report = run(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(_error_json("config", str(exc)), file=sys.stderr)
        return 2
    except Exception as exc:           # task failure: propagated diagnostic
        print(_error_json(type(exc).__name__, str(exc)), file=sys.stderr)
        return 1
    print(str(report))
    return 0


if __name__ == "__main__":             # pragma: no cover
    sys.exit(main())
