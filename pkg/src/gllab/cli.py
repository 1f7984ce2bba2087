"""Command line front end.

    gllab run CONFIG [--seed N] [--threads N] [--output DIR]
    gllab validate CONFIG
    gllab compare MANIFEST_A MANIFEST_B [--rtol R] [--atol A]

Outputs go to ``$GLLAB_OUTPUT_ROOT/<output>`` (default root ``runs``; the
output name defaults to the config file stem).  Exit status: 0 success,
2 flagged (a stage did not converge or a check was inconclusive), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load

logger = logging.getLogger("gllab")

OUTPUT_ROOT_ENV = "GLLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


class Writer:
    """Writes data files and keeps the index for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[dict] = []

    def _register(self, path: Path, kind: str):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files.append({"path": path.name, "kind": kind, "sha256": digest})

    def csv(self, name: str, header: list[str], rows) -> Path:
        path = self.root / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        self._register(path, "csv")
        return path

    def json(self, name: str, obj) -> Path:
        path = self.root / name
        path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
        self._register(path, "json")
        return path


def _json_default(o):
    import numpy as np

    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return sorted(o) if isinstance(o, set) else list(o)
    raise TypeError(f"not serialisable: {type(o)}")


# ------------------------------------------------------------------ stages
class _Run:
    def __init__(self, cfg: RunConfig, writer: Writer):
        self.cfg = cfg
        self.w = writer
        self.times: dict[str, float] = {}
        self.scalars: dict = {}
        self.flags: list[str] = []
        self._cache: dict = {}

    def stage(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except ConfigError:
            raise
        except Exception as exc:  # re-raised with the stage name attached
            raise StageError(name, exc) from exc
        self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0
        return out

    # -- building blocks
    def setup(self):
        if "setup" in self._cache:
            return self._cache["setup"]
        from . import gauge
        from .domain import DomainSpec, build_domain

        def build():
            spec = DomainSpec.from_dict(self.cfg.domain)
            dom = build_domain(spec)
            fld = dict(self.cfg.field)
            profile = fld.pop("profile")
            f = gauge.make_field(dom, profile, **fld)
            return dom, f, gauge.external_potential(f, dom)

        dom, f, g = self.stage("domain", build)
        self.scalars.update({"n_omega": dom.n_omega, "h": dom.h,
                             "hole_fluxes": list(g.hole_fluxes)})
        self.w.json("domain.json", dom.to_manifest())
        self._cache["setup"] = (dom, f, g)
        return dom, f, g

    def spectrum(self):
        if "spectrum" in self._cache:
            return self._cache["spectrum"]
        from . import spectra

        dom, f, g = self.setup()
        sol = self.cfg.solver

        def solve():
            op = spectra.assemble(g, dom)
            return spectra.ground_state(op, sol.get("eigen_k", 4), sol.get("eigen_tol", 1e-11),
                                        seed=self.cfg.seed)

        sp_ = self.stage("eigen", solve)
        verdict = spectra.flux_criterion(g, f, dom)
        self.scalars.update({"lambda1": sp_.lambda1, "lambda2": sp_.lambda2, "gap": sp_.gap,
                             "simple": sp_.simple, "flux_criterion": verdict.positive,
                             "flux_reason": verdict.reason})
        if not sp_.simple:
            self.flags.append("eigen: near-degenerate lowest eigenvalue")
        self._cache["spectrum"] = sp_
        return sp_

    def coefficients(self, kappa):
        from . import bifurcation
        from .functional import GLParameters

        dom, f, g = self.setup()
        sp_ = self.spectrum()
        return self.stage("coefficients", bifurcation.coefficients, sp_, g,
                          GLParameters(max(sp_.lambda1, 1e-300), kappa))

    def kappa(self):
        par = self.cfg.parameters
        if "kappa" in par:
            return float(par["kappa"])
        return float(par["kappa_factor"]) * self.coefficients(1.0).kappa_c

    def lam(self):
        par = self.cfg.parameters
        if "lambda" in par:
            return float(par["lambda"])
        return float(par["lambda_factor"]) * self.spectrum().lambda1

    def field_rows(self, u):
        dom = self.setup()[0]
        pts = dom.cell_centers("omega")
        return [(x, y, z.real, z.imag, abs(z)) for (x, y), z in zip(pts.tolist(), u.tolist())]

    def minimize_opts(self):
        from .functional import MinimizeOptions

        sol = self.cfg.solver
        return MinimizeOptions(tol=sol.get("tol", 1e-8), maxiter=sol.get("maxiter", 20_000))

    # -- pipelines
    def p_eigen(self):
        sp_ = self.spectrum()
        self.w.json("spectrum.json", sp_.to_dict())
        self.w.csv("u1.csv", ["x", "y", "re", "im", "abs"], self.field_rows(sp_.u1))

    def p_minimize(self):
        from . import functional as F

        dom, f, g = self.setup()
        sp_ = self.spectrum()
        p = F.GLParameters(self.lam(), self.kappa())
        results = self.stage("minimize", F.multi_start, p, g, dom, sp_.u1,
                             self.minimize_opts(), self.cfg.seed)
        best, rep = results[0]
        self.scalars.update({"lambda": p.lam, "kappa": p.kappa, "energy": rep.energy,
                             "max_modulus": rep.max_modulus, "best_start": rep.start,
                             "converged": rep.converged})
        if not all(r.converged for _, r in results):
            self.flags.append("minimize: some starts did not converge")
        self.w.json("solutions.json", [r.to_dict() for _, r in results])
        self.w.csv("u.csv", ["x", "y", "re", "im", "abs"], self.field_rows(best.u))
        self.w.csv("energy_trace.csv", ["iteration", "energy"], enumerate(rep.energy_trace))
        return best, rep, p

    def p_check(self):
        import numpy as np

        from . import calculus
        from . import functional as F

        best, rep, p = self.p_minimize()
        dom, f, g = self.setup()
        normal = F.GLState.normal(g, dom)
        screen = F.GLState(np.ones(dom.n_omega, complex), -g.A_e, g, dom)
        e_normal = F.energy(normal, p)
        e_screen = F.energy(screen, p)
        expected = -0.5 * p.lam * dom.n_omega * dom.cell_area + \
            p.field_weight * float(np.sum(g.H**2)) * dom.cell_area
        # gradient check along a fixed random direction
        rng = np.random.default_rng(self.cfg.seed)
        du = rng.standard_normal(dom.n_omega) + 1j * rng.standard_normal(dom.n_omega)
        da = rng.standard_normal(dom.n_edges)
        st = F.GLState(best.u + 0.1 * du, best.a, g, dom)
        t = 1e-5
        fd = (F.energy(st.copy(u=st.u + t * du, a=st.a + t * da), p)
              - F.energy(st.copy(u=st.u - t * du, a=st.a - t * da), p)) / (2 * t)
        gu, ga = F.gradient(st, p)
        an = calculus.inner(dom, gu, du).real + dom.cell_area * float(ga @ da)
        checks = {
            "normal_energy": e_normal,
            "screening_energy": e_screen,
            "screening_energy_expected": expected,
            "gradient_fd_relerr": abs(fd - an) / max(abs(an), 1e-300),
            "bounds": {b.name: {"value": b.value, "bound": b.bound, "passed": b.passed}
                       for b in rep.bound_checks},
            "hole_field_constants": rep.hole_field_constants,
        }
        self.scalars.update({"normal_energy": e_normal, "screening_energy": e_screen,
                             "gradient_fd_relerr": checks["gradient_fd_relerr"]})
        if any(b.passed is False for b in rep.bound_checks):
            self.flags.append("check: a bound check failed")
        self.w.json("checks.json", checks)

    def p_branch(self):
        from . import bifurcation as B
        from .functional import GLParameters

        dom, f, g = self.setup()
        sp_ = self.spectrum()
        kappa = self.kappa()
        p = GLParameters(sp_.lambda1, kappa)
        co = self.coefficients(kappa)
        alphas = self.cfg.parameters.get("alphas", [0.05, 0.1, 0.2])
        br = self.stage("branch", B.trace_branch, sp_, g, p, alphas, co,
                        self.cfg.solver.get("newton_tol", 1e-11))
        stab = []
        for s in br.samples:
            if s.alpha == 0 or not s.converged:
                continue
            v = self.stage("stability", B.strict_stability, s.state, GLParameters(s.lam, kappa),
                           lambda1=sp_.lambda1)
            stab.append({"alpha": s.alpha, **v.to_dict()})
        self.scalars.update({k: v for k, v in co.to_dict().items() if k != "lambda1"})
        self.scalars.update({"fit_c": br.fit_c, "truncated": br.truncated})
        if br.truncated:
            self.flags.append("branch: Newton failed, branch truncated")
        self.w.json("coefficients.json", co.to_dict())
        self.w.json("stability.json", stab)
        self.w.csv("branch.csv", ["alpha", "lambda", "energy", "predicted_energy",
                                  "newton_residual", "el_residual"],
                   [(s.alpha, s.lam, s.energy, B.branch_energy(co, s.alpha, p),
                     s.newton_residual, s.el_residual) for s in br.samples])
        return br

    def _reduced(self):
        from . import symmetry as S
        from .functional import GLParameters

        dom, f, g = self.setup()
        sp_ = self.spectrum()
        ph = self.stage("phase", S.half_flux_phase, g, dom)
        self.scalars["loop_defect"] = ph.loop_defect
        p = GLParameters(sp_.lambda1, self.kappa())
        alphas = self.cfg.parameters.get("alphas", [0.05, 0.1, 0.2])
        br = self.stage("reduced-branch", S.reduced_branch, sp_, g, ph, p, alphas)
        if br.truncated:
            self.flags.append("reduced-branch: Newton failed, branch truncated")
        return ph, br

    def p_reduced_branch(self):
        ph, br = self._reduced()
        self.scalars.update({"fit_c": br.fit_c, "c_kappa": br.meta["c_kappa"],
                             "I0": br.meta["I0"]})
        self.w.json("reduced_branch.json", br.to_dict())
        self.w.csv("reduced_branch.csv", ["alpha", "lambda", "energy", "newton_residual"],
                   [(s.alpha, s.lam, s.energy, s.newton_residual) for s in br.samples])

    def p_nodal(self):
        from . import symmetry as S

        dom = self.setup()[0]
        ph, br = self._reduced()
        eps_list = self.cfg.parameters.get("epsilons", [0.05])
        reports = []
        for s in br.samples:
            if s.alpha == 0:
                continue
            for eps in eps_list:
                r = self.stage("nodal", S.nodal_set, s.state.u, dom, eps, ph)
                reports.append({"alpha": s.alpha, **r.to_dict()})
                x0, y0 = dom.origin
                pts = [((i + 0.5) * dom.h + x0, (j + 0.5) * dom.h + y0) for i, j in r.zero_cells.tolist()]
                self.w.csv(f"zero_cells_a{s.alpha:g}_e{eps:g}.csv", ["x", "y"], pts)
        self.scalars["slits"] = [r["slits"] for r in reports]
        self.scalars["curve_components"] = [r["curve_components"] for r in reports]
        self.w.json("nodal.json", reports)

    def p_phase_diagram(self):
        from . import phasediagram as P

        dom, f, g = self.setup()
        sp_ = self.spectrum()
        kc = self.coefficients(1.0).kappa_c
        kappas = self.cfg.parameters["kappas"]
        sw = self.stage("phase-diagram", P.sweep, kappas, dom, g, sp_, kc,
                        self.cfg.solver.get("lambda_tol"), self.minimize_opts(), self.cfg.seed)
        self.scalars.update({"kappa_c": kc, "monotone": sw.monotone(), "bounded": sw.bounded(),
                             "saturation_kappa": sw.saturation_kappa(),
                             "field_ratio": P.field_ratio(dom, g),
                             "lambda_opt": [p.lambda_opt for p in sw.points]})
        if any(p.flagged for p in sw.points):
            self.flags.append("phase-diagram: inconsistent or unresolved brackets")
        rows = sw.rows()
        self.w.csv("phase_diagram.csv", list(rows[0]), [list(r.values()) for r in rows])
        self.w.json("phase_points.json", [p.to_dict() for p in sw.points])

    def p_convert(self):
        from . import phasediagram as P

        phys = P.PhysicalParameters(**self.cfg.physical)
        conv = self.stage("convert", P.scaling_convert, phys)
        self.scalars.update(conv.to_dict())
        self.w.json("conversion.json", conv.to_dict())


def run(cfg: RunConfig, output_dir: Path | None = None) -> dict:
    """Execute the configured pipeline and write its manifest."""
    if output_dir is None:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        name = cfg.output or (Path(cfg.source).stem if cfg.source else cfg.pipeline)
        output_dir = root / name
    writer = Writer(Path(output_dir))
    r = _Run(cfg, writer)
    t0 = time.perf_counter()
    getattr(r, "p_" + cfg.pipeline.replace("-", "_"))()
    manifest = {
        "artifact_version": __version__,
        "pipeline": cfg.pipeline,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "status": "flagged" if r.flags else "ok",
        "flags": r.flags,
        "scalars": r.scalars,
        "wall_time": {**r.times, "total": time.perf_counter() - t0},
        "files": writer.files,
    }
    (writer.root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return manifest


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            for i, x in enumerate(v):
                out[f"{key}[{i}]"] = x
        else:
            out[key] = v
    return out


def compare(manifest_a: dict, manifest_b: dict, rtol: float = 1e-12, atol: float = 0.0) -> dict:
    """Scalar-by-scalar differences; only entries outside tolerance are listed."""
    if manifest_a.get("pipeline") != manifest_b.get("pipeline"):
        raise ValueError(f"pipelines differ: {manifest_a.get('pipeline')} vs {manifest_b.get('pipeline')}")
    a = _flatten(manifest_a.get("scalars", {}))
    b = _flatten(manifest_b.get("scalars", {}))
    diffs = {}
    for k in sorted(set(a) | set(b)):
        if k not in a or k not in b:
            diffs[k] = {"a": a.get(k), "b": b.get(k), "note": "missing"}
            continue
        x, y = a[k], b[k]
        if isinstance(x, (int, float)) and isinstance(y, (int, float)) \
                and not isinstance(x, bool) and not isinstance(y, bool):
            if math.isnan(x) and math.isnan(y):
                continue
            d = abs(x - y)
            scale = max(abs(x), abs(y))
            if d > atol + rtol * scale:
                diffs[k] = {"a": x, "b": y, "abs": d, "rel": d / scale if scale else math.inf}
        elif x != y:
            diffs[k] = {"a": x, "b": y}
    return {"pipeline": manifest_a.get("pipeline"), "rtol": rtol, "atol": atol, "diffs": diffs}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gllab", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a configuration")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
    p_run.add_argument("--output", default=None, help="output directory (overrides root/name)")
    p_val = sub.add_parser("validate", help="check a configuration without running it")
    p_val.add_argument("config")
    p_cmp = sub.add_parser("compare", help="diff the scalars of two manifests")
    p_cmp.add_argument("a")
    p_cmp.add_argument("b")
    p_cmp.add_argument("--rtol", type=float, default=1e-12)
    p_cmp.add_argument("--atol", type=float, default=0.0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "validate":
            cfg = load(args.config)
            print(f"{args.config}: ok ({cfg.pipeline})")
            return EXIT_OK
        if args.command == "compare":
            ma = json.loads(Path(args.a).read_text())
            mb = json.loads(Path(args.b).read_text())
            rep = compare(ma, mb, args.rtol, args.atol)
            print(json.dumps(rep, indent=2, default=str))
            return EXIT_OK if not rep["diffs"] else EXIT_FLAGGED
        if args.threads is not None:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(args.threads)
        cfg = load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        manifest = run(cfg, Path(args.output) if args.output else None)
        print(json.dumps({"status": manifest["status"], "flags": manifest["flags"],
                          "scalars": manifest["scalars"]}, indent=2, default=_json_default))
        return EXIT_FLAGGED if manifest["flags"] else EXIT_OK
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
