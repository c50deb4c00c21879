"""Command-line front end.

Every command reads one JSON config (``--config``) with flag overrides,
writes its reports into the output directory together with
``manifest.json``, and can be rerun from that manifest alone::

    gfi importance --data d.csv --groups g.json --method gpfi,logo --out run1
    gfi rerun run1/manifest.json --out run2

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import importlib
import importlib.util
import io
import json
import os
import platform
import sys
from pathlib import Path
from typing import Literal

import numba
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .cfep import cfep_from_spca, compute_cfep, fit_trend, render_cfep_svg, replaced_mean_predictions
from .core import (ContractError, DataError, Dataset, FixedLearner, GroupSpec, NumericError,
                   ResamplingPlan, derive_seed, make_splits)
from .dimred import Kernel, sparse_spca
from .learners import make_learner
from .permutation import PERM_METHODS, PermConfig, perm_importance_resampled, write_reports
from .refit import REFIT_METHODS, RefitConfig, RefitEvaluator, refit_importance
from .sequential import (SequentialConfig, aggregate_alluvial, flows_to_csv, render_alluvial_svg,
                         sequential_select)
from .shapley import RefitValueFunction, grouped_shapley, gsi_resampled
from .simgen import SCENARIOS, simulate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("importance", "sequential", "cfep", "simulate")
METHODS = ("gpfi", "gopfi", "logo", "logi", "gsi")
SEED_ENV = "GFI_SEED"
#: keys that change where or how fast a run happens but not what it computes
NON_RESULT_KEYS = ("out", "threads", "svg")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# configuration


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LearnerConfig(_Strict):
    """``kind="hook"`` loads ``hook="module:attr"`` or ``hook="file.py:attr"``.

    The attribute may be a learner (has ``fit``), a fitted model (has
    ``predict``) or a zero-argument factory returning either.
    """

    kind: Literal["forest", "linear", "null", "hook"] = "forest"
    hook: str | None = None
    n_trees: int = Field(300, ge=1)
    max_depth: int | None = Field(None, ge=1)
    min_leaf: int = Field(5, ge=1)
    feature_fraction: float = Field(1 / 3, gt=0, le=1)
    bootstrap: bool = True
    max_bins: int = Field(256, ge=2, le=256)
    ridge: float = Field(0.0, ge=0)

    @field_validator("hook")
    @classmethod
    def _hook_form(cls, v):
        if v is not None:
            target, sep, attr = v.rpartition(":")
            if not sep or not target or not attr:
                raise ValueError("hook must look like 'module:attr' or 'path/file.py:attr'")
            if target.endswith(".py") and not Path(target).is_file():
                raise ValueError(f"hook file {target!r} does not exist")
        return v


class PlanConfig(_Strict):
    kind: Literal["kfold", "subsampling", "bootstrap"] = "kfold"
    k: int = Field(10, ge=1)
    train_fraction: float = Field(0.8, gt=0, lt=1)


class PermSettings(_Strict):
    m: int = Field(50, ge=1)
    normalize: bool = False


class ShapleySettings(_Strict):
    mode: Literal["exact", "sampled"] = "exact"
    M: int = Field(1000, ge=1)
    value_function: Literal["perm", "refit"] = "perm"
    features: bool = True


class SequentialSettings(_Strict):
    delta: float = Field(0.001, gt=0)
    outer_repetitions: int = Field(100, ge=1)
    outer_train_fraction: float = Field(0.8, gt=0, lt=1)
    inner_k: int = Field(10, ge=2)
    min_count: int = Field(1, ge=1)


class DimredSettings(_Strict):
    kernel: Literal["rbf", "linear", "identity"] = "rbf"
    bandwidth: float | None = Field(None, gt=0)
    r: int = Field(1, ge=1)
    c: float | Literal["cv"] = "cv"
    candidates: list[float] | None = None
    standardize: bool = True

    @field_validator("c")
    @classmethod
    def _c_floor(cls, v):
        if v != "cv" and not v >= 1:
            raise ValueError("the l1 budget c must be >= 1 (or 'cv')")
        return v


class CfepSettings(_Strict):
    """``loadings`` (feature name -> weight) skips the sparse decomposition and
    projects raw feature values with the given weights."""

    group: str | None = None
    degree: Literal[1, 2] = 1
    cap: int = Field(2000, ge=1)
    grid_size: int = Field(50, ge=2)
    loadings: dict[str, float] | None = None


class SimulateSettings(_Strict):
    scenario: str | None = None
    n: int | None = Field(None, ge=2)


class RunConfig(_Strict):
    data: Path | None = None
    target: str = "y"
    groups: Path | None = None
    methods: list[Literal["gpfi", "gopfi", "logo", "logi", "gsi"]] = ["gpfi"]
    loss: Literal["mse", "mae"] = "mse"
    learner: LearnerConfig = LearnerConfig()
    plan: PlanConfig = PlanConfig()
    perm: PermSettings = PermSettings()
    shapley: ShapleySettings = ShapleySettings()
    sequential: SequentialSettings = SequentialSettings()
    dimred: DimredSettings = DimredSettings()
    cfep: CfepSettings = CfepSettings()
    simulate: SimulateSettings = SimulateSettings()
    out: Path = Path("gfi-out")
    svg: Path | None = None
    seed: int = Field(0, ge=0)
    threads: int | None = Field(None, ge=1)

    @field_validator("data", "groups")
    @classmethod
    def _exists(cls, v):
        if v is not None:
            if not v.is_file():
                raise ValueError(f"file {str(v)!r} does not exist")
            v = v.resolve()
        return v

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        if not v:
            raise ValueError("at least one method is required")
        return list(dict.fromkeys(v))

    def result_view(self) -> dict:
        obj = self.model_dump(mode="json")
        for k in NON_RESULT_KEYS:
            obj.pop(k, None)
        return obj

    def config_hash(self) -> str:
        blob = json.dumps(self.result_view(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def n_jobs(self) -> int:
        return self.threads or os.cpu_count() or 1


def _read_config_file(path: Path) -> tuple[dict, str | None]:
    """Config dict from a plain config file or from a run manifest."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "config_hash" in obj and "config" in obj:
        return dict(obj["config"]), obj.get("command")
    return obj, None


def _set(obj: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        obj = obj.setdefault(k, {})
    obj[keys[-1]] = value


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    """Defaults < config file < GFI_SEED < flags."""
    environ = os.environ if environ is None else environ
    raw: dict = {}
    if getattr(args, "config", None):
        raw, _ = _read_config_file(args.config)
    if SEED_ENV in environ and environ[SEED_ENV] != "":
        try:
            raw["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    flags = {
        "data": args.data, "target": args.target, "groups": args.groups, "out": args.out,
        "seed": args.seed, "threads": args.threads, "svg": args.svg,
    }
    for k, v in flags.items():
        if v is not None:
            raw[k] = v
    if args.method is not None:
        raw["methods"] = [m.strip() for m in args.method.split(",") if m.strip()]
    for dotted in ("simulate.scenario", "simulate.n", "cfep.group"):
        v = getattr(args, dotted.replace(".", "_"), None)
        if v is not None:
            _set(raw, dotted, v)
    return RunConfig.model_validate(raw)


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        lines.append(f"  {loc}: {err['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


# ---------------------------------------------------------------------------
# shared plumbing


def versions() -> dict:
    return {"gfi": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _load_hook(spec: str):
    target, _, attr = spec.rpartition(":")
    try:
        if target.endswith(".py"):
            mod_spec = importlib.util.spec_from_file_location(Path(target).stem, target)
            module = importlib.util.module_from_spec(mod_spec)
            mod_spec.loader.exec_module(module)
        else:
            module = importlib.import_module(target)
        obj = getattr(module, attr)
    except (ImportError, AttributeError, FileNotFoundError) as exc:
        raise ConfigError(f"cannot load model hook {spec!r}: {exc}") from None
    if isinstance(obj, type) or (not hasattr(obj, "fit") and not hasattr(obj, "predict") and callable(obj)):
        obj = obj()
    if hasattr(obj, "fit"):
        return obj
    if hasattr(obj, "predict"):
        return FixedLearner(obj, name=f"hook:{spec}")
    raise ConfigError(f"model hook {spec!r} is neither a learner nor a model")


def build_learner(cfg: LearnerConfig):
    if cfg.kind == "hook":
        if cfg.hook is None:
            raise ConfigError("learner.kind 'hook' needs learner.hook")
        return _load_hook(cfg.hook)
    if cfg.kind == "null":
        return make_learner({"kind": "null"})
    if cfg.kind == "linear":
        return make_learner({"kind": "linear", "ridge": cfg.ridge})
    return make_learner({"kind": "forest", "n_trees": cfg.n_trees, "max_depth": cfg.max_depth,
                         "min_leaf": cfg.min_leaf, "feature_fraction": cfg.feature_fraction,
                         "bootstrap": cfg.bootstrap, "max_bins": cfg.max_bins})


def build_plan(cfg: RunConfig) -> ResamplingPlan:
    p = cfg.plan
    if p.kind == "kfold":
        return ResamplingPlan.kfold(p.k, cfg.seed)
    if p.kind == "subsampling":
        return ResamplingPlan.subsampling(p.k, p.train_fraction, cfg.seed)
    return ResamplingPlan.bootstrap(p.k, cfg.seed)


def load_inputs(cfg: RunConfig) -> tuple[Dataset, GroupSpec]:
    if cfg.data is None:
        raise ConfigError("this command needs a data file (--data)")
    data = Dataset.from_csv(cfg.data, cfg.target)
    if cfg.groups is None:
        groups = GroupSpec.singletons(range(data.p), data.feature_names)
    else:
        groups = GroupSpec.from_json(cfg.groups, data.feature_names)
    return data, groups


class Writer:
    """Collects output files so the manifest can list them."""

    def __init__(self, out: Path, config_hash: str):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.files: list[str] = []

    def path(self, name) -> Path:
        p = Path(name)
        if not p.is_absolute():
            p = self.out / p
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(str(p.relative_to(self.out)) if p.is_relative_to(self.out) else str(p))
        return p

    def text(self, name, content: str) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            fh.write(content)

    def json(self, name, obj) -> None:
        self.text(name, json.dumps(obj, indent=2) + "\n")

    def report_json(self, name, body) -> None:
        """JSON report stamped with the config hash."""
        self.json(name, {"config_hash": self.config_hash, "report": body})


def write_manifest(cfg: RunConfig, command: str, writer: Writer, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash(),
        "versions": versions(),
        "outputs": sorted(writer.files),
    }
    if extra:
        manifest.update(extra)
    with open(writer.out / "manifest.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_importance(cfg: RunConfig) -> dict:
    data, groups = load_inputs(cfg)
    learner = build_learner(cfg.learner)
    plan = build_plan(cfg)
    splits = make_splits(plan, data.n)
    perm_cfg = PermConfig(m=cfg.perm.m, seed=cfg.seed, normalize=cfg.perm.normalize)
    w = Writer(cfg.out, cfg.config_hash())
    reports = []
    perm_methods = [m for m in cfg.methods if m in PERM_METHODS]
    refit_methods = [m for m in cfg.methods if m in REFIT_METHODS]
    evaluator = None
    if perm_methods:
        res = perm_importance_resampled(learner, data, groups, plan, perm_cfg, cfg.loss,
                                        perm_methods, splits=splits, n_jobs=cfg.n_jobs)
        reports += [res[m] for m in perm_methods]
    if refit_methods or ("gsi" in cfg.methods and cfg.shapley.value_function == "refit"):
        evaluator = RefitEvaluator(RefitConfig(plan, learner, cfg.loss), data, splits, n_jobs=cfg.n_jobs)
    if refit_methods:
        res = refit_importance(RefitConfig(plan, learner, cfg.loss), data, groups, refit_methods, evaluator)
        reports += [res[m] for m in refit_methods]
    if reports:
        order = {m: i for i, m in enumerate(cfg.methods)}
        reports.sort(key=lambda r: order[r.method])
        write_reports(reports, csv_path=w.path("importance.csv"))
        w.report_json("importance.json", [r.to_json_obj() for r in reports])
    if "gsi" in cfg.methods:
        sh = cfg.shapley
        exact = sh.mode == "exact"
        if sh.value_function == "perm":
            rep, _ = gsi_resampled(learner, data, groups, plan, perm_cfg, cfg.loss,
                                   with_features=sh.features, splits=splits, exact=exact, M=sh.M,
                                   n_jobs=cfg.n_jobs)
        else:
            rep = grouped_shapley(RefitValueFunction(evaluator), groups, data.feature_names,
                                  with_features=sh.features, exact=exact, M=sh.M,
                                  seed=derive_seed(cfg.seed, "orderings"), n_jobs=cfg.n_jobs)
            rep.meta = {"value_function": "refit", "loss": cfg.loss}
        buf = io.StringIO()
        cw = csv.writer(buf, lineterminator="\n")
        cw.writerow(["group", "phi", "stderr", "remainder"])
        for g in rep.phi:
            rem = repr(rep.remainder(g)) if rep.features is not None else ""
            cw.writerow([g, repr(rep.phi[g]), repr(rep.stderr[g]), rem])
        w.text("gsi.csv", buf.getvalue())
        w.report_json("gsi.json", rep.to_json_obj())
    write_manifest(cfg, "importance", w, {"data_checksum": data.checksum()})
    return {"outputs": w.files}


def cmd_sequential(cfg: RunConfig) -> dict:
    data, groups = load_inputs(cfg)
    s = cfg.sequential
    try:
        scfg = SequentialConfig(delta=s.delta, outer_repetitions=s.outer_repetitions,
                                outer_train_fraction=s.outer_train_fraction, inner_k=s.inner_k,
                                seed=cfg.seed, learner=build_learner(cfg.learner), loss=cfg.loss)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    result = sequential_select(scfg, data, groups, n_jobs=cfg.n_jobs)
    rows = aggregate_alluvial(result, min_count=s.min_count)
    w = Writer(cfg.out, cfg.config_hash())
    w.text("flows.csv", flows_to_csv(rows))
    render_alluvial_svg(rows, w.path(cfg.svg or "alluvial.svg"), total=len(result.splits))
    w.report_json("sequential.json", {
        "delta": result.delta, "meta": result.meta,
        "splits": [{"null_ge": sp.null_ge,
                    "steps": [{"group": st.group, "selected": list(st.selected), "logi": st.logi,
                               "ge": st.ge, "inner_ge": st.inner_ge} for st in sp.steps]}
                   for sp in result.splits]})
    write_manifest(cfg, "sequential", w, {"data_checksum": data.checksum()})
    return {"outputs": w.files, "rows": rows}


def _cfep_group(cfg: RunConfig, data: Dataset, groups: GroupSpec) -> tuple[str, list[int]]:
    name = cfg.cfep.group
    if name is None:
        if cfg.groups is not None:
            raise ConfigError("cfep.group must name one of the groups in the group file")
        return "all", list(range(data.p))
    if name == "all" and cfg.groups is None:
        return "all", list(range(data.p))
    if name not in groups.names:
        raise ConfigError(f"cfep.group {name!r} is not a known group")
    return name, sorted(groups[name])


def cmd_cfep(cfg: RunConfig) -> dict:
    data, groups = load_inputs(cfg)
    name, G = _cfep_group(cfg, data, groups)
    model = build_learner(cfg.learner).fit(data, seed=derive_seed(cfg.seed, "fit"))
    cc, dr = cfg.cfep, cfg.dimred
    w = Writer(cfg.out, cfg.config_hash())
    svg_dir = Path(cfg.svg) if cfg.svg is not None else Path(".")
    members = [data.feature_names[j] for j in G]
    if cc.loadings is not None:
        unknown = [f for f in cc.loadings if f not in members]
        if unknown:
            raise ConfigError(f"cfep.loadings names features outside group {name!r}: {unknown}")
        weights = np.array([cc.loadings.get(f, 0.0) for f in members])
        y_rep = replaced_mean_predictions(model, data, G, cap=cc.cap, seed=cfg.seed)
        curves = [compute_cfep(model, data, G, weights, group=name, component=1, cap=cc.cap,
                               seed=cfg.seed, y_rep=y_rep)]
        lines = ["component,feature_name,loading"]
        lines += [f"1,{f},{float(v)!r}" for f, v in zip(members, weights) if v != 0]
        w.text("loadings.csv", "\n".join(lines) + "\n")
        extra = {"projection": "raw"}
    else:
        kernel = Kernel(dr.kernel, dr.bandwidth)
        spca = sparse_spca(data.features[:, G], data.target, kernel, r=dr.r, c=dr.c,
                           candidates=dr.candidates, seed=cfg.seed, do_standardize=dr.standardize,
                           feature_names=members)
        curves = cfep_from_spca(model, data, G, spca, group=name, cap=cc.cap, seed=cfg.seed)
        w.text("loadings.csv", spca.loadings_csv())
        extra = {"projection": "standardized" if dr.standardize else "raw", "c": spca.c,
                 "hsic": spca.hsic.tolist(), "converged": spca.converged, "warnings": spca.warnings}
    for cur in curves:
        k = cur.component
        w.text(f"cfep_{name}_{k}.csv", cur.to_csv())
        trend = fit_trend(cur, cc.degree, cc.grid_size) if np.ptp(cur.x) > 0 else None
        w.report_json(f"trend_{name}_{k}.json", trend.to_json_obj() if trend is not None else None)
        render_cfep_svg(cur, trend, w.path(svg_dir / f"cfep_{name}_{k}.svg"))
    w.report_json("cfep.json", {"group": name, "members": members, **extra})
    write_manifest(cfg, "cfep", w, {"data_checksum": data.checksum()})
    return {"outputs": w.files, "curves": curves}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def cmd_simulate(cfg: RunConfig) -> dict:
    sc = cfg.simulate
    if sc.scenario is None:
        raise ConfigError(f"simulate needs a scenario (--scenario); choose from {', '.join(SCENARIOS)}")
    if sc.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {sc.scenario!r}; choose from {', '.join(SCENARIOS)}")
    sim = simulate(sc.scenario, sc.n, cfg.seed)
    w = Writer(cfg.out, cfg.config_hash())
    sim.data.to_csv(w.path("data.csv"), target=cfg.target)
    w.json("groups.json", sim.groups.to_json_obj(sim.data.feature_names))
    w.json("truth.json", {"scenario": sc.scenario, "n": sim.data.n, "seed": cfg.seed,
                          **{k: _jsonable(v) for k, v in sim.truth.items()}})
    write_manifest(cfg, "simulate", w, {"data_checksum": sim.data.checksum()})
    return {"outputs": w.files, "simulation": sim}


DISPATCH = {"importance": cmd_importance, "sequential": cmd_sequential, "cfep": cmd_cfep,
            "simulate": cmd_simulate}


# ---------------------------------------------------------------------------
# entry point


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config or a manifest.json from an earlier run")
    p.add_argument("--data", help="CSV with a header row")
    p.add_argument("--target", help="name of the target column (default y)")
    p.add_argument("--groups", help='group file: {"groups": {"name": ["feature", ...]}}')
    p.add_argument("--method", help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides GFI_SEED and the config)")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--svg", help="SVG output path (sequential) or directory (cfep)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfi", description="Grouped feature importance and effect plots.")
    parser.add_argument("--version", action="version", version=f"gfi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("importance", "grouped importance reports"),
                        ("sequential", "sequential group selection and alluvial flows"),
                        ("cfep", "combined features effect plots"),
                        ("simulate", "write a synthetic dataset")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "simulate":
            p.add_argument("--scenario", dest="simulate_scenario", help=", ".join(SCENARIOS))
            p.add_argument("--n", dest="simulate_n", type=int, help="number of rows")
        if name == "cfep":
            p.add_argument("--group", dest="cfep_group", help="group to analyse")
    p = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", help="output directory (default: the manifest's)")
    p.add_argument("--threads", type=int)
    return parser


def _rerun_namespace(args) -> argparse.Namespace:
    _, command = _read_config_file(args.manifest)
    if command not in COMMANDS:
        raise ConfigError(f"{args.manifest} is not a run manifest")
    ns = argparse.Namespace(command=command, config=args.manifest, out=args.out, threads=args.threads)
    for k in ("data", "target", "groups", "method", "seed", "svg", "simulate_scenario", "simulate_n",
              "cfep_group"):
        setattr(ns, k, None)
    return ns


def run(argv=None, environ=None) -> int:
    """Parse ``argv``, run the command and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "rerun":
            args = _rerun_namespace(args)
        cfg = resolve_config(args, environ)
        DISPATCH[args.command](cfg)
    except ValidationError as exc:
        print(f"gfi: {_format_validation(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ContractError) as exc:
        print(f"gfi: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"gfi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"gfi: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
