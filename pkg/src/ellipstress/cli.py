"""Batch command line: ``ingest``, ``fit``, ``stress``, ``matrix``.

Settings are resolved as defaults < ``--config`` JSON file < environment
(``ELLIPSTRESS_<KEY>``, e.g. ``ELLIPSTRESS_Q=0.99``) < command-line flags.

Exit codes: 0 success, 2 input error, 3 numerical error, 4 some matrix
cells failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import re
import sys
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import fileio
from .conditioning import conditional_location
from .errors import EllipstressError, InputError, NumericalError
from .estimation import (
    ReturnPanel,
    condition_number,
    empirical_var_vector,
    fit_gaussian,
    fit_student_t,
    group_indices,
)
from .measures import (
    MEASURES,
    StressPolicy,
    StressSource,
    cross_measure_correlation,
    evaluate_pair,
    measure_matrix,
    one_vs_rest,
)
from .model import EllipticalModel, build_partition
from .sampler import regression_location
from .synthetic import bundled_paths

log = logging.getLogger("ellipstress")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
ENV_PREFIX = "ELLIPSTRESS_"


@dataclass
class RunConfig:
    prices: str | None = None
    sectors: str | None = None
    panel: str | None = None
    model: str | None = None
    out: str = "out"
    dist: str = "normal"
    nu: float | None = None
    q: float = 0.95
    stress_policy: str = "empirical-var"
    measures: list[str] = field(default_factory=lambda: ["L", "MI", "THETA"])
    seed: int = 42
    eq_l_form: str = "literal"
    workers: int = 1
    stressor: str | None = None
    stressed: str | None = None
    mc_draws: int = 0

    def validate(self) -> None:
        if not 0.0 < self.q < 1.0:
            raise InputError(f"q must lie in (0, 1), got {self.q}")
        if not self.measures:
            raise InputError("measures must not be empty")
        bad = [m for m in self.measures if m not in MEASURES]
        if bad:
            raise InputError(f"unknown measures {bad}; choose from {', '.join(MEASURES)}")
        if self.dist not in ("normal", "student-t"):
            raise InputError(f"dist must be 'normal' or 'student-t', got {self.dist!r}")
        if self.eq_l_form not in ("literal", "deviation"):
            raise InputError(f"eq_l_form must be 'literal' or 'deviation', got {self.eq_l_form!r}")
        if self.workers < 1:
            raise InputError("workers must be >= 1")

    @property
    def panel_path(self) -> str:
        return self.panel or os.path.join(self.out, "panel.csv")

    @property
    def model_path(self) -> str:
        return self.model or os.path.join(self.out, "model.json")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    if key == "measures":
        if isinstance(value, str):
            value = value.split(",")
        return [str(v).strip().upper() for v in value if str(v).strip()]
    if key == "dist":
        v = str(value).strip().lower().replace("_", "-")
        return {"t": "student-t", "studentt": "student-t", "gaussian": "normal"}.get(v, v)
    if key in ("q", "nu"):
        return float(value)
    if key in ("seed", "workers", "mc_draws"):
        return int(value)
    return str(value)


def load_config(path: str | None, overrides: dict[str, Any], environ: dict[str, str] | None = None) -> RunConfig:
    environ = dict(os.environ if environ is None else environ)
    values: dict[str, Any] = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot open config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path}:{exc.lineno}: {exc.msg}") from exc
        unknown = sorted(set(raw) - set(_FIELDS))
        if unknown:
            raise InputError(f"unknown config keys {unknown}")
        values.update(raw)
    for key in _FIELDS:
        env = environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            values[key] = env
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad configuration value: {exc}") from exc
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _load_panel(cfg: RunConfig) -> ReturnPanel:
    return fileio.read_panel_cache(cfg.panel_path)


def _stress_policy(cfg: RunConfig, panel: ReturnPanel | None, model: EllipticalModel) -> StressPolicy:
    raw = cfg.stress_policy.strip()
    name, _, arg = raw.partition(":")
    name = name.strip().lower()
    if name == "empirical-var":
        if panel is None:
            raise InputError("empirical-var stress needs the panel cache")
        if tuple(panel.tickers) != tuple(model.labels):
            raise InputError("panel tickers do not match the model labels")
        v = empirical_var_vector(panel, None, cfg.q)
        return StressPolicy(StressSource.EMPIRICAL_VAR, cfg.q, values=v)
    if name == "parametric-var":
        return StressPolicy(StressSource.PARAMETRIC_VAR, cfg.q)
    if name == "uniform":
        c = float(arg) if arg else 1.0
        return StressPolicy(StressSource.UNIFORM, cfg.q, c=c)
    if name == "explicit":
        if not arg:
            raise InputError("explicit stress needs a file: explicit:<path>")
        return StressPolicy(StressSource.EXPLICIT, cfg.q, values=_read_explicit(arg, model))
    raise InputError(f"unknown stress policy {raw!r}")


def _read_explicit(path: str, model: EllipticalModel) -> np.ndarray:
    """``ticker,stress`` CSV of loss magnitudes; unlisted tickers get 0."""
    rows = list(fileio._rows(path))
    if not rows or [h.strip().lower() for h in rows[0][1]] != ["ticker", "stress"]:
        raise fileio.ParseError("header must be 'ticker,stress'", path, 1)
    pos = {t: i for i, t in enumerate(model.labels)}
    v = np.zeros(model.p)
    for line, row in rows[1:]:
        if not row:
            continue
        if len(row) != 2 or row[0].strip() not in pos:
            raise fileio.ParseError(f"bad row {row!r}", path, line)
        try:
            v[pos[row[0].strip()]] = float(row[1])
        except ValueError:
            raise fileio.ParseError(f"bad number {row[1]!r}", path, line) from None
    return v


def _group_map(panel: ReturnPanel | None, model: EllipticalModel) -> dict[str, list[int]]:
    if panel is None or panel.groups is None:
        raise InputError("group map (groups.csv next to the panel cache) is required")
    if tuple(panel.tickers) != tuple(model.labels):
        raise InputError("panel tickers do not match the model labels")
    return group_indices(panel)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "group"


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig) -> dict:
    if not cfg.prices:
        raise InputError("ingest needs --prices (or --synthetic)")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        panel = fileio.load_panel_from_csv(cfg.prices, cfg.sectors)
        groups = group_indices(panel) if panel.groups is not None else None
    for w in caught:
        log.warning("%s", w.message)
    panel_text, groups_text = fileio.panel_cache_text(panel)
    summary = {
        "T": panel.T,
        "p": panel.p,
        "date_range": [panel.dates[0], panel.dates[-1]],
        "dropped_columns": list(panel.dropped),
        "groups": {g: len(ix) for g, ix in groups.items()} if groups else None,
        "n_groups": len(groups) if groups else 0,
        "warnings": [str(w.message) for w in caught],
    }
    files = {cfg.panel_path: panel_text, os.path.join(cfg.out, "ingest_summary.json"): fileio.dumps(summary) + "\n"}
    if groups_text:
        files[fileio.groups_path_for(cfg.panel_path)] = groups_text
    fileio.write_all(files)
    return summary


def cmd_fit(cfg: RunConfig) -> EllipticalModel:
    panel = _load_panel(cfg)
    if cfg.dist == "normal":
        model = fit_gaussian(panel)
    else:
        model = fit_student_t(panel, cfg.nu)
    cond = condition_number(model)
    log.info("fitted %s model on T=%d, p=%d; shape condition number %.4g", model.kind.name, panel.T, panel.p, cond)
    if cond > 1e8:
        log.warning("shape matrix is ill-conditioned (condition number %.3g)", cond)
    fitted_from = {
        "T": panel.T,
        "date_range": [panel.dates[0], panel.dates[-1]],
        "input_sha256": fileio.sha256_file(cfg.panel_path),
    }
    fileio.write_all({cfg.model_path: fileio.model_to_json(model, fitted_from)})
    return model


def _resolve_names(names: str, groups: dict[str, list[int]] | None, model: EllipticalModel) -> list[int]:
    """A group name, or a ``+``-joined list of group names / tickers."""
    idx: list[int] = []
    for tok in names.split("+"):
        tok = tok.strip()
        if groups is not None and tok in groups:
            idx.extend(groups[tok])
        else:
            idx.extend(model.index_of([tok]))
    return idx


def cmd_stress(cfg: RunConfig) -> dict:
    if not cfg.stressor or not cfg.stressed:
        raise InputError("stress needs --stressor and --stressed")
    model, _ = fileio.read_model(cfg.model_path)
    panel = _load_panel(cfg) if os.path.exists(cfg.panel_path) else None
    groups = group_indices(panel) if panel is not None and panel.groups is not None else None
    ix = _resolve_names(cfg.stressor, groups, model)
    iy = _resolve_names(cfg.stressed, groups, model)
    policy = _stress_policy(cfg, panel, model)
    rep = evaluate_pair(model, ix, iy, policy, cfg.eq_l_form)
    report: dict[str, Any] = {
        "stressor": cfg.stressor,
        "stressed": cfg.stressed,
        "distribution": model.kind.name,
        "nu": getattr(model.kind, "nu", None),
        "q": cfg.q,
        "stress_policy": cfg.stress_policy,
        "eq_l_form": cfg.eq_l_form,
        "stressor_variables": rep.stressor,
        "stressed_variables": rep.stressed,
        "stress_vector": rep.stress.tolist(),
        "d2x": rep.d2x,
        "centroid_shift": rep.shift.tolist(),
        "measures": rep.values,
        "errors": rep.errors,
    }
    if cfg.mc_draws > 0:
        report["monte_carlo_check"] = _mc_check(model, ix, iy, rep.stress, cfg)
    name = f"stress_{_slug(cfg.stressor)}__{_slug(cfg.stressed)}.json"
    fileio.write_all({os.path.join(cfg.out, name): fileio.dumps(report) + "\n"})
    return report


def _mc_check(model: EllipticalModel, ix, iy, x, cfg: RunConfig) -> dict:
    """Monte Carlo regression estimate of the conditional centroid vs. the exact one."""
    loss = model.negated()
    part = build_partition(loss, ix, iy)
    est, se = regression_location(loss, part, x, n=cfg.mc_draws, seed=cfg.seed)
    z = (est - conditional_location(part, x)) / se
    return {
        "seed": cfg.seed,
        "draws": cfg.mc_draws,
        "max_abs_z": float(np.max(np.abs(z))),
        "within_3_stderr": bool(np.all(np.abs(z) < 3.0)),
    }


def cmd_matrix(cfg: RunConfig) -> tuple[dict, bool]:
    model, _ = fileio.read_model(cfg.model_path)
    panel = _load_panel(cfg)
    groups = _group_map(panel, model)
    policy = _stress_policy(cfg, panel, model)
    dataset_id = fileio.sha256_file(cfg.panel_path)[:16]
    files: dict[str, str] = {}
    mats = {}
    partial = False
    for m in cfg.measures:
        mm = measure_matrix(model, groups, m, policy, cfg.eq_l_form, cfg.workers, dataset_id)
        ovr = one_vs_rest(model, groups, m, policy, cfg.eq_l_form, cfg.workers)
        mats[m] = mm
        partial |= bool(mm.errors) or bool(ovr.errors)
        files[os.path.join(cfg.out, f"matrix_{m}.csv")] = fileio.csv_text(
            ["stressor"] + mm.col_labels,
            ([r] + [float(v) for v in row] for r, row in zip(mm.row_labels, mm.values)),
        )
        files[os.path.join(cfg.out, f"matrix_{m}.json")] = fileio.dumps(
            {
                "measure": m,
                "rows": mm.row_labels,
                "cols": mm.col_labels,
                "orientation": "rows stress, columns are stressed",
                "values": mm.values.tolist(),
                "metadata": mm.metadata,
            }
        ) + "\n"
        files[os.path.join(cfg.out, f"one_vs_rest_{m}.csv")] = fileio.csv_text(
            ["group", "group_to_rest", "rest_to_group"],
            zip(ovr.labels, map(float, ovr.group_to_rest), map(float, ovr.rest_to_group)),
        )
        if ovr.errors:
            mm.metadata.setdefault("one_vs_rest_errors", ovr.errors)
    diag: dict[str, Any] = {"cross_measure_correlation": {}}
    for a, b in (("L", "MI"), ("THETA", "MI"), ("DELTA", "MI"), ("L", "THETA")):
        if a in mats and b in mats:
            diag["cross_measure_correlation"][f"{a}~{b}"] = cross_measure_correlation(mats[a], mats[b])
    if "MI" in mats:
        v = mats["MI"].values
        diag["mi_symmetric"] = bool(np.array_equal(np.nan_to_num(v), np.nan_to_num(v.T)))
    if "L" in mats:
        L = mats["L"].values
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = L / L.T
        ok = np.isfinite(ratio)
        diag["l_max_asymmetry_ratio"] = float(np.max(ratio[ok])) if ok.any() else None
    diag["cell_errors"] = sum(len(mm.errors) for mm in mats.values())
    files[os.path.join(cfg.out, "diagnostics.json")] = fileio.dumps(diag) + "\n"
    fileio.write_all(files)
    return diag, partial


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--panel", help="panel cache path (default: <out>/panel.csv)")
    common.add_argument("--model", help="model JSON path (default: <out>/model.json)")
    common.add_argument("--q", type=float, help="VaR quantile level (default 0.95)")
    common.add_argument("--dist", help="normal | student-t")
    common.add_argument("--nu", type=float, help="Student-t degrees of freedom (estimated if omitted)")
    common.add_argument(
        "--stress-policy",
        dest="stress_policy",
        help="empirical-var | parametric-var | uniform[:c] | explicit:<ticker,stress csv>",
    )
    common.add_argument("--measures", help=f"comma list from {','.join(MEASURES)}")
    common.add_argument("--seed", type=int)
    common.add_argument("--eq-l-form", dest="eq_l_form", help="literal | deviation")
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ellipstress", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    ing = sub.add_parser("ingest", parents=[common], help="parse prices/sectors into a panel cache")
    ing.add_argument("--prices")
    ing.add_argument("--sectors")
    ing.add_argument("--synthetic", action="store_true", help="use the bundled synthetic dataset")
    sub.add_parser("fit", parents=[common], help="fit a Normal or Student-t model")
    st = sub.add_parser("stress", parents=[common], help="all measures for one stressor/stressed pair")
    st.add_argument("--stressor", help="group name, ticker, or '+'-joined list")
    st.add_argument("--stressed", help="group name, ticker, or '+'-joined list")
    st.add_argument("--mc-draws", dest="mc_draws", type=int, help="Monte Carlo cross-check draws (0 = off)")
    sub.add_parser("matrix", parents=[common], help="group x group measure matrices")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {k: v for k, v in vars(args).items() if k in _FIELDS}
    if getattr(args, "synthetic", False):
        overrides["prices"], overrides["sectors"] = bundled_paths()
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "ingest":
            out = cmd_ingest(cfg)
            print(fileio.dumps(out))
        elif args.command == "fit":
            model = cmd_fit(cfg)
            print(f"wrote {cfg.model_path} ({model.kind.name}, p={model.p})")
        elif args.command == "stress":
            print(fileio.dumps(cmd_stress(cfg)))
        elif args.command == "matrix":
            diag, partial = cmd_matrix(cfg)
            print(fileio.dumps(diag))
            if partial:
                return EXIT_PARTIAL
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EllipstressError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
