"""Experiment dispatch and report export."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (blocking_gap_experiment, blocking_layout, default_lemma1_battery,
                     normalization_scan, verify_delta_mixing, verify_lemma1, verify_thm6)
from .config import ConfigError, RunConfig, resolve_distribution, resolve_system
from .dist import check_mda_conditions
from .engine import LurothSampler, sample_luroth_iid, sample_path
from .extremes import independence_gap, max_limit_experiment
from .rng import replica_seed

THM6_BATTERY = ({"variant": "iii", "a": 2.0, "n": 3},
                {"variant": "ii", "b": 2.0, "n": 3},
                {"variant": "i", "a": 2.0, "b": 4.0, "n": 2})
ROW_COLUMNS = ["variant", "params", "center", "half_width", "p_hat", "se", "verdict"]


class ExperimentError(RuntimeError):
    """A downstream failure, tagged with the experiment that raised it."""


@dataclass
class ReportDocument:
    config_echo: dict
    tool_version: str
    results: dict
    wall_time: float
    status: str = "pass"

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {"config_echo": self.config_echo, "tool_version": self.tool_version,
             "results": self.results, "status": self.status}
        if include_timing:
            d["wall_time"] = self.wall_time
        return d

    @property
    def exit_code(self) -> int:
        return 2 if self.status == "violated" else 0


def _status(rows: list[dict]) -> str:
    verdicts = {r["verdict"] for r in rows}
    if "violated" in verdicts:
        return "violated"
    return "inconclusive" if "inconclusive" in verdicts else "pass"


def run(cfg: RunConfig) -> ReportDocument:
    """Dispatch ``cfg`` to its experiment; deterministic given the config."""
    start = time.perf_counter()
    try:
        results, status = _DISPATCH[cfg.experiment](cfg)
    except ConfigError:
        raise
    except (ValueError, RuntimeError) as exc:
        raise ExperimentError(f"{cfg.experiment}: {exc}") from exc
    return ReportDocument(cfg.to_dict(), __version__, _clean(results), time.perf_counter() - start,
                          status)


def _run_sample(cfg: RunConfig):
    mode = cfg.params.get("arithmetic_mode", "exact")
    system = resolve_system(cfg, mode)
    if isinstance(system, LurothSampler):
        ratios = sample_luroth_iid(cfg.n, cfg.master_seed)
        return {"kind": "luroth_sample", "ratios": ratios}, "pass"
    path = sample_path(system, cfg.n, cfg.master_seed)
    rows = [[i, s.h_prev, s.q, s.ratio, s.alpha_end, s.beta_end, s.w]
            for i, s in enumerate(path.steps, start=1)]
    return {"kind": "sample_path", "digest": path.digest(),
            "csv": {"header": ["step", "B", "Q", "R", "alpha", "beta", "w"], "rows": rows}}, "pass"


def _run_extremes(cfg: RunConfig):
    p = cfg.params
    system = resolve_system(cfg)
    if p.get("mode", "limit") == "independence":
        g = independence_gap(system, cfg.n, p["x"], p["y"], cfg.replicas, cfg.master_seed,
                             rho_scale=p.get("rho_scale"), sigma_scale=p.get("sigma_scale"),
                             workers=cfg.workers)
        row = {"variant": "independence_gap", "params": {"x": p["x"], "y": p["y"], "n": cfg.n},
               "center": None, "half_width": g.theoretical_bound, "p_hat": g.details["p_joint"],
               "se": g.standard_error, "verdict": g.verdict}
        return {"kind": "verification", "rows": [row], "gaps": [g.to_dict()]}, _status([row])
    rep = max_limit_experiment(system, cfg.n, cfg.replicas, p["normalization"], p.get("grid"),
                               cfg.master_seed, ell0_plus=p.get("ell0_plus"),
                               ell1_minus=p.get("ell1_minus"), p=p.get("p", 1),
                               workers=cfg.workers)
    return {"kind": "ecdf", "report": rep.to_dict(), "csv": dict(zip(("header", "rows"),
                                                                     rep.csv_rows()))}, "pass"


def _run_bounds(cfg: RunConfig):
    p = cfg.params
    system = resolve_system(cfg)
    variant = p["variant"]
    checks = []
    if variant in ("i", "ii", "iii"):
        checks.append(verify_thm6(system, variant, cfg.n, cfg.replicas, cfg.master_seed,
                                  a=p.get("a"), b=p.get("b"), workers=cfg.workers))
    elif variant == "thm6_battery":
        for item in p.get("battery") or THM6_BATTERY:
            checks.append(verify_thm6(system, item["variant"], item["n"], cfg.replicas,
                                      cfg.master_seed, a=item.get("a"), b=item.get("b"),
                                      workers=cfg.workers))
    else:
        batteries = [p["groups"]] if variant == "lemma1" else (p.get("battery")
                                                               or default_lemma1_battery())
        for groups in batteries:
            groups = [(list(ix), float(x)) for ix, x in groups]
            checks.append(verify_lemma1(system, groups, cfg.replicas, cfg.master_seed,
                                        workers=cfg.workers))
    rows = [c.row() for c in checks]
    return {"kind": "verification", "rows": rows,
            "checks": [c.to_dict() for c in checks]}, _status(rows)


def _run_mixing(cfg: RunConfig):
    p = cfg.params
    system = resolve_system(cfg)
    np_, nq, gap = p.get("p", 2), p.get("q", 3), p.get("gap", 2)
    left = p.get("left") or list(range(1, np_ + 1))
    right = p.get("right") or list(range(max(left) + gap + 1, max(left) + gap + 1 + nq))
    us = p["u"] if isinstance(p["u"], list) else [p["u"]]
    checks = [verify_delta_mixing(system, left, right, float(u), cfg.replicas, cfg.master_seed,
                                  beta=p.get("beta"), workers=cfg.workers) for u in us]
    rows = [c.row() for c in checks]
    return {"kind": "verification", "rows": rows,
            "checks": [c.to_dict() for c in checks]}, _status(rows)


def _run_blocking(cfg: RunConfig):
    p = cfg.params
    system = resolve_system(cfg)
    if p.get("mode", "gap") == "scan":
        grid = p.get("grid") or np.linspace(-2, 2, 21).tolist()
        scan = normalization_scan(system, cfg.n, p["a_n"], p["b_n"], grid, cfg.replicas,
                                  cfg.master_seed, cfg.workers)
        rows = [[x, ph, s] for x, ph, s in zip(scan["grid"], scan["p_hat"], scan["se"])]
        return {"kind": "scan", "scan": scan,
                "csv": {"header": ["x", "p_hat", "se"], "rows": rows}}, "pass"
    layout = blocking_layout(cfg.n, p["k"], p["m"])
    g = blocking_gap_experiment(system, layout, p["u"], cfg.replicas, cfg.master_seed,
                                beta=p.get("beta"), workers=cfg.workers)
    row = {"variant": "prop4_total", "params": {"n": cfg.n, "k": p["k"], "m": p["m"], "u": p["u"]},
           "center": None, "half_width": g.theoretical_bound, "p_hat": g.details["p_full"],
           "se": g.standard_error, "verdict": g.verdict}
    return {"kind": "verification", "rows": [row], "gaps": [g.to_dict()],
            "layout": layout.to_dict()}, _status([row])


def _run_mda(cfg: RunConfig):
    p = cfg.params
    if cfg.distribution is not None:
        F = resolve_distribution(cfg.distribution, "distribution")
    else:
        F = resolve_system(cfg).F
    kwargs = {k: p[k] for k in ("h_values", "y_sequence", "beta", "grid_points") if k in p}
    rep = check_mda_conditions(F, **kwargs)
    return {"kind": "mda", "report": rep.to_dict()}, "pass"


_DISPATCH = {"sample": _run_sample, "extremes": _run_extremes, "bounds": _run_bounds,
             "mixing": _run_mixing, "blocking": _run_blocking, "mda": _run_mda}


# -- export -----------------------------------------------------------------

def _clean(obj):
    """Convert numpy scalars, fractions and tuples into plain JSON-able values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if obj is None or isinstance(obj, str):
        return obj
    try:
        return float(obj)
    except (TypeError, ValueError):
        return str(obj)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (dict, list)):
        return json.dumps(_json_safe(v), sort_keys=True, separators=(",", ":"))
    return str(v)


def _table(results: dict) -> tuple[list[str], list[list]]:
    kind = results.get("kind")
    if "csv" in results:
        return results["csv"]["header"], results["csv"]["rows"]
    if kind == "verification":
        return ROW_COLUMNS, [[r[c] for c in ROW_COLUMNS] for r in results["rows"]]
    if kind == "luroth_sample":
        return ["step", "R"], [[i, r] for i, r in enumerate(results["ratios"], start=1)]
    if kind == "mda":
        rows = []
        for section, body in results["report"].items():
            if isinstance(body, dict):
                for key, val in body.items():
                    if not isinstance(val, (list, dict)):
                        rows.append([section, key, val])
            else:
                rows.append([section, "", body])
        return ["section", "key", "value"], rows
    raise ValueError(f"no tabular form for results of kind {kind!r}")


def render(report: ReportDocument, fmt: str) -> str:
    if fmt == "json":
        doc = _json_safe(report.to_dict())
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if fmt == "csv":
        header, rows = _table(report.results)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()
    raise ConfigError("output.format", f"unsupported format {fmt!r}")


def export(report: ReportDocument, fmt: str, path) -> None:
    """Write ``report`` as ``json`` or ``csv``; byte-identical for identical reports."""
    text = render(report, fmt)
    try:
        Path(path).write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def replica_path_seed(master_seed: int, index: int) -> int:
    """Stream seed used for replica ``index``; pass it to ``sample_path`` to replay that replica."""
    return replica_seed(master_seed, index)
