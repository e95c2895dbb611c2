"""Command-line surface.

Subcommands: synth | forecast | reconcile | nnd | evaluate | plot |
fetch-italian.  Every config-file key can be overridden by a CLI flag of
the same name (precedence: flag > file > default).  Exit codes: 0 success,
2 config error, 3 data error, 4 numeric failure; failures print a
machine-readable JSON object on stderr.
"""

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import __version__, neuralnet
from .errors import ConfigError, DataError, HiercastError, NumericError
from .evaluate import CVConfig, EvalReport, nemenyi_svg
from .forecasters import default_candidates, select_model
from .forecastset import ForecastSet, read_forecast_set
from .hierarchy import (build_summing_matrix, coherence_violation,
                        format_timestamp, load_hierarchy, load_panel,
                        timestamps_are_dates, _parse_ts)
from .nnd import (ArchConfig, NndConfig, WindowConfig, nnd_iterative_topdown,
                  nnd_middle_out, nnd_standard_topdown)
from .reconcile import (ErrorCovariance, apply_topdown, bottom_up,
                        middle_out, mint_reconcile, proportions_ahp,
                        proportions_fp, proportions_pha,
                        shrinkage_covariance)
from .seeding import derive_seed
from .synthetic import GeneratorSpec, write_dataset

ITALIAN_URL = "https://data.mendeley.com/public-api/datasets/s8dgbs3rng/files?folder_id=root&version=1"

EXIT_CODES = {ConfigError: 2, DataError: 3, NumericError: 4}


# ---------------------------------------------------------------------------
# Settings: flag > config file > default
# ---------------------------------------------------------------------------

def _bool(token):
    if isinstance(token, bool):
        return token
    t = str(token).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {token!r}")


def _int_list(token):
    return tuple(int(x) for x in str(token).split(",") if x.strip())


def _float_list(token):
    return tuple(float(x) for x in str(token).split(",") if x.strip())


def _str_list(token):
    return [x.strip() for x in str(token).split(",") if x.strip()]


def load_config_file(path):
    """Flat key=value config with sections; all sections are merged."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    merged = dict(parser.defaults())
    for section in parser.sections():
        merged.update(parser.items(section))
    return merged


class Settings:
    """Merges CLI flags (already typed by argparse) over config-file values
    over defaults."""

    def __init__(self, args):
        self.flags = vars(args)
        path = self.flags.get("config")
        self.file = load_config_file(path) if path else {}

    def get(self, key, default=None, cast=str):
        flag = self.flags.get(key)
        if flag is not None:
            return flag
        if key in self.file:
            try:
                return cast(self.file[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        return default

    def require(self, key, cast=str):
        value = self.get(key, None, cast)
        if value is None:
            raise ConfigError(f"missing required setting {key!r}")
        return value


def _require_file(path, role):
    if not os.path.exists(path):
        raise ConfigError(f"{role} file not found: {path}")
    return path


def _load_inputs(cfg, need_exog=True):
    hier = load_hierarchy(_require_file(cfg.require("hierarchy"), "hierarchy"))
    exog_path = cfg.get("exog") if need_exog else None
    if exog_path is not None:
        _require_file(exog_path, "exogenous")
    panel = load_panel(
        hier, _require_file(cfg.require("observations"), "observations"),
        exog_path,
    )
    return hier, panel


def _split_index(cfg, panel):
    """Training size from either an integer row count or a date string."""
    raw = cfg.require("split")
    try:
        n_train = int(raw)
    except (TypeError, ValueError):
        ts = _parse_ts(str(raw))
        n_train = int(np.searchsorted(panel.timestamps, ts, side="right"))
    if not 2 <= n_train <= panel.T:
        raise ConfigError(
            f"split {raw!r} leaves {n_train} training rows "
            f"(panel has {panel.T})"
        )
    return n_train


def _future_timestamps(panel, n_train, h):
    if n_train + h <= panel.T:
        return panel.timestamps[n_train:n_train + h]
    spacing = (panel.timestamps[-1] - panel.timestamps[-2]
               if panel.T > 1 else np.timedelta64(86400, "s"))
    last = panel.timestamps[n_train - 1]
    return last + spacing * np.arange(1, h + 1)


def _node_exog(panel, node_id):
    """Node exog columns plus calendar dummies as one regressor matrix."""
    names, mat = panel.exog_for(node_id)
    cal_names, cal = panel.calendar_features()
    X = np.column_stack([mat, cal]) if (mat.shape[1] or cal.shape[1]) else mat
    return list(names) + cal_names, X


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args):
    cfg = Settings(args)
    out = cfg.require("out")
    spec = GeneratorSpec(
        children_per_level=cfg.get("children_per_level", (3, 4), _int_list),
        T=cfg.get("t", 730, int),
        m_season=cfg.get("m_season", 7, int),
        base_level=cfg.get("base_level", 20.0, float),
        seasonal_amplitude=cfg.get("seasonal_amplitude", 5.0, float),
        trend=cfg.get("trend", 0.0, float),
        noise_sigma=cfg.get("noise_sigma", 0.5, float),
        regime=cfg.get("regime", "static"),
        promo_prob=cfg.get("promo_prob", 0.2, float),
        promo_lift=cfg.get("promo_lift", 2.0, float),
        fixed_shares=cfg.get("fixed_shares", None, _float_list),
        seed=cfg.get("seed", 0, int),
        start=cfg.get("start", "2015-01-05"),
    )
    write_dataset(spec, out)
    print(f"wrote synthetic dataset ({spec.regime} regime, seed {spec.seed}) to {out}")
    return 0


# ---------------------------------------------------------------------------
# forecast
# ---------------------------------------------------------------------------

def _resolve_nodes(hier, token):
    if token in (None, "all"):
        return list(hier.node_ids)
    if str(token).startswith("level:"):
        level = int(str(token).split(":", 1)[1])
        if not 0 <= level <= hier.K - 1:
            raise ConfigError(f"no level {level} in a {hier.K}-level hierarchy")
        return hier.level_ids(level)
    nodes = _str_list(token)
    for n in nodes:
        hier.index(n)
    return nodes


def _default_cv(cfg, n_train, h, m_season):
    start = cfg.get("cv_start", max(2 * m_season + 1, n_train - 3 * h), int)
    end = cfg.get("cv_end", n_train - h, int)
    step = cfg.get("cv_step", h, int)
    return CVConfig(starting_window=start, ending_window=end,
                    horizon=h, step=step)


def cmd_forecast(args):
    cfg = Settings(args)
    hier, panel = _load_inputs(cfg)
    n_train = _split_index(cfg, panel)
    h = cfg.get("horizon", 7, int)
    m_season = cfg.get("m_season", 7, int)
    seed = cfg.get("seed", 0, int)
    nodes = _resolve_nodes(hier, cfg.get("nodes", "all"))
    cv = _default_cv(cfg, n_train, h, m_season)
    include_narx = cfg.get("include_narx", True, _bool)
    include_comb = cfg.get("include_combinations", True, _bool)
    out = cfg.require("out")

    values = np.empty((h, len(nodes)))
    chosen = {}
    for j, node_id in enumerate(nodes):
        y = panel.series(node_id)[:n_train]
        _, X_all = _node_exog(panel, node_id)
        X = X_all if X_all.shape[1] else None
        cands = default_candidates(
            m_season,
            narx_seed=derive_seed(seed, f"fstar:{node_id}"),
            include_narx=include_narx,
            include_combinations=include_comb,
        )
        fitted, kind, score = select_model(
            y, X[:n_train] if X is not None else None, cands, cv,
            m_season=m_season,
        )
        X_future = (X[n_train:n_train + h]
                    if X is not None and X.shape[0] >= n_train + h else None)
        values[:, j] = fitted.forecast(h, X_future)
        chosen[node_id] = {"model": kind, "cv_mase": score}

    fs = ForecastSet(
        method="fstar", node_ids=tuple(nodes),
        timestamps=_future_timestamps(panel, n_train, h),
        values=values, kind="base",
    )
    fs.write_csv(out)
    meta_path = os.path.splitext(out)[0] + "_models.json"
    with open(meta_path, "w") as fh:
        json.dump(chosen, fh, indent=2, sort_keys=True)
    print(f"wrote base forecasts for {len(nodes)} nodes to {out}")
    return 0


# ---------------------------------------------------------------------------
# reconcile
# ---------------------------------------------------------------------------

def _base_matrix(fs, hier):
    """Base forecast columns reordered to canonical hierarchy order."""
    return np.column_stack([fs.column(n) for n in hier.node_ids])


def _load_error_matrix(path, hier):
    rows = {}
    import csv as _csv
    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or "node_id" not in reader.fieldnames:
            raise DataError(f"{path}: expected columns timestamp,node_id,error")
        value_col = "error" if "error" in reader.fieldnames else "value"
        for row in reader:
            rows.setdefault(row["timestamp"], {})[row["node_id"]] = float(row[value_col])
    stamps = sorted(rows)
    E = np.empty((len(stamps), hier.M))
    for t, ts in enumerate(stamps):
        for j, node_id in enumerate(hier.node_ids):
            if node_id not in rows[ts]:
                raise DataError(f"{path}: missing error for {node_id!r} at {ts}")
            E[t, j] = rows[ts][node_id]
    return E


def _historical_subtree_proportions(panel, node_id):
    """Bottom proportions within a subtree from historical leaf means."""
    hier = panel.hierarchy
    leaves = hier.descendants_at_bottom(node_id)
    means = np.array([panel.series(n).mean() for n in leaves])
    total = means.sum()
    if total == 0:
        raise DataError(
            f"cannot derive middle-out proportions under {node_id!r}: "
            "zero historical mean"
        )
    return means / total


def cmd_reconcile(args):
    cfg = Settings(args)
    hier, panel = _load_inputs(cfg)
    S = build_summing_matrix(hier)
    fs = read_forecast_set(_require_file(cfg.require("base"), "base forecast"),
                           kind="base")
    base = _base_matrix(fs, hier)
    methods = [m.lower() for m in
               cfg.get("methods", ["bu", "ahp", "pha", "fp"], _str_list)]
    split = cfg.get("split", None)
    hist = panel if split is None else panel.slice_rows(0, _split_index(cfg, panel))
    out_dir = cfg.require("out_dir")
    os.makedirs(out_dir, exist_ok=True)

    top = base[:, hier.index(hier.root_id)]
    bottom_cols = [j for j, n in enumerate(hier.node_ids) if n in set(hier.bottom_ids)]
    outputs = {}
    for method in methods:
        if method == "bu":
            outputs["bu"] = bottom_up(S, base[:, bottom_cols])
        elif method == "ahp":
            outputs["ahp"] = apply_topdown(S, proportions_ahp(hist), top)
        elif method == "pha":
            outputs["pha"] = apply_topdown(S, proportions_pha(hist), top)
        elif method == "fp":
            bottom = np.empty((base.shape[0], S.m_bottom))
            for t in range(base.shape[0]):
                bottom[t] = top[t] * proportions_fp(base, hier, t)
            outputs["fp"] = bottom @ S.entries.T
        elif method == "mo":
            level = cfg.get("middle_level", 1, int)
            mids = hier.level_ids(level)
            mid_fc = np.column_stack([fs.column(n) for n in mids])
            props = {n: _historical_subtree_proportions(hist, n) for n in mids}
            outputs["mo"] = middle_out(hier, S, level, mid_fc, props)
        elif method == "mint":
            errors_path = cfg.get("errors")
            lam = cfg.get("shrinkage", None, float)
            if errors_path is not None:
                E = _load_error_matrix(_require_file(errors_path, "errors"), hier)
                cov = shrinkage_covariance(E, lam)
            else:
                cov = ErrorCovariance(W=np.eye(hier.M), lam=1.0)
            outputs["mint"] = mint_reconcile(S, base, cov)
        else:
            raise ConfigError(
                f"unknown reconciliation method {method!r} "
                "(choose from bu, ahp, pha, fp, mo, mint)"
            )

    for method, values in outputs.items():
        gap = coherence_violation(S, values)
        if gap > 1e-9:
            raise NumericError(
                f"{method} output violates coherence by {gap:.3g}"
            )
        ForecastSet(
            method=method, node_ids=tuple(hier.node_ids),
            timestamps=fs.timestamps, values=values, kind="coherent",
        ).write_csv(os.path.join(out_dir, f"{method}.csv"))
    print(f"wrote {len(outputs)} coherent forecast sets to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# nnd
# ---------------------------------------------------------------------------

def _nnd_config(cfg):
    train = neuralnet.TrainConfig(
        alpha=cfg.get("alpha", 0.5, float),
        learning_rate=cfg.get("lr", 0.001, float),
        batch_size=cfg.get("batch", 32, int),
        max_epochs=cfg.get("epochs", 500, int),
        patience=cfg.get("patience", 20, int),
        validation_fraction=cfg.get("val_fraction", 0.1, float),
    )
    arch = ArchConfig(
        hidden=cfg.get("hidden", 64, int),
        n_dense=cfg.get("n_dense", 3, int),
        filters=cfg.get("filters", 16, int),
        n_conv=cfg.get("n_conv", 6, int),
        kernel_size=cfg.get("kernel_size", 4, int),
        grid=cfg.get("grid", False, _bool),
    )
    return NndConfig(
        window=WindowConfig(w=cfg.get("window", 30, int),
                            hop=cfg.get("hop", 1, int)),
        train=train, arch=arch,
        seed=cfg.get("seed", 0, int),
        jobs=cfg.get("jobs", 1, int),
    )


def cmd_nnd(args):
    cfg = Settings(args)
    hier, panel = _load_inputs(cfg)
    n_train = _split_index(cfg, panel)
    h = cfg.get("horizon", 7, int)
    m_season = cfg.get("m_season", 7, int)
    strategy = cfg.get("strategy", "nnd2").lower()
    ncfg = _nnd_config(cfg)
    out_dir = cfg.require("out_dir")
    os.makedirs(out_dir, exist_ok=True)

    if strategy == "nnd1":
        result = nnd_standard_topdown(panel, n_train, h, ncfg, m_season=m_season)
    elif strategy == "nnd2":
        result = nnd_iterative_topdown(panel, n_train, h, ncfg, m_season=m_season)
    elif strategy in ("mo", "middle-out"):
        level = cfg.get("middle_level", 1, int)
        result = nnd_middle_out(panel, n_train, h, level, ncfg, m_season=m_season)
    else:
        raise ConfigError(
            f"unknown NND strategy {strategy!r} (choose nnd1, nnd2, or mo)"
        )

    ForecastSet(
        method=strategy, node_ids=tuple(hier.node_ids),
        timestamps=_future_timestamps(panel, n_train, h),
        values=result.values, kind="coherent",
    ).write_csv(os.path.join(out_dir, "forecasts.csv"))

    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    for parent_id, model in sorted(result.models.items()):
        neuralnet.save_network(model.net, os.path.join(models_dir, f"{parent_id}.net"))
    with open(os.path.join(out_dir, "diagnostics.json"), "w") as fh:
        json.dump({
            "strategy": strategy,
            "seed": ncfg.seed,
            "raw_violations": {k: float(v) for k, v in
                               sorted(result.raw_violations.items())},
            "root_forecast": [float(v) for v in result.root_forecast],
        }, fh, indent=2, sort_keys=True)
    print(f"wrote {strategy} forecasts and {len(result.models)} model(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args):
    from .evaluate import mase as _mase, smape as _smape

    cfg = Settings(args)
    hier, panel = _load_inputs(cfg)
    n_train = _split_index(cfg, panel)
    metric = cfg.get("metric", "mase").lower()
    if metric not in ("mase", "smape"):
        raise ConfigError(f"unknown metric {metric!r} (choose mase or smape)")
    m_season = cfg.get("m_season", 7, int)
    significance = cfg.get("significance", 0.05, float)
    rank_tests = cfg.get("rank_tests", True, _bool)
    out_dir = cfg.require("out_dir")
    paths = cfg.require("forecasts", _str_list)

    sets = [read_forecast_set(_require_file(p, "forecast"), kind="coherent")
            for p in paths]
    methods = [fs.method for fs in sets]
    if len(set(methods)) != len(methods):
        raise ConfigError(f"duplicate method names across forecast files: {methods}")

    h = sets[0].horizon
    for fs in sets:
        if fs.horizon != h:
            raise ConfigError("forecast files cover different horizons")
    if n_train + h > panel.T:
        raise DataError(
            f"need {h} held-out rows after the split, panel has {panel.T - n_train}"
        )

    report = EvalReport(methods=methods, metric=metric)
    for node_id in hier.node_ids:
        idx = hier.index(node_id)
        actual = panel.values[n_train:n_train + h, idx]
        insample = panel.values[:n_train, idx]
        scores = {}
        try:
            for fs in sets:
                fc = fs.column(node_id)
                if metric == "mase":
                    scores[fs.method] = _mase(actual, fc, insample, m_season)
                else:
                    scores[fs.method] = _smape(actual, fc)
        except NumericError as exc:
            report.flagged[node_id] = str(exc)
            continue
        report.series_scores[node_id] = scores
        report.series_levels[node_id] = hier.levels[idx]

    if rank_tests:
        report.run_rank_tests(significance)

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json())
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write(report.to_csv())
    if report.nemenyi is not None:
        with open(os.path.join(out_dir, "nemenyi.svg"), "w") as fh:
            fh.write(nemenyi_svg(report.nemenyi))
    print(f"evaluated {len(methods)} method(s) on {len(report.series_scores)} "
          f"series; report in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def _line_plot_svg(timestamps, series, width=720, height=300, margin=50):
    """series: list of (label, values, dash) aligned with timestamps."""
    all_vals = np.concatenate([np.asarray(v, dtype=float) for _, v, _ in series])
    lo, hi = float(all_vals.min()), float(all_vals.max())
    span = hi - lo or 1.0
    n = len(timestamps)

    def px(i):
        return margin + (i / max(n - 1, 1)) * (width - 2 * margin)

    def py(v):
        return height - margin - (v - lo) / span * (height - 2 * margin)

    date_only = timestamps_are_dates(timestamps)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 18}" font-size="11">'
        f'{format_timestamp(timestamps[0], date_only)}</text>',
        f'<text x="{width - margin}" y="{height - margin + 18}" '
        f'text-anchor="end" font-size="11">'
        f'{format_timestamp(timestamps[-1], date_only)}</text>',
        f'<text x="{margin - 6}" y="{py(hi) + 4:.2f}" text-anchor="end" '
        f'font-size="11">{hi:.2f}</text>',
        f'<text x="{margin - 6}" y="{py(lo) + 4:.2f}" text-anchor="end" '
        f'font-size="11">{lo:.2f}</text>',
    ]
    colors = ["black", "#c62828", "#1565c0", "#2e7d32"]
    for s, (label, values, dash) in enumerate(series):
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(values))
        stroke = colors[s % len(colors)]
        dash_attr = ' stroke-dasharray="6,4"' if dash else ""
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="1.5"{dash_attr}/>'
        )
        parts.append(
            f'<text x="{width - margin}" y="{margin + 14 * s}" text-anchor="end" '
            f'font-size="12" fill="{stroke}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args):
    cfg = Settings(args)
    hier, panel = _load_inputs(cfg)
    fs = read_forecast_set(_require_file(cfg.require("forecasts"), "forecast"))
    nodes = _resolve_nodes(hier, cfg.require("nodes"))
    out_dir = cfg.require("out_dir")
    os.makedirs(out_dir, exist_ok=True)

    # align the forecast window with the panel by timestamp
    ts_index = {str(ts): t for t, ts in enumerate(panel.timestamps)}
    positions = [ts_index.get(str(ts)) for ts in fs.timestamps]
    if any(p is None for p in positions):
        raise DataError("forecast timestamps not found in the observation panel")
    start, stop = positions[0], positions[-1] + 1
    context = max(0, start - 4 * fs.horizon)

    for node_id in nodes:
        actual = panel.series(node_id)[context:stop]
        pad = np.concatenate([actual[:start - context], fs.column(node_id)])
        svg = _line_plot_svg(
            panel.timestamps[context:stop],
            [("actual", actual, False),
             (fs.method, pad, True)],
        )
        with open(os.path.join(out_dir, f"plot_{node_id}.svg"), "w") as fh:
            fh.write(svg)
    print(f"wrote {len(nodes)} plot(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# fetch-italian
# ---------------------------------------------------------------------------

def _italian_to_panel(table):
    """Convert the wide pasta-demand table (DATE, QTY_B*_*, PROMO_B*_*)
    to the standard triplet structures."""
    from .hierarchy import Hierarchy, SeriesPanel

    header = table[0]
    qty_cols = {}
    promo_cols = {}
    date_col = None
    for j, name in enumerate(header):
        u = str(name).strip().upper()
        if u in ("DATE", "DATA", "TIMESTAMP"):
            date_col = j
        elif u.startswith("QTY_"):
            qty_cols[u[4:]] = j
        elif u.startswith("PROMO_"):
            promo_cols[u[6:]] = j
    if date_col is None or not qty_cols:
        raise DataError("unrecognized Italian dataset layout")

    items = sorted(qty_cols)
    brands = sorted({it.rsplit("_", 1)[0] for it in items})
    nodes = [("total", None, 0)]
    nodes += [(b, "total", 1) for b in brands]
    nodes += [(it, it.rsplit("_", 1)[0], 2) for it in items]
    hier = Hierarchy.from_nodes(nodes)

    rows = table[1:]
    T = len(rows)
    timestamps = np.array([_parse_ts(str(r[date_col]).split(" ")[0]) for r in rows],
                          dtype="datetime64[s]")
    values = np.zeros((T, hier.M))
    exog = {}
    for it in items:
        col = np.array([float(r[qty_cols[it]] or 0.0) for r in rows])
        values[:, hier.index(it)] = col
        if it in promo_cols:
            promo = np.array([float(r[promo_cols[it]] or 0.0) for r in rows])
            exog[it] = (["promo"], promo[:, None])
    for level in (1, 0):
        for node_id in hier.level_ids(level):
            cols = [hier.index(c) for c in hier.children(node_id)]
            values[:, hier.index(node_id)] = values[:, cols].sum(axis=1)
    return SeriesPanel(hierarchy=hier, timestamps=timestamps, values=values,
                       exog=exog)


def cmd_fetch_italian(args):
    from urllib.request import urlopen

    from .hierarchy import write_exog, write_hierarchy, write_observations

    cfg = Settings(args)
    out_dir = cfg.require("out")
    url = cfg.get("url", ITALIAN_URL)
    os.makedirs(out_dir, exist_ok=True)

    with urlopen(url, timeout=60) as resp:
        payload = resp.read()
    if url.endswith((".csv", ".txt")) or payload[:4] != b"PK\x03\x04":
        text = payload.decode("utf-8-sig")
        delim = ";" if text.splitlines()[0].count(";") > text.splitlines()[0].count(",") else ","
        table = [line.split(delim) for line in text.splitlines() if line.strip()]
    else:
        # Mendeley serves an xlsx; parse it with openpyxl if available.
        try:
            import io

            import openpyxl
        except ImportError:
            raise ConfigError(
                "the Italian dataset ships as .xlsx; install openpyxl or "
                "pass --url pointing at a CSV export"
            ) from None
        wb = openpyxl.load_workbook(io.BytesIO(payload), read_only=True)
        ws = wb[wb.sheetnames[0]]
        table = [[c if c is not None else "" for c in row]
                 for row in ws.iter_rows(values_only=True)]

    panel = _italian_to_panel(table)
    write_hierarchy(panel.hierarchy, os.path.join(out_dir, "hierarchy.csv"))
    write_observations(panel, os.path.join(out_dir, "observations.csv"))
    if panel.exog:
        write_exog(panel, os.path.join(out_dir, "exog.csv"))
    print(f"wrote Italian dataset ({panel.hierarchy.M} series, "
          f"{panel.T} rows) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key=value config file (INI sections)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hiercast",
        description="Hierarchical forecasting: reconciliation and "
                    "neural-network disaggregation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--children-per-level", dest="children_per_level", type=_int_list)
    p.add_argument("--t", type=int)
    p.add_argument("--m-season", dest="m_season", type=int)
    p.add_argument("--base-level", dest="base_level", type=float)
    p.add_argument("--seasonal-amplitude", dest="seasonal_amplitude", type=float)
    p.add_argument("--trend", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--regime", choices=["static", "switching"])
    p.add_argument("--promo-prob", dest="promo_prob", type=float)
    p.add_argument("--promo-lift", dest="promo_lift", type=float)
    p.add_argument("--fixed-shares", dest="fixed_shares", type=_float_list)
    p.add_argument("--seed", type=int)
    p.add_argument("--start")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("forecast", help="fit the selected base model per node")
    _add_common(p)
    for flag in ("hierarchy", "observations", "exog", "split", "nodes", "out"):
        p.add_argument(f"--{flag}")
    p.add_argument("--horizon", type=int)
    p.add_argument("--m-season", dest="m_season", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--cv-start", dest="cv_start", type=int)
    p.add_argument("--cv-end", dest="cv_end", type=int)
    p.add_argument("--cv-step", dest="cv_step", type=int)
    p.add_argument("--include-narx", dest="include_narx", type=_bool)
    p.add_argument("--include-combinations", dest="include_combinations", type=_bool)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("reconcile", help="reconcile base forecasts")
    _add_common(p)
    for flag in ("hierarchy", "observations", "exog", "base", "split",
                 "errors", "out_dir"):
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)
    p.add_argument("--methods", type=_str_list)
    p.add_argument("--middle-level", dest="middle_level", type=int)
    p.add_argument("--shrinkage", type=float)
    p.set_defaults(func=cmd_reconcile)

    p = sub.add_parser("nnd", help="neural-network disaggregation end to end")
    _add_common(p)
    for flag in ("hierarchy", "observations", "exog", "split", "strategy",
                 "out_dir"):
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)
    p.add_argument("--horizon", type=int)
    p.add_argument("--m-season", dest="m_season", type=int)
    p.add_argument("--middle-level", dest="middle_level", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--n-dense", dest="n_dense", type=int)
    p.add_argument("--filters", type=int)
    p.add_argument("--n-conv", dest="n_conv", type=int)
    p.add_argument("--kernel-size", dest="kernel_size", type=int)
    p.add_argument("--grid", type=_bool)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_nnd)

    p = sub.add_parser("evaluate", help="score forecast sets and rank methods")
    _add_common(p)
    for flag in ("hierarchy", "observations", "exog", "split", "metric",
                 "out_dir"):
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)
    p.add_argument("--forecasts", type=_str_list)
    p.add_argument("--horizon", type=int)
    p.add_argument("--m-season", dest="m_season", type=int)
    p.add_argument("--significance", type=float)
    p.add_argument("--rank-tests", dest="rank_tests", type=_bool)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="true-vs-forecast SVG line plots")
    _add_common(p)
    for flag in ("hierarchy", "observations", "exog", "forecasts", "nodes",
                 "out_dir"):
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("fetch-italian",
                       help="download the public Italian grocery dataset "
                            "(network use is opt-in)")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--url")
    p.set_defaults(func=cmd_fetch_italian)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except HiercastError as exc:
        code = 2
        for cls, c in EXIT_CODES.items():
            if isinstance(exc, cls):
                code = c
        print(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
            "exit_code": code,
        }), file=sys.stderr)
        return code
    except np.linalg.LinAlgError as exc:
        print(json.dumps({
            "error": "LinAlgError",
            "message": str(exc),
            "exit_code": 4,
        }), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
