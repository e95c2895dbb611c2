"""Neural-network disaggregation: windowing, feature assembly, the
train/disaggregate two-step procedure, and the hierarchy-wide strategies
(standard top-down, iterative top-down, middle-out).

The network maps a lag window of a parent series plus child-level
exogenous/calendar features to all child series at once.  Published
forecast sets are re-aggregated from the bottom level, so they are exactly
coherent; the raw network violation is reported as a diagnostic.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import neuralnet
from .errors import ConfigError, DataError
from .evaluate import CVConfig
from .forecasters import Ets, Naive, SeasonalNaive, select_model
from .hierarchy import SeriesPanel, build_summing_matrix, aggregate
from .seeding import derive_seed


@dataclass(frozen=True)
class WindowConfig:
    w: int = 30          # lag window length; the current step is included
    hop: int = 1

    def __post_init__(self):
        if self.w < 1 or self.hop < 1:
            raise ConfigError("window length and hop must be >= 1")


@dataclass
class ArchConfig:
    """Architecture knobs for the disaggregation network."""

    hidden: int = 64
    n_dense: int = 3
    filters: int = 16
    n_conv: int = 6
    kernel_size: int = 4
    grid: bool = False               # grid-search F x K x H when True
    filters_grid: tuple = (16, 32, 64)
    kernel_grid: tuple = (4, 8, 16)
    hidden_grid: tuple = (64, 128, 256)


@dataclass
class NndConfig:
    """Everything a hierarchy-wide NND run needs."""

    window: WindowConfig = field(default_factory=WindowConfig)
    train: neuralnet.TrainConfig = field(default_factory=neuralnet.TrainConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    seed: int = 0
    jobs: int = 1
    cv: CVConfig | None = None       # for internal F* selection


@dataclass
class DisaggregationModel:
    parent_id: str
    child_ids: tuple
    net: neuralnet.TrainedNetwork
    feature_names: list
    window: WindowConfig


def make_windows(series, cfg: WindowConfig):
    """Sliding lag windows; the window for target index t covers
    t-w+1..t inclusive.  Returns (windows (n, w), target_indices)."""
    series = np.asarray(series, dtype=float).ravel()
    w = cfg.w
    if len(series) < w:
        raise DataError(f"series length {len(series)} shorter than window {w}")
    targets = np.arange(w - 1, len(series), cfg.hop)
    windows = np.stack([series[t - w + 1:t + 1] for t in targets])
    return windows, targets


def feature_matrix(panel: SeriesPanel, child_ids):
    """Per-step feature rows: child exog columns in canonical child order,
    then calendar dummies (one-hot, first category dropped)."""
    names, parts = [], []
    for child in child_ids:
        c_names, mat = panel.exog_for(child)
        for j, var in enumerate(c_names):
            names.append(f"{child}:{var}")
            parts.append(mat[:, j])
    cal_names, cal = panel.calendar_features()
    names.extend(cal_names)
    for j in range(cal.shape[1]):
        parts.append(cal[:, j])
    if not parts:
        return [], np.zeros((panel.T, 0))
    return names, np.column_stack(parts)


def assemble_features(panel: SeriesPanel, child_ids, t):
    """Feature vector for one target step."""
    names, mat = feature_matrix(panel, child_ids)
    if not 0 <= t < panel.T:
        raise DataError(f"no features available at step {t}")
    return names, mat[t]


def train_nnd(panel: SeriesPanel, parent_id, child_ids, cfg: NndConfig,
              end=None) -> DisaggregationModel:
    """Step 1: fit the disaggregation network on observed history.

    Uses panel rows [0, end) (default: the whole panel).  The window input
    is the parent series, the target is the child vector at the window's
    last step, and the exogenous branch sees the child features.
    """
    end = panel.T if end is None else end
    sub = panel.slice_rows(0, end) if end < panel.T else panel
    parent = sub.series(parent_id)
    child_ids = tuple(child_ids)
    targets_mat = np.column_stack([sub.series(c) for c in child_ids])

    windows, t_idx = make_windows(parent, cfg.window)
    names, feats_all = feature_matrix(sub, child_ids)
    feats = feats_all[t_idx]
    targets = targets_mat[t_idx]

    seed = derive_seed(cfg.seed, f"nnd:{parent_id}")
    tcfg = replace(cfg.train, seed=seed)
    arch = cfg.arch
    m = len(child_ids)
    d = feats.shape[1]
    if arch.grid:
        specs = neuralnet.spec_grid(
            out_dim=m, exog_dim=d, window=cfg.window.w,
            filters_grid=arch.filters_grid, kernel_grid=arch.kernel_grid,
            hidden_grid=arch.hidden_grid, n_conv=arch.n_conv,
            n_dense=arch.n_dense,
        )
        _, net = neuralnet.grid_search(specs, (feats, windows, targets), tcfg)
    else:
        spec = neuralnet.NetworkSpec(
            out_dim=m, exog_dim=d, window=cfg.window.w,
            mlp_widths=(arch.hidden,) * arch.n_dense,
            conv_filters=(arch.filters,) * arch.n_conv,
            kernel_size=arch.kernel_size,
        )
        net = neuralnet.train(spec, (feats, windows, targets), tcfg)
    return DisaggregationModel(
        parent_id=parent_id, child_ids=child_ids, net=net,
        feature_names=names, window=cfg.window,
    )


def disaggregate(model: DisaggregationModel, parent_forecast, features,
                 parent_history) -> np.ndarray:
    """Step 2: feed parent forecasts through the trained network.

    Each step's window is filled from the tail of the actual history plus
    the parent forecast values consumed so far (the current step's parent
    value is the forecast itself).  Returns (h, n_children) in original
    scale.
    """
    parent_forecast = np.asarray(parent_forecast, dtype=float).ravel()
    if not np.all(np.isfinite(parent_forecast)):
        raise DataError("parent forecast contains non-finite values")
    h = len(parent_forecast)
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] < h:
        raise DataError(f"need {h} feature rows, got {features.shape[0]}")
    hist = list(np.asarray(parent_history, dtype=float).ravel())
    w = model.window.w
    if len(hist) < w - 1:
        raise DataError(
            f"insufficient history ({len(hist)}) to fill a window of {w}"
        )
    out = np.empty((h, len(model.child_ids)))
    for i in range(h):
        hist.append(parent_forecast[i])
        window = np.asarray(hist[-w:])
        out[i] = neuralnet.predict(model.net, features[i][None, :], window[None, :])[0]
    return out


def raw_violation(child_forecasts, parent_forecast):
    """Scale-normalized mean gap between summed children and the parent."""
    gap = np.abs(child_forecasts.sum(axis=1) - parent_forecast).mean()
    scale = np.abs(parent_forecast).mean()
    return float(gap / scale) if scale > 0 else float(gap)


# ---------------------------------------------------------------------------
# Hierarchy-wide strategies
# ---------------------------------------------------------------------------

def _default_root_candidates(m_season, seed):
    return [Naive(), SeasonalNaive(m_season), Ets("hw", m_season)]


def _root_forecast(panel, node_id, n_train, h, cfg, m_season):
    y = panel.series(node_id)[:n_train]
    cv = cfg.cv or CVConfig(
        starting_window=max(2 * m_season + 1, n_train - 3 * h),
        ending_window=n_train - h, horizon=h, step=h,
    )
    cands = _default_root_candidates(m_season, cfg.seed)
    fitted, _, _ = select_model(y, None, cands, cv, m_season=m_season)
    return fitted.forecast(h)


def _train_models(panel, parents_children, cfg, n_train):
    """Train one model per (parent, children) pair, optionally in parallel;
    results keyed by parent and independent of scheduling."""
    def job(pair):
        parent_id, child_ids = pair
        return parent_id, train_nnd(panel, parent_id, child_ids, cfg, end=n_train)

    if cfg.jobs > 1 and len(parents_children) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = dict(pool.map(job, parents_children))
    else:
        results = dict(job(pair) for pair in parents_children)
    return results


@dataclass
class NndResult:
    values: np.ndarray          # (h, M) coherent, canonical node order
    models: dict                # parent_id -> DisaggregationModel
    raw_violations: dict        # parent_id -> scale-normalized raw gap
    root_forecast: np.ndarray


def _publish(panel, bottom_values):
    S = build_summing_matrix(panel.hierarchy)
    return aggregate(S, bottom_values)


def nnd_standard_topdown(panel: SeriesPanel, n_train, h, cfg: NndConfig,
                         root_forecast=None, m_season=7) -> NndResult:
    """One model from the root straight to the bottom level; bottom
    forecasts are re-aggregated upward, so coherence is exact."""
    hier = panel.hierarchy
    if hier.K < 2:
        raise DataError("disaggregation needs at least 2 levels")
    if n_train + h > panel.T:
        raise DataError("test horizon extends past the panel")
    root = hier.root_id
    if root_forecast is None:
        root_forecast = _root_forecast(panel, root, n_train, h, cfg, m_season)
    model = _train_models(panel, [(root, tuple(hier.bottom_ids))], cfg, n_train)[root]
    _, feats_all = feature_matrix(panel, model.child_ids)
    bottom = disaggregate(
        model, root_forecast, feats_all[n_train:n_train + h],
        panel.series(root)[:n_train],
    )
    return NndResult(
        values=_publish(panel, bottom),
        models={root: model},
        raw_violations={root: raw_violation(bottom, np.asarray(root_forecast))},
        root_forecast=np.asarray(root_forecast, dtype=float),
    )


def nnd_iterative_topdown(panel: SeriesPanel, n_train, h, cfg: NndConfig,
                          root_forecast=None, m_season=7) -> NndResult:
    """One model per non-leaf node; forecasts cascade level by level, and
    the published set is re-aggregated from the bottom."""
    hier = panel.hierarchy
    if hier.K < 2:
        raise DataError("disaggregation needs at least 2 levels")
    if n_train + h > panel.T:
        raise DataError("test horizon extends past the panel")
    root = hier.root_id
    if root_forecast is None:
        root_forecast = _root_forecast(panel, root, n_train, h, cfg, m_season)

    pairs = []
    for level in range(hier.K - 1):
        for node_id in hier.level_ids(level):
            pairs.append((node_id, tuple(hier.children(node_id))))
    models = _train_models(panel, pairs, cfg, n_train)

    forecasts = {root: np.asarray(root_forecast, dtype=float)}
    violations = {}
    for level in range(hier.K - 1):
        for node_id in hier.level_ids(level):
            model = models[node_id]
            try:
                _, feats_all = feature_matrix(panel, model.child_ids)
                child_fc = disaggregate(
                    model, forecasts[node_id],
                    feats_all[n_train:n_train + h],
                    panel.series(node_id)[:n_train],
                )
            except Exception as exc:
                raise type(exc)(f"[node {node_id}] {exc}") from exc
            violations[node_id] = raw_violation(child_fc, forecasts[node_id])
            for j, child in enumerate(model.child_ids):
                forecasts[child] = child_fc[:, j]
    bottom = np.column_stack([forecasts[n] for n in hier.bottom_ids])
    return NndResult(
        values=_publish(panel, bottom),
        models=models,
        raw_violations=violations,
        root_forecast=np.asarray(root_forecast, dtype=float),
    )


def nnd_middle_out(panel: SeriesPanel, n_train, h, middle_level,
                   cfg: NndConfig, m_season=7) -> NndResult:
    """Model selection at the middle level, NND cascade below it, exact
    bottom-up re-aggregation through and above.  middle_level 0 reduces to
    the iterative top-down cascade."""
    hier = panel.hierarchy
    if not 0 <= middle_level <= hier.K - 2:
        raise DataError(
            f"middle level {middle_level} must lie in [0, {hier.K - 2}]"
        )
    if middle_level == 0:
        return nnd_iterative_topdown(panel, n_train, h, cfg, m_season=m_season)

    forecasts = {}
    for node_id in hier.level_ids(middle_level):
        forecasts[node_id] = _root_forecast(panel, node_id, n_train, h, cfg, m_season)

    pairs = []
    for level in range(middle_level, hier.K - 1):
        for node_id in hier.level_ids(level):
            pairs.append((node_id, tuple(hier.children(node_id))))
    models = _train_models(panel, pairs, cfg, n_train)

    violations = {}
    for level in range(middle_level, hier.K - 1):
        for node_id in hier.level_ids(level):
            model = models[node_id]
            _, feats_all = feature_matrix(panel, model.child_ids)
            child_fc = disaggregate(
                model, forecasts[node_id],
                feats_all[n_train:n_train + h],
                panel.series(node_id)[:n_train],
            )
            violations[node_id] = raw_violation(child_fc, np.asarray(forecasts[node_id]))
            for j, child in enumerate(model.child_ids):
                forecasts[child] = child_fc[:, j]
    bottom = np.column_stack([forecasts[n] for n in hier.bottom_ids])
    return NndResult(
        values=_publish(panel, bottom),
        models=models,
        raw_violations=violations,
        root_forecast=np.asarray(forecasts.get(hier.root_id, np.zeros(h)), dtype=float),
    )
