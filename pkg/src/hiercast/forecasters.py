"""Base univariate/dynamic forecasting models and forecast combination.

Every forecaster exposes fit(y, X=None) -> self and
forecast(h, X_future=None) -> ndarray of length h.  Model selection picks
the candidate with the lowest expanding-window mean MASE.
"""

import copy
from dataclasses import replace

import numpy as np

from . import kernels, neuralnet
from .errors import ConfigError, DataError, NumericError
from .evaluate import CVConfig, expanding_window_cv

# canonical tie-breaking order for model selection
ORDER = {"naive": 0, "snaive": 1, "arx": 2, "ets": 3, "narx": 4,
         "comb_mean": 5, "comb_cls": 6}

_ETS_GRID = np.round(np.arange(0.1, 1.0001, 0.1), 10)


def _check_series(y):
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise DataError("empty series")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains non-finite values")
    return y


class Naive:
    kind = "naive"

    def fit(self, y, X=None):
        y = _check_series(y)
        self.last_ = y[-1]
        return self

    def forecast(self, h, X_future=None):
        return np.full(h, self.last_)


class SeasonalNaive:
    kind = "snaive"

    def __init__(self, m_season):
        if m_season < 1:
            raise ConfigError("seasonal period must be >= 1")
        self.m_season = m_season

    def fit(self, y, X=None):
        y = _check_series(y)
        if len(y) < self.m_season:
            raise DataError(
                f"series length {len(y)} < seasonal period {self.m_season}"
            )
        self.season_ = y[-self.m_season:]
        return self

    def forecast(self, h, X_future=None):
        m = self.m_season
        return np.array([self.season_[i % m] for i in range(h)])


class Arx:
    """Autoregression with optional exogenous regressors, fit by least
    squares.  Lag order is chosen by AIC over 1..max_p when not given;
    first differencing is applied when the lag-1 autocorrelation exceeds
    0.95 (unless d is fixed).  Multi-step forecasts are recursive."""

    kind = "arx"

    def __init__(self, p=None, d=None, use_exog=True, max_p=14):
        self.p = p
        self.d = d
        self.use_exog = use_exog
        self.max_p = max_p

    def fit(self, y, X=None):
        y = _check_series(y)
        if np.ptp(y) == 0.0:
            # degenerate flat series: nothing to regress on
            self.constant_ = y[-1]
            return self
        self.constant_ = None
        X = self._exog(X, len(y))

        d = self.d
        if d is None:
            sd = y.std()
            r1 = float(np.corrcoef(y[1:], y[:-1])[0, 1]) if sd > 0 else 0.0
            d = 1 if r1 > 0.95 else 0
        if d:
            z = np.diff(y)
            Xz = X[1:] if X is not None else None
            if np.ptp(z) == 0.0:
                # exactly linear series: constant drift, nothing to regress on
                self.constant_ = None
                self.drift_ = z[-1]
                self.y_last_ = y[-1]
                self.d_ = 1
                self.p_ = 0
                return self
        else:
            z = y
            Xz = X
        self.drift_ = None
        n_x = Xz.shape[1] if Xz is not None else 0

        if self.p is not None:
            orders = [self.p]
        else:
            orders = [p for p in range(1, self.max_p + 1)
                      if len(z) - p > p + n_x + 1]
            if not orders:
                raise DataError(f"series too short for ARX (length {len(y)})")
        best = None
        for p in orders:
            if len(z) - p <= p + n_x + 1:
                raise DataError(f"series too short for ARX lag order {p}")
            try:
                coef, sse, n_eff = self._ls_fit(z, Xz, p)
            except NumericError:
                # a fixed order must fit; during automatic order selection a
                # rank-deficient candidate is simply skipped
                if self.p is not None:
                    raise
                continue
            aic = n_eff * np.log(max(sse / n_eff, 1e-300)) + 2.0 * (p + n_x + 1)
            if best is None or aic < best[0]:
                best = (aic, p, coef)
        if best is None:
            raise NumericError("rank-deficient ARX design matrix at every lag order")
        _, self.p_, self.coef_ = best
        self.d_ = d
        self.z_tail_ = z[len(z) - self.p_:] if self.p_ else np.zeros(0)
        self.y_last_ = y[-1]
        return self

    def _exog(self, X, n):
        if not self.use_exog or X is None:
            return None
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] != n:
            raise DataError(f"exog rows {X.shape[0]} != series length {n}")
        return X if X.shape[1] else None

    def _ls_fit(self, z, Xz, p):
        rows = len(z) - p
        cols = [np.ones(rows)]
        for lag in range(1, p + 1):
            cols.append(z[p - lag:len(z) - lag])
        if Xz is not None:
            cols.append(Xz[p:])
        A = np.column_stack(cols)
        b = z[p:]
        coef, res, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if rank < A.shape[1]:
            raise NumericError("rank-deficient ARX design matrix")
        resid = b - A @ coef
        return coef, float(resid @ resid), rows

    def forecast(self, h, X_future=None):
        if h == 0:
            return np.zeros(0)
        if self.constant_ is not None:
            return np.full(h, self.constant_)
        if self.drift_ is not None:
            return self.y_last_ + self.drift_ * np.arange(1, h + 1)
        has_exog = self.use_exog and (len(self.coef_) > 1 + self.p_)
        if has_exog:
            n_x = len(self.coef_) - 1 - self.p_
            if X_future is None:
                raise DataError("ARX fitted with exog needs future exog values")
            X_future = np.atleast_2d(np.asarray(X_future, dtype=float))
            if X_future.shape[0] < h or X_future.shape[1] != n_x:
                raise DataError(
                    f"future exog shape {X_future.shape} incompatible with "
                    f"horizon {h} and {n_x} regressors"
                )
        lags = list(self.z_tail_)
        out = np.empty(h)
        level = self.y_last_
        for i in range(h):
            feats = [1.0]
            feats += [lags[-lag] for lag in range(1, self.p_ + 1)]
            if has_exog:
                feats += list(X_future[i])
            z_hat = float(np.dot(self.coef_, feats))
            lags.append(z_hat)
            if self.d_:
                level += z_hat
                out[i] = level
            else:
                out[i] = z_hat
        return out


class Ets:
    """Grid-fit exponential smoothing: simple, Holt, or additive
    Holt-Winters.  Smoothing parameters come from a 0.1-step grid over
    (0, 1], minimizing the in-sample one-step SSE."""

    kind = "ets"

    def __init__(self, variant="ses", m_season=1):
        if variant not in ("ses", "holt", "hw"):
            raise ConfigError(f"unknown ETS variant {variant!r}")
        if variant == "hw" and m_season < 2:
            raise ConfigError("Holt-Winters needs a seasonal period >= 2")
        self.variant = variant
        self.m_season = m_season

    def fit(self, y, X=None):
        y = _check_series(y)
        v = self.variant
        if v == "ses":
            if len(y) < 2:
                raise DataError("SES needs at least 2 observations")
            best = None
            for a in _ETS_GRID:
                level, sse = kernels.ses_fit(y, a)
                if best is None or sse < best[0]:
                    best = (sse, a, level)
            _, self.alpha_, self.level_ = best
            self.trend_ = 0.0
            self.season_ = None
        elif v == "holt":
            if len(y) < 3:
                raise DataError("Holt needs at least 3 observations")
            best = None
            for a in _ETS_GRID:
                for b in _ETS_GRID:
                    level, trend, sse = kernels.holt_fit(y, a, b)
                    if best is None or sse < best[0]:
                        best = (sse, a, b, level, trend)
            _, self.alpha_, self.beta_, self.level_, self.trend_ = best
            self.season_ = None
        else:
            m = self.m_season
            if len(y) < 2 * m:
                raise DataError(
                    f"Holt-Winters needs at least {2 * m} observations, got {len(y)}"
                )
            best = None
            for a in _ETS_GRID:
                for b in _ETS_GRID:
                    for g in _ETS_GRID:
                        level, trend, season, sse = kernels.hw_add_fit(y, m, a, b, g)
                        if best is None or sse < best[0]:
                            best = (sse, a, b, g, level, trend, season)
            (_, self.alpha_, self.beta_, self.gamma_,
             self.level_, self.trend_, self.season_) = best
            self.t_end_ = len(y)
        return self

    def forecast(self, h, X_future=None):
        out = np.empty(h)
        for i in range(1, h + 1):
            f = self.level_ + i * self.trend_
            if self.season_ is not None:
                f += self.season_[(self.t_end_ + i - 1) % self.m_season]
            out[i - 1] = f
        return out


class Narx:
    """Neural autoregression: an MLP over (lags, exog) with scalar output,
    trained with the shared network engine.  Recursive multi-step
    forecasting as in Arx."""

    kind = "narx"

    def __init__(self, p=3, use_exog=True, hidden=(16, 16), train_config=None,
                 seed=0):
        if p < 1:
            raise ConfigError("NAR lag order must be >= 1")
        self.p = p
        self.use_exog = use_exog
        self.hidden = tuple(hidden)
        self.train_config = train_config or neuralnet.TrainConfig(
            learning_rate=0.01, max_epochs=300, patience=25, seed=seed,
        )
        self.seed = seed

    def fit(self, y, X=None):
        y = _check_series(y)
        p = self.p
        if self.use_exog and X is not None:
            X = np.atleast_2d(np.asarray(X, dtype=float))
            if X.shape[0] != len(y):
                raise DataError("exog rows do not match series length")
            if X.shape[1] == 0:
                X = None
        else:
            X = None
        if len(y) <= p + 2:
            raise DataError(f"series too short for NAR with lag order {p}")
        rows = len(y) - p
        feats = np.empty((rows, p + (X.shape[1] if X is not None else 0)))
        for i in range(rows):
            t = p + i
            feats[i, :p] = y[t - p:t][::-1]
            if X is not None:
                feats[i, p:] = X[t]
        targets = y[p:, None]
        spec = neuralnet.NetworkSpec(
            out_dim=1, exog_dim=feats.shape[1], window=0,
            mlp_widths=self.hidden, conv_filters=(),
        )
        cfg = replace(self.train_config, seed=self.seed)
        self.net_ = neuralnet.train(spec, (feats, np.zeros((rows, 0)), targets), cfg)
        self.n_x_ = X.shape[1] if X is not None else 0
        self.tail_ = list(y[-p:])
        return self

    def forecast(self, h, X_future=None):
        if h == 0:
            return np.zeros(0)
        if self.n_x_:
            if X_future is None:
                raise DataError("NARX fitted with exog needs future exog values")
            X_future = np.atleast_2d(np.asarray(X_future, dtype=float))
            if X_future.shape[0] < h or X_future.shape[1] != self.n_x_:
                raise DataError("future exog incompatible with fitted NARX")
        lags = list(self.tail_)
        out = np.empty(h)
        for i in range(h):
            feats = np.array(lags[-self.p:][::-1])
            if self.n_x_:
                feats = np.concatenate([feats, X_future[i]])
            pred = neuralnet.predict(self.net_, feats[None, :], np.zeros((1, 0)))
            out[i] = pred[0, 0]
            lags.append(out[i])
        return out


# ---------------------------------------------------------------------------
# Forecast combination
# ---------------------------------------------------------------------------

def combine_mean(member_forecasts):
    """Pointwise arithmetic mean of equal-horizon forecasts."""
    if not member_forecasts:
        raise ConfigError("no member forecasts to combine")
    mats = [np.asarray(f, dtype=float) for f in member_forecasts]
    n = len(mats[0])
    if any(len(m) != n for m in mats):
        raise ConfigError("member forecasts have different horizons")
    return np.mean(mats, axis=0)


def project_simplex(v):
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def cls_weights(member_preds, y, max_iter=5000, tol=1e-10):
    """Simplex-constrained least-squares weights by projected gradient.

    member_preds: (n_obs, n_members) matrix of held-out member forecasts,
    y: the realized values.  Degenerate all-identical members get uniform
    weights.
    """
    A = np.atleast_2d(np.asarray(member_preds, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, m = A.shape
    if m < 1:
        raise ConfigError("need at least one member")
    if n < m:
        raise ConfigError(f"held-out window ({n}) shorter than member count ({m})")
    if np.max(np.ptp(A, axis=1)) < 1e-12:
        return np.full(m, 1.0 / m)
    L = 2.0 * np.linalg.norm(A, 2) ** 2
    step = 1.0 / L
    beta = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        grad = 2.0 * A.T @ (A @ beta - y)
        new = project_simplex(beta - step * grad)
        if np.linalg.norm(new - beta) / step < tol:
            beta = new
            break
        beta = new
    return beta


class CombMean:
    kind = "comb_mean"

    def __init__(self, members):
        if not members:
            raise ConfigError("combination needs at least one member")
        self.members = list(members)

    def fit(self, y, X=None):
        self.fitted_ = [copy.deepcopy(m).fit(y, X) for m in self.members]
        return self

    def forecast(self, h, X_future=None):
        return combine_mean([m.forecast(h, X_future) for m in self.fitted_])


class CombCls:
    """Combination weighted by constrained least squares on a held-out tail
    of the training series."""

    kind = "comb_cls"

    def __init__(self, members, holdout=28):
        if not members:
            raise ConfigError("combination needs at least one member")
        self.members = list(members)
        self.holdout = holdout

    def fit(self, y, X=None):
        y = _check_series(y)
        hold = min(self.holdout, len(y) // 3)
        if hold < len(self.members):
            raise DataError(
                f"held-out window ({hold}) shorter than member count "
                f"({len(self.members)})"
            )
        cut = len(y) - hold
        X_head = X[:cut] if X is not None else None
        X_hold = X[cut:] if X is not None else None
        preds = []
        for m in self.members:
            fitted = copy.deepcopy(m).fit(y[:cut], X_head)
            preds.append(fitted.forecast(hold, X_hold))
        self.weights_ = cls_weights(np.column_stack(preds), y[cut:])
        self.fitted_ = [copy.deepcopy(m).fit(y, X) for m in self.members]
        return self

    def forecast(self, h, X_future=None):
        preds = np.column_stack([m.forecast(h, X_future) for m in self.fitted_])
        return preds @ self.weights_


# ---------------------------------------------------------------------------
# Model selection
# ---------------------------------------------------------------------------

def default_candidates(m_season=7, narx_seed=0, include_narx=True,
                       include_combinations=True):
    """The standard candidate pool for base-forecast selection."""
    cands = [Naive(), SeasonalNaive(m_season), Arx(use_exog=True),
             Ets("hw", m_season)]
    if include_narx:
        cands.append(Narx(p=m_season, seed=narx_seed))
    if include_combinations:
        members = [Arx(use_exog=True), Narx(p=m_season, seed=narx_seed),
                   Ets("hw", m_season)]
        cands.append(CombMean(members))
        cands.append(CombCls(members))
    return cands


def select_model(y, X, candidates, cv: CVConfig, m_season=1):
    """Pick the candidate with lowest expanding-window mean MASE, refit it
    on the full series, and return (fitted_model, kind, mean_score)."""
    if not candidates:
        raise ConfigError("no candidates given")
    results = []
    for idx, proto in enumerate(candidates):
        try:
            score, _ = expanding_window_cv(
                y, X, lambda: copy.deepcopy(proto), cv,
                metric="mase", m_season=m_season,
            )
        except (NumericError, DataError):
            continue
        results.append((score, ORDER.get(proto.kind, 99), idx, proto))
    if not results:
        raise NumericError("all model candidates failed cross-validation")
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    score, _, _, proto = results[0]
    fitted = copy.deepcopy(proto).fit(y, X)
    return fitted, proto.kind, score
