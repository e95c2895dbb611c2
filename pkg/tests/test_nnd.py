import numpy as np
import pytest

from hiercast import (ArchConfig, DataError, Hierarchy, NndConfig,
                      WindowConfig, build_summing_matrix, coherence_violation,
                      disaggregate, make_windows, nnd_iterative_topdown,
                      nnd_middle_out, nnd_standard_topdown, raw_violation,
                      train_nnd)
from hiercast.neuralnet import TrainConfig
from hiercast.nnd import assemble_features, feature_matrix

from conftest import make_hierarchy, panel_from_bottom


def tiny_cfg(**kw):
    """Small, fast network for structural tests."""
    defaults = dict(
        window=WindowConfig(w=3),
        train=TrainConfig(max_epochs=2, patience=1, batch_size=8),
        arch=ArchConfig(hidden=4, n_dense=1, filters=2, n_conv=1,
                        kernel_size=2),
        seed=0,
    )
    defaults.update(kw)
    return NndConfig(**defaults)


def fixed_share_panel(shares=(0.3, 0.7), T=200, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    h = make_hierarchy((len(shares),))
    t = np.arange(T)
    top = 20.0 + 5.0 * np.sin(2 * np.pi * t / 7) + rng.standard_normal(T) * noise
    bottom = np.outer(top, shares)
    return panel_from_bottom(h, bottom)


class TestMakeWindows:
    def test_length5_w3_enumeration(self):
        wins, targets = make_windows([1, 2, 3, 4, 5], WindowConfig(w=3))
        assert wins.tolist() == [[1, 2, 3], [2, 3, 4], [3, 4, 5]]
        assert targets.tolist() == [2, 3, 4]

    def test_window_equals_length_single_window(self):
        wins, targets = make_windows([1, 2, 3], WindowConfig(w=3))
        assert wins.shape == (1, 3)
        assert targets.tolist() == [2]

    def test_hop_two(self):
        wins, targets = make_windows(np.arange(7), WindowConfig(w=3, hop=2))
        assert targets.tolist() == [2, 4, 6]

    def test_window_ends_at_target(self):
        y = np.arange(10.0) * 3
        wins, targets = make_windows(y, WindowConfig(w=4))
        assert np.array_equal(wins[:, -1], y[targets])

    def test_no_lookahead(self):
        # values after target t never enter the window for t
        y = np.arange(10.0)
        wins, targets = make_windows(y, WindowConfig(w=4))
        spiked = y.copy()
        spiked[targets[0] + 1] = 1e9
        wins2, _ = make_windows(spiked, WindowConfig(w=4))
        assert np.array_equal(wins[0], wins2[0])

    def test_too_short_rejected(self):
        with pytest.raises(DataError):
            make_windows([1, 2], WindowConfig(w=3))

    def test_bad_config_rejected(self):
        from hiercast import ConfigError
        with pytest.raises(ConfigError):
            WindowConfig(w=0)


class TestFeatures:
    def _promo_panel(self, rng):
        h = make_hierarchy((2,))
        T = 14
        exog = {
            "g00": (["promo"], rng.integers(0, 2, (T, 1)).astype(float)),
            "g01": (["promo"], rng.integers(0, 2, (T, 1)).astype(float)),
        }
        return panel_from_bottom(h, rng.random((T, 2)) + 1, exog=exog,
                                 calendar=("dow",))

    def test_promo_plus_dow_vector_length(self, rng):
        panel = self._promo_panel(rng)
        names, vec = assemble_features(panel, ["g00", "g01"], 3)
        assert len(vec) == 2 + 6
        assert names[:2] == ["g00:promo", "g01:promo"]
        assert names[2:] == [f"dow_{i}" for i in range(1, 7)]

    def test_no_exog_no_calendar_empty(self, rng):
        panel = fixed_share_panel(T=20)
        names, mat = feature_matrix(panel, list(panel.hierarchy.bottom_ids))
        assert names == []
        assert mat.shape == (20, 0)

    def test_out_of_range_step_rejected(self, rng):
        panel = self._promo_panel(rng)
        with pytest.raises(DataError):
            assemble_features(panel, ["g00", "g01"], 99)


class TestTrainDisaggregate:
    def test_fixed_shares_recovered_within_two_percent(self):
        panel = fixed_share_panel((0.3, 0.7), T=250)
        cfg = NndConfig(
            window=WindowConfig(w=7),
            train=TrainConfig(learning_rate=0.003, max_epochs=250,
                              patience=40, batch_size=16),
            arch=ArchConfig(hidden=16, n_dense=2, filters=4, n_conv=2,
                            kernel_size=3),
            seed=1,
        )
        n_train, h = 220, 14
        model = train_nnd(panel, "total", panel.hierarchy.bottom_ids, cfg,
                          end=n_train)
        parent = panel.series("total")
        _, feats = feature_matrix(panel, model.child_ids)
        out = disaggregate(model, parent[n_train:n_train + h],
                           feats[n_train:n_train + h], parent[:n_train])
        truth = np.outer(parent[n_train:n_train + h], [0.3, 0.7])
        rel = np.abs(out - truth) / np.abs(truth)
        assert rel.max() < 0.02

    def test_seed_determinism(self):
        panel = fixed_share_panel(T=60)
        cfg = tiny_cfg(seed=5)
        kids = panel.hierarchy.bottom_ids
        m1 = train_nnd(panel, "total", kids, cfg, end=50)
        m2 = train_nnd(panel, "total", kids, cfg, end=50)
        for a, b in zip(m1.net.params, m2.net.params):
            assert np.array_equal(a, b)

    def test_nonfinite_parent_forecast_rejected(self):
        panel = fixed_share_panel(T=60)
        model = train_nnd(panel, "total", panel.hierarchy.bottom_ids,
                          tiny_cfg(), end=50)
        with pytest.raises(DataError):
            disaggregate(model, [np.nan], np.zeros((1, 0)), np.ones(10))

    def test_insufficient_history_rejected(self):
        panel = fixed_share_panel(T=60)
        model = train_nnd(panel, "total", panel.hierarchy.bottom_ids,
                          tiny_cfg(window=WindowConfig(w=10)), end=50)
        with pytest.raises(DataError, match="history"):
            disaggregate(model, [1.0], np.zeros((1, 0)), np.ones(3))


class TestRawViolation:
    def test_hand_example(self):
        children = np.array([[1.0, 2.0]])   # sums to 3
        assert raw_violation(children, np.array([2.0])) == pytest.approx(0.5)

    def test_zero_gap(self):
        children = np.array([[1.0, 2.0], [2.0, 2.0]])
        assert raw_violation(children, np.array([3.0, 4.0])) == 0.0


def italian_hierarchy():
    # 1 store, 4 brands, 42/45/10/21 items
    nodes = [("store", None, 0)]
    for b, n_items in enumerate([42, 45, 10, 21]):
        brand = f"b{b}"
        nodes.append((brand, "store", 1))
        nodes.extend((f"{brand}_i{i:03d}", brand, 2) for i in range(n_items))
    return Hierarchy.from_nodes(nodes)


def walmart_hierarchy():
    # total, 3 states, 4/3/3 stores, 3 categories per store
    nodes = [("total", None, 0)]
    for s, n_stores in enumerate([4, 3, 3]):
        state = f"s{s}"
        nodes.append((state, "total", 1))
        for j in range(n_stores):
            store = f"{state}_d{j}"
            nodes.append((store, state, 2))
            nodes.extend((f"{store}_c{c}", store, 3) for c in range(3))
    return Hierarchy.from_nodes(nodes)


def coherent_panel_for(hier, T, seed=0):
    rng = np.random.default_rng(seed)
    m = len(hier.bottom_ids)
    bottom = rng.random((T, m)) + 5.0
    return panel_from_bottom(hier, bottom)


class TestStrategies:
    def test_nnd1_single_model_italian_width(self):
        panel = coherent_panel_for(italian_hierarchy(), 40)
        res = nnd_standard_topdown(panel, 30, 5, tiny_cfg(), m_season=7)
        assert len(res.models) == 1
        model = res.models["store"]
        assert len(model.child_ids) == 118
        S = build_summing_matrix(panel.hierarchy)
        assert coherence_violation(S, res.values) <= 1e-9

    def test_nnd2_model_count_italian(self):
        panel = coherent_panel_for(italian_hierarchy(), 40)
        res = nnd_iterative_topdown(panel, 30, 5, tiny_cfg(), m_season=7)
        assert len(res.models) == 5

    def test_nnd2_model_count_walmart(self):
        panel = coherent_panel_for(walmart_hierarchy(), 40)
        res = nnd_iterative_topdown(panel, 30, 5, tiny_cfg(), m_season=7)
        assert len(res.models) == 14
        S = build_summing_matrix(panel.hierarchy)
        assert coherence_violation(S, res.values) <= 1e-9

    def test_nnd1_equals_nnd2_on_two_levels(self):
        panel = fixed_share_panel(T=80)
        cfg = tiny_cfg(seed=3)
        r1 = nnd_standard_topdown(panel, 60, 7, cfg, m_season=7)
        r2 = nnd_iterative_topdown(panel, 60, 7, cfg, m_season=7)
        assert np.array_equal(r1.values, r2.values)

    def test_middle_out_zero_reduces_to_nnd2(self):
        panel = coherent_panel_for(make_hierarchy((2, 2)), 60)
        cfg = tiny_cfg(seed=2)
        r_mo = nnd_middle_out(panel, 45, 5, 0, cfg, m_season=7)
        r_2 = nnd_iterative_topdown(panel, 45, 5, cfg, m_season=7)
        assert np.array_equal(r_mo.values, r_2.values)

    def test_middle_out_level_one_counts_and_coherence(self):
        hier = make_hierarchy((4, 2))
        panel = coherent_panel_for(hier, 70)
        res = nnd_middle_out(panel, 55, 5, 1, tiny_cfg(), m_season=7)
        # one disaggregation model per middle-level node
        assert sorted(res.models) == sorted(hier.level_ids(1))
        S = build_summing_matrix(hier)
        assert coherence_violation(S, res.values) <= 1e-9

    def test_middle_out_invalid_level(self):
        panel = coherent_panel_for(make_hierarchy((2, 2)), 60)
        with pytest.raises(DataError):
            nnd_middle_out(panel, 45, 5, 2, tiny_cfg())

    def test_parallel_jobs_deterministic(self):
        panel = coherent_panel_for(make_hierarchy((3, 2)), 60)
        r1 = nnd_iterative_topdown(panel, 45, 5, tiny_cfg(jobs=1), m_season=7)
        r2 = nnd_iterative_topdown(panel, 45, 5, tiny_cfg(jobs=4), m_season=7)
        assert np.array_equal(r1.values, r2.values)

    def test_horizon_past_panel_rejected(self):
        panel = fixed_share_panel(T=60)
        with pytest.raises(DataError):
            nnd_standard_topdown(panel, 55, 10, tiny_cfg())

    def test_single_level_hierarchy_rejected(self):
        h = Hierarchy.from_nodes([("only", None, 0)])
        ts = np.datetime64("2020-01-01", "s") + np.arange(30) * np.timedelta64(86400, "s")
        from hiercast import SeriesPanel
        panel = SeriesPanel(hierarchy=h, timestamps=ts,
                            values=np.ones((30, 1)))
        with pytest.raises(DataError):
            nnd_standard_topdown(panel, 20, 5, tiny_cfg())

    def test_raw_violation_reported_per_parent(self):
        panel = coherent_panel_for(make_hierarchy((2, 2)), 60)
        res = nnd_iterative_topdown(panel, 45, 5, tiny_cfg(), m_season=7)
        assert set(res.raw_violations) == {"total", "g00", "g01"}
        for v in res.raw_violations.values():
            assert np.isfinite(v) and v >= 0
