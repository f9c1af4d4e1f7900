"""Scoring: tick loss, log predictive likelihood, tables, paths, calibration."""

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bnpforecast.data_pipeline import AlignmentError, parse_quarter
from bnpforecast.evaluation import (
    P_GRID,
    SUBSAMPLE_WINDOWS,
    PitSeries,
    ScorePanel,
    cumulative_path,
    kolmogorov_halfwidth,
    log_pred_likelihood,
    mse,
    pit_compute,
    quantile_score,
    relative_table,
    rs_diagnostic,
    score_forecasts,
    subsample_average,
    write_calibration_csv,
    write_cumulative_csv,
    write_relative_table_csv,
    write_scores_csv,
    write_subsample_csv,
)
from bnpforecast.model_engine import PredictiveDraws


def _panel(model_id, dates, y, point, lpls, qs_by_p):
    y = np.asarray(y, float)
    point = np.asarray(point, float)
    return ScorePanel(model_id=model_id, origin_dates=np.asarray(dates),
                      y_true=y, sq_errors=(y - point) ** 2,
                      lpls=np.asarray(lpls, float),
                      qs={p: np.asarray(v, float) for p, v in qs_by_p.items()})


# ---------------------------------------------------------------------------
# tick loss


def test_quantile_score_hand_cases():
    assert quantile_score(2.0, 1.0, 0.95) == pytest.approx(0.95)
    assert quantile_score(1.0, 2.0, 0.05) == pytest.approx(0.95)
    assert quantile_score(3.0, 3.0, 0.5) == 0.0
    assert quantile_score(0.0, 2.5, 0.9) == pytest.approx(0.25)
    assert quantile_score(-3.0, -1.0, 0.1) == pytest.approx(1.8)
    with pytest.raises(ValueError):
        quantile_score(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        quantile_score(1.0, 1.0, 1.0)


@given(y=st.floats(-50, 50), q=st.floats(-50, 50),
       p=st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_quantile_score_nonnegative(y, q, p):
    s = quantile_score(y, q, p)
    assert s >= 0.0
    if y == q:
        assert s == 0.0
    elif abs(y - q) > 1e-9:
        assert s > 0.0


def test_sample_quantile_minimizes_tick_loss():
    """Exhaustive check on small samples: among the draws themselves the
    inverse-CDF sample quantile attains the smallest average tick loss."""
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(3, 12))
        d = np.sort(np.round(rng.standard_normal(n), 3))
        p = float(rng.choice(P_GRID))
        qstar = float(d[math.ceil(n * p) - 1])
        loss_star = np.mean([quantile_score(y, qstar, p) for y in d])
        best = min(np.mean([quantile_score(y, float(c), p) for y in d])
                   for c in d)
        assert loss_star <= best + 1e-12


# ---------------------------------------------------------------------------
# log predictive likelihood


def test_lpl_standard_normal_peak():
    val = log_pred_likelihood([(0.0, 0.0, 1.0)], 0.0)
    assert val == pytest.approx(-0.5 * math.log(2.0 * math.pi), abs=1e-12)
    assert val == pytest.approx(-0.91894, abs=5e-6)


def test_lpl_duplicate_and_order_invariance():
    comps = [(0.4, 0.1, 0.8), (-0.2, 0.0, 1.5), (0.3, -0.5, 0.6)]
    base = log_pred_likelihood(comps, 0.7)
    assert log_pred_likelihood(comps[::-1], 0.7) == pytest.approx(base, abs=1e-13)
    assert log_pred_likelihood(comps * 3, 0.7) == pytest.approx(base, abs=1e-13)
    one = log_pred_likelihood([(0.4, 0.1, 0.8)], 0.7)
    two = log_pred_likelihood([(0.4, 0.1, 0.8)] * 2, 0.7)
    assert two == pytest.approx(one, abs=1e-13)


def test_lpl_three_draw_summation_oracle():
    """Extended-precision direct summation of the mixture density."""
    comps = [
        (0.4, 0.1, 0.8),
        (-0.2, 0.0, 1.5),
        (0.1, np.array([-1.0, 0.5]), np.array([0.6, 0.9]),
         np.array([0.3, 0.7])),
    ]
    y = 0.25
    ld = np.longdouble
    dens = ld(0)
    for comp in comps:
        if len(comp) == 3:
            m, off, v = comp
            pieces = [(ld(m) + ld(off), ld(v), ld(1))]
        else:
            m, offs, vs, ws = comp
            wsum = ld(np.sum(ws))
            pieces = [(ld(m) + ld(o), ld(v), ld(w) / wsum)
                      for o, v, w in zip(offs, vs, ws)]
        for mean, var, weight in pieces:
            dens += weight * np.exp(-(ld(y) - mean) ** 2 / (2 * var)) \
                / np.sqrt(2 * np.pi * var)
    oracle = float(np.log(dens / ld(len(comps))))
    assert log_pred_likelihood(comps, y) == pytest.approx(oracle, abs=1e-12)


def test_lpl_mixture_matches_scipy():
    m, offs, vs, ws = 0.2, np.array([-1.0, 0.0, 2.0]), \
        np.array([0.5, 1.0, 0.25]), np.array([0.2, 0.5, 0.3])
    y = 0.6
    dens = np.sum(ws / ws.sum() * stats.norm.pdf(y, m + offs, np.sqrt(vs)))
    assert log_pred_likelihood([(m, offs, vs, ws)], y) == \
        pytest.approx(math.log(dens), abs=1e-12)


def test_lpl_far_tail_stays_finite():
    val = log_pred_likelihood([(0.0, 0.0, 1.0)], 1e4)
    assert np.isfinite(val)
    assert val == pytest.approx(-0.5 * (math.log(2.0 * math.pi) + 1e8))
    # far-separated components: log-space averaging, no underflow to -inf
    two = log_pred_likelihood([(0.0, 0.0, 1.0), (1e4, 0.0, 1.0)], 1e4)
    assert two == pytest.approx(-0.5 * math.log(2.0 * math.pi) - math.log(2.0),
                                abs=1e-9)


def test_lpl_zero_variance_limits():
    assert log_pred_likelihood([(1.5, 0.0, 0.0)], 1.5) == math.inf
    assert log_pred_likelihood([(1.5, 0.0, 0.0)], 2.0) == -math.inf
    mixed = log_pred_likelihood([(1.5, 0.0, 0.0), (0.0, 0.0, 1.0)], 2.0)
    assert np.isfinite(mixed)
    with pytest.raises(ValueError):
        log_pred_likelihood([], 0.0)


# ---------------------------------------------------------------------------
# relative tables


def test_mse_hand_value():
    assert mse([1.0, -2.0, 3.0]) == pytest.approx(14.0 / 3.0)


def test_relative_table_self_benchmark_is_exact():
    dates = np.arange(8000, 8010)
    rng = np.random.default_rng(3)
    qs = {p: np.abs(rng.standard_normal(10)) for p in (0.05, 0.5)}
    bench = _panel("UC-SV", dates, rng.standard_normal(10),
                   rng.standard_normal(10), rng.standard_normal(10), qs)
    rows = relative_table({"UC-SV": bench}, "UC-SV")
    assert len(rows) == 1
    assert rows[0]["mse_ratio"] == 1.0
    assert rows[0]["lpl_diff"] == 0.0
    assert rows[0]["qs_ratio_0.05"] == 1.0
    assert rows[0]["mse_level"] == pytest.approx(np.mean(bench.sq_errors))


def test_relative_table_hand_computed():
    dates = np.arange(8000, 8004)
    y = np.array([1.0, 2.0, 3.0, 4.0])
    bench_pt = y - np.array([2.0, -2.0, 2.0, -2.0])
    model_pt = y - np.array([1.0, -1.0, 1.0, 1.0])
    bench = _panel("UC-SV", dates, y, bench_pt, [0.1, 0.2, 0.3, 0.4],
                   {0.5: [1.0, 1.0, 2.0, 4.0]})
    model = _panel("GP-DPM", dates, y, model_pt, [0.5, 0.5, 0.5, 0.5],
                   {0.5: [1.0, 1.0, 1.0, 1.0]})
    rows = relative_table({"UC-SV": bench, "GP-DPM": model}, "UC-SV")
    by_model = {r["model"]: r for r in rows}
    # halved absolute errors square to a quarter of the benchmark MSE
    assert by_model["GP-DPM"]["mse_ratio"] == pytest.approx(0.25)
    assert by_model["GP-DPM"]["lpl_diff"] == pytest.approx(0.5 - 0.25)
    assert by_model["GP-DPM"]["qs_ratio_0.5"] == pytest.approx(1.0 / 2.0)
    assert by_model["UC-SV"]["mse_ratio"] == 1.0
    assert by_model["UC-SV"]["lpl_diff"] == 0.0
    assert [r["model"] for r in rows] == sorted(by_model)


def test_relative_table_alignment_errors():
    dates = np.arange(8000, 8004)
    rng = np.random.default_rng(3)
    mk = lambda d: _panel("M", d, np.ones(d.size), np.zeros(d.size),
                          np.zeros(d.size), {0.5: np.ones(d.size)})
    bench = mk(dates)
    bench.model_id = "B"
    with pytest.raises(ValueError, match="missing"):
        relative_table({"M": mk(dates)}, "B")
    shifted = mk(dates + 1)
    with pytest.raises(AlignmentError):
        relative_table({"B": bench, "M": shifted}, "B")


# ---------------------------------------------------------------------------
# cumulative paths and subsamples


def test_cumulative_path_cases():
    s = np.array([0.3, 0.1, -0.2])
    assert np.array_equal(cumulative_path(s, s), np.zeros(3))
    adv = np.full(10, 0.25)
    path = cumulative_path(adv + 0.1, adv)
    assert path[-1] == pytest.approx(1.0)
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal(20), rng.standard_normal(20)
    run, expect = 0.0, []
    for ai, bi in zip(a, b):
        run += ai - bi
        expect.append(run)
    assert np.allclose(cumulative_path(a, b), expect, atol=1e-12)
    # lower-is-better scores flip the orientation so up still means better
    assert np.allclose(cumulative_path(a, b, lower_is_better=True),
                       -np.array(expect), atol=1e-12)
    with pytest.raises(AlignmentError):
        cumulative_path(a, b[:-1])


def test_subsample_average_full_span_and_identity():
    dates = np.arange(parse_quarter("1995Q1"), parse_quarter("1995Q1") + 12)
    rng = np.random.default_rng(2)
    s = np.abs(rng.standard_normal(12)) + 0.1
    b = np.abs(rng.standard_normal(12)) + 0.1
    full = subsample_average(dates, s, b,
                             windows=(("all", "1995Q1", "1997Q4"),))
    assert set(full) == {"all"}
    assert full["all"] == pytest.approx(np.mean(s) / np.mean(b))
    same = subsample_average(dates, b, b,
                             windows=(("all", "1995Q1", "1997Q4"),))
    assert same["all"] == 1.0


def test_subsample_average_default_windows():
    labels = [w[0] for w in SUBSAMPLE_WINDOWS]
    assert labels == ["1980-1990", "1991-2000", "2001-2010", "2011-2021"]
    start = parse_quarter("1980Q1")
    end = parse_quarter("2021Q4")
    dates = np.arange(start, end + 1)
    n = dates.size
    rng = np.random.default_rng(9)
    s = np.abs(rng.standard_normal(n)) + 0.1
    b = np.abs(rng.standard_normal(n)) + 0.1
    table = subsample_average(dates, s, b)
    assert set(table) == set(labels)
    mask = (dates >= parse_quarter("1991Q1")) & (dates <= parse_quarter("2000Q4"))
    assert table["1991-2000"] == pytest.approx(np.mean(s[mask]) / np.mean(b[mask]))


def test_subsample_average_warns_on_empty_window():
    dates = np.arange(parse_quarter("1995Q1"), parse_quarter("1995Q1") + 4)
    s = np.ones(4)
    with pytest.warns(UserWarning, match="no origins"):
        table = subsample_average(
            dates, s, s, windows=(("in", "1995Q1", "1995Q4"),
                                  ("out", "2030Q1", "2030Q4")))
    assert list(table) == ["in"]


# ---------------------------------------------------------------------------
# calibration


def test_pit_boundaries_and_ties():
    draws = np.array([0.0, 1.0, 2.0, 3.0])
    assert pit_compute(draws, -5.0) == 0.0
    assert pit_compute(draws, 5.0) == 1.0
    assert pit_compute(np.array([1.0, 1.0, 2.0]), 1.0) == pytest.approx(1 / 3)
    rng = np.random.default_rng(0)
    tied = pit_compute(np.array([1.0, 1.0, 2.0]), 1.0, rng)
    assert 0.0 <= tied <= 2 / 3
    with pytest.raises(ValueError, match=r"\[0,1\]"):
        PitSeries("m", np.arange(2), np.array([0.5, 1.5]))


def test_kolmogorov_halfwidth_table_value():
    half = kolmogorov_halfwidth(100, 0.05)
    assert half == pytest.approx(0.1358, abs=2e-4)
    assert half == pytest.approx(math.sqrt(-math.log(0.025) / 2.0) / 10.0,
                                 abs=1e-15)
    assert kolmogorov_halfwidth(400, 0.05) == pytest.approx(half / 2.0)
    with pytest.raises(ValueError):
        kolmogorov_halfwidth(100, 0.0)


def test_rs_diagnostic_perfect_grid():
    n = 50
    pits = np.arange(1, n + 1) / n
    grid, ecdf, half = rs_diagnostic(pits, grid=pits.copy())
    assert np.array_equal(ecdf, grid)
    assert half == pytest.approx(kolmogorov_halfwidth(n))
    g2, e2, _ = rs_diagnostic(PitSeries("m", np.arange(n), pits))
    assert g2.size == 101
    assert e2[0] == 0.0 and e2[-1] == 1.0
    assert np.all(np.diff(e2) >= 0.0)


def test_pits_uniform_under_correct_specification():
    """Outcomes simulated from each origin's own predictive leave uniform
    PITs; the KS test must not reject at the 1% level."""
    rng = np.random.default_rng(0)
    pits = []
    for _ in range(500):
        mu, sd = rng.normal(), abs(rng.normal()) + 0.5
        draws = rng.normal(mu, sd, 200)
        y = rng.normal(mu, sd)
        pits.append(pit_compute(draws, y, rng))
    pv = stats.kstest(pits, "uniform").pvalue
    assert pv > 0.01
    _, ecdf, half = rs_diagnostic(np.asarray(pits))
    grid = np.linspace(0.0, 1.0, 101)
    assert np.max(np.abs(ecdf - grid)) < half


# ---------------------------------------------------------------------------
# scoring whole forecast lists


def _fake_pred(origin, y_true, mean, var, n=400, seed=0):
    rng = np.random.default_rng(seed + origin)
    draws = rng.normal(mean, math.sqrt(var), n)
    qs = {p: float(np.quantile(draws, p)) for p in P_GRID}
    comps = [(mean, np.zeros(1), np.full(1, var), np.ones(1))] * n
    return PredictiveDraws(origin_date=origin, horizon=1, draws=draws,
                           point=float(draws.mean()), quantiles=qs,
                           components=comps, y_true=y_true)


def test_score_forecasts_assembles_aligned_panel():
    preds = [_fake_pred(8000, 0.4, 0.2, 1.0), _fake_pred(8001, -0.6, 0.1, 0.8),
             _fake_pred(8002, 1.2, 0.9, 1.3)]
    panel, pits = score_forecasts("GP-DPM", preds,
                                  rng=np.random.default_rng(1))
    assert panel.model_id == "GP-DPM"
    assert np.array_equal(panel.origin_dates, [8000, 8001, 8002])
    assert panel.n == 3
    for i, pr in enumerate(preds):
        assert panel.sq_errors[i] == pytest.approx((pr.y_true - pr.point) ** 2)
        assert panel.lpls[i] == pytest.approx(
            log_pred_likelihood(pr.components, pr.y_true))
        for p in P_GRID:
            assert panel.qs[p][i] == pytest.approx(
                quantile_score(pr.y_true, pr.quantiles[p], p))
    assert np.all((pits.values >= 0) & (pits.values <= 1))


def test_score_forecasts_drops_unrealized_origins():
    preds = [_fake_pred(8000, 0.4, 0.2, 1.0), _fake_pred(8001, None, 0.1, 0.8)]
    panel, _ = score_forecasts("M", preds)
    assert panel.n == 1
    with pytest.raises(ValueError, match="realized"):
        score_forecasts("M", [_fake_pred(8000, None, 0.2, 1.0)])


def test_score_panel_validation():
    with pytest.raises(ValueError, match="length"):
        ScorePanel("m", np.arange(3), np.zeros(3), np.zeros(2), np.zeros(3),
                   {})
    with pytest.raises(ValueError, match="nonnegative"):
        ScorePanel("m", np.arange(2), np.zeros(2), np.zeros(2), np.zeros(2),
                   {0.5: np.array([0.1, -0.1])})


# ---------------------------------------------------------------------------
# CSV emitters


def test_csv_writers_roundtrip(tmp_path):
    dates = np.array([parse_quarter("1990Q1"), parse_quarter("1990Q2")])
    qs = {0.05: np.array([0.25, 0.5]), 0.5: np.array([1.0, 2.0])}
    panel = _panel("GP-SV", dates, [1.0, 2.0], [0.5, 1.5],
                   [-0.9, -1.1], qs)
    pits = PitSeries("GP-SV", dates, np.array([0.3, 0.8]))

    spath = tmp_path / "scores_GP-SV.csv"
    write_scores_csv(spath, panel, pits)
    with open(spath) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["origin", "y_true", "sq_error", "lpl",
                       "qs_0.05", "qs_0.5", "pit"]
    assert rows[1][0] == "1990Q1"
    assert float(rows[1][2]) == pytest.approx(0.25)
    assert float(rows[2][6]) == pytest.approx(0.8)

    tpath = tmp_path / "table1.csv"
    write_relative_table_csv(tpath, relative_table({"GP-SV": panel}, "GP-SV"))
    with open(tpath) as fh:
        trows = list(csv.reader(fh))
    assert trows[0][0] == "model"
    assert "1" in trows[1]

    cpath = tmp_path / "cumulative_lpl.csv"
    write_cumulative_csv(cpath, dates, {"GP-SV": np.array([0.1, 0.3])})
    with open(cpath) as fh:
        crows = list(csv.reader(fh))
    assert crows[0] == ["origin", "GP-SV"]
    assert float(crows[2][1]) == pytest.approx(0.3)

    bpath = tmp_path / "qs_subsamples.csv"
    write_subsample_csv(bpath, {"GP-SV": {"1980-1990": 0.9}})
    with open(bpath) as fh:
        brows = list(csv.reader(fh))
    assert brows[0] == ["model", "1980-1990"]
    assert float(brows[1][1]) == pytest.approx(0.9)

    kpath = tmp_path / "calibration_GP-SV.csv"
    grid = np.linspace(0.0, 1.0, 5)
    write_calibration_csv(kpath, grid, grid, 0.1)
    with open(kpath) as fh:
        krows = list(csv.reader(fh))
    assert krows[0] == ["grid", "ecdf", "lower", "upper"]
    assert float(krows[1][2]) == pytest.approx(-0.1)
    assert float(krows[-1][3]) == pytest.approx(1.1)
