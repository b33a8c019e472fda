import math

import numpy as np
import pytest

from helpers import random_design
from ncsroute.errors import CapUnattainableError, PreconditionError
from ncsroute.h2 import impact
from ncsroute.search import (AxisSpec, RoutingEvaluator, SearchOptions, StealthMode, diagonal_sweep,
                             stealthy_search, worst_case_search)
from ncsroute.system import assemble_closed_loop, classify_stability

FAST = SearchOptions(restarts=6, max_evals=400)


def revalidate(model, ctl, result):
    s = assemble_closed_loop(model, ctl, result.best_R)
    assert classify_stability(s).stable
    assert impact(s).ratio == pytest.approx(result.best_ratio, rel=1e-10)


class TestAxis:
    def test_parse_and_values(self):
        a = AxisSpec.parse("0:1.5:0.25")
        np.testing.assert_allclose(a.values(), [0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
        assert len(AxisSpec(0, 1.5, 0.01).values()) == 151

    @pytest.mark.parametrize("text", ["0:1", "a:b:c", "0:1:0", "1:0:0.1", "0:1:-1"])
    def test_invalid(self, text):
        with pytest.raises(PreconditionError):
            AxisSpec.parse(text)


class TestEvaluator:
    def test_matches_impact(self, rng):
        for _ in range(10):
            model, ctl = random_design(rng)
            ev = RoutingEvaluator(model, ctl)
            for _ in range(10):
                R = np.eye(model.n_y) + 0.5 * rng.standard_normal((model.n_y,) * 2)
                s = assemble_closed_loop(model, ctl, R)
                out = ev(R)
                if s.spectral_abscissa < 0:
                    rep = impact(s)
                    assert out[0] == pytest.approx(rep.ratio, rel=1e-8)
                    assert out[2] == pytest.approx(rep.h2_residual_sq, rel=1e-8)
                else:
                    assert out is None
        assert ev.evaluations == 10


class TestSweep:
    def test_structure(self, example_design):
        model, ctl = example_design
        grid = diagonal_sweep(model, ctl, AxisSpec(0.0, 1.5, 0.1))
        vals = np.round(np.arange(16) * 0.1, 12)
        assert len(grid.cells) == 256
        assert [c.R11 for c in grid.cells[::16]] == list(vals)
        assert [c.R22 for c in grid.cells[:16]] == list(vals)
        for c in grid.cells:
            assert (c.ratio is not None) == c.stable
        one = next(c for c in grid.cells if c.R11 == 1.0 and c.R22 == 1.0)
        assert one.stable
        assert one.ratio == pytest.approx(impact(assemble_closed_loop(model, ctl, np.eye(2))).ratio, rel=1e-12)
        zero = next(c for c in grid.cells if c.R11 == 0.0 and c.R22 == 0.0)
        assert not zero.stable and zero.ratio is None and zero.abscissa > 0

    def test_maximizer_and_surfaces(self, example_design):
        model, ctl = example_design
        grid = diagonal_sweep(model, ctl, AxisSpec(0.5, 1.0, 0.05))
        best = grid.maximizer()
        brute = max((impact(assemble_closed_loop(model, ctl, np.diag([c.R11, c.R22]))).ratio, c.R11, c.R22)
                    for c in grid.cells if c.stable)
        assert (best.ratio, best.R11, best.R22) == pytest.approx(brute)
        surf = grid.surfaces()
        assert surf["ratio"].shape == (11, 11)
        assert np.isnan(surf["ratio"][~surf["stable"]]).all()
        np.testing.assert_allclose(surf["ratio"][surf["stable"]],
                                   (surf["h2_perf_sq"] / surf["h2_resid_sq"])[surf["stable"]])

    def test_needs_two_measurements(self, rng):
        model, ctl = random_design(rng, n_x=2, n_y=1)
        with pytest.raises(PreconditionError):
            diagonal_sweep(model, ctl, AxisSpec(0, 1, 0.5))


class TestWorstCase:
    def test_zero_budget_returns_identity(self, example_design):
        model, ctl = example_design
        res = worst_case_search(model, ctl, SearchOptions(restarts=1, max_evals=0))
        np.testing.assert_array_equal(res.best_R, np.eye(2))
        assert res.best_ratio == pytest.approx(impact(assemble_closed_loop(model, ctl, np.eye(2))).ratio)

    def test_revalidates_and_beats_sweep(self, example_design):
        model, ctl = example_design
        res = worst_case_search(model, ctl, FAST)
        revalidate(model, ctl, res)
        sweep_best = diagonal_sweep(model, ctl, AxisSpec(0.0, 1.5, 0.05)).maximizer().ratio
        assert res.best_ratio >= sweep_best
        assert res.restarts == 6 and res.evaluations > 0

    def test_deterministic(self, example_design):
        a = worst_case_search(*example_design, FAST).to_dict()
        b = worst_case_search(*example_design, FAST).to_dict()
        c = worst_case_search(*example_design, SearchOptions(restarts=6, max_evals=400, workers=3)).to_dict()
        assert a == b == c

    def test_one_dimensional_grid_oracle(self):
        model, ctl = random_design(np.random.default_rng(8), n_x=2, n_y=1)
        ev = RoutingEvaluator(model, ctl)
        grid = np.linspace(-20, 20, 40001)
        vals = np.array([(ev([[x]]) or (-np.inf,))[0] for x in grid])
        k = int(np.argmax(vals))
        assert 0 < k < grid.size - 1 and np.isfinite(vals[k - 1]) and np.isfinite(vals[k + 1])
        res = worst_case_search(model, ctl, SearchOptions(restarts=8))
        assert res.best_ratio == pytest.approx(vals[k], abs=1e-3)
        revalidate(model, ctl, res)

    def test_no_feasible_start(self, example_design):
        with pytest.raises(PreconditionError, match="R = I"):
            worst_case_search(*example_design, SearchOptions(restarts=3, margin=5.0))


class TestStealthy:
    def test_cap_respected(self, example_design):
        model, ctl = example_design
        for mode in StealthMode:
            res = stealthy_search(model, ctl, 2.0, mode, FAST)
            assert res.residual_energy <= 2.0 + 1e-9
            assert res.mode == mode.value and res.epsilon_tr == 2.0
            revalidate(model, ctl, res)
            assert res.best_ratio > res.performance_energy / 2.0 - 1e-9

    def test_infinite_cap_is_unconstrained(self, example_design):
        a = stealthy_search(*example_design, math.inf, options=FAST).to_dict()
        b = worst_case_search(*example_design, FAST).to_dict()
        assert a == b

    def test_unattainable(self, example_design):
        model, ctl = example_design
        ev = RoutingEvaluator(model, ctl)
        axis = np.linspace(0, 1.5, 16)
        probe = min(out[2] for a in axis for b in axis for c in axis
                    if (out := ev(np.array([[a, c], [0.0, b]]))) is not None)
        eps = 1e-3 * probe
        with pytest.raises(CapUnattainableError) as err:
            stealthy_search(model, ctl, eps, options=FAST)
        assert err.value.min_residual > eps

    def test_monotone_in_cap_with_warm_start(self, example_design):
        model, ctl = example_design
        mode = StealthMode.MAX_PERFORMANCE
        r1 = stealthy_search(model, ctl, 1.8, mode, FAST)
        opts = SearchOptions(restarts=6, max_evals=400, starts=(r1.best_R,))
        r2 = stealthy_search(model, ctl, 2.2, mode, opts)
        assert r2.performance_energy >= r1.performance_energy

    def test_deterministic(self, example_design):
        a = stealthy_search(*example_design, 2.0, options=FAST).to_dict()
        b = stealthy_search(*example_design, 2.0, options=FAST).to_dict()
        assert a == b

    def test_bad_cap(self, example_design):
        with pytest.raises(PreconditionError):
            stealthy_search(*example_design, 0.0)
