import json
import math

import numpy as np
import pytest

from spcca.engine import CanonicalVariable, EngineConfig
from spcca.errors import ConfigError, NoConvergedRun, TooFewSamples
from spcca.selection import (
    CellResult,
    GridSpec,
    grid_search,
    holdout_size,
    make_splits,
    median_component,
    select_cell,
)
from spcca.synthetic import generate, planted_scenario


def var(obj, converged=True):
    w = np.array([1.0])
    return CanonicalVariable((w, w), (w, w), (("a",), ("b",)), obj, (obj,), converged, 1)


def test_split_sizes_n72():
    splits = make_splits(72, GridSpec(((0.0,),)))
    assert holdout_size(72, 1 / 8) == 9
    assert len(splits) == 10
    for tr, te in splits:
        assert len(te) == 9 and len(tr) == 63
        assert sorted(np.concatenate([tr, te]).tolist()) == list(range(72))


def test_split_size_n8():
    assert all(len(te) == 1 for _, te in make_splits(8, GridSpec(((0.0,),))))


def test_splits_deterministic():
    a = make_splits(30, GridSpec(((0.0,),), seed=5))
    b = make_splits(30, GridSpec(((0.0,),), seed=5))
    c = make_splits(30, GridSpec(((0.0,),), seed=6))
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert any(not np.array_equal(x[1], y[1]) for x, y in zip(a, c))


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        make_splits(3, GridSpec(((0.0,),)))


def test_grid_spec_validation():
    for bad in (dict(grids=((),)), dict(grids=((0.2, 0.1),)), dict(grids=((-0.1,),)),
                dict(grids=((0.0,),), holdout_fraction=1.0), dict(grids=((0.0,),), n_holdouts=0)):
        with pytest.raises(ConfigError):
            GridSpec(**bad)


def test_median_rule():
    comps = [var(0.9), var(0.8), var(0.7)]
    assert median_component(comps).objective == 0.8
    assert median_component([var(0.9), var(0.7)]).objective == 0.7
    assert median_component([var(0.9), None, var(0.1, converged=False), var(0.7)]).objective == 0.7
    with pytest.raises(NoConvergedRun):
        median_component([None, var(0.5, converged=False)])


def test_select_cell_ties_and_failures():
    cells = [CellResult(0, (0.0, 0.0), [0.5, 0.7]), CellResult(1, (0.2, 0.0), [0.6, 0.6]),
             CellResult(2, (0.1, 0.1), [0.6, 0.6]), CellResult(3, (0.9, 0.9), [None, None])]
    assert cells[3].mean == -math.inf
    assert select_cell(cells) == 1
    with pytest.raises(NoConvergedRun):
        select_cell([CellResult(0, (0.0,), [None])])


@pytest.fixture(scope="module")
def low_noise():
    data, design, _ = generate(planted_scenario(noise_sd=0.1))
    return data, design.matrix


def test_single_cell(low_noise):
    data, design = low_noise
    res = grid_search(data, design, GridSpec(((0.2,), (0.2,), (0.0,)), n_holdouts=3),
                      EngineConfig((0, 0, 0)))
    assert res.selected == 0 and len(res.cells) == 1
    assert res.median is not None and res.median.converged


def test_planted_grid_selects_positive(low_noise):
    data, design = low_noise
    spec = GridSpec(((0.0, 0.2, 0.6),) * 3)
    res = grid_search(data, design, spec, EngineConfig((0, 0, 0)))
    assert len(res.cells) == 27
    best = res.selected_cell
    assert all(best.mean >= c.mean for c in res.cells)
    assert best.lambdas[0] > 0 and best.lambdas[1] > 0
    # lambda 0.6 on 200 genes zeroes every weight
    assert all(c.mean == -math.inf for c in res.cells if c.lambdas[0] == 0.6)
    rows = list(res.rows())
    assert len(rows) == 27 and res.header()[1:4] == ["lambda_X1", "lambda_X2", "lambda_design"]


def test_checkpoint_resume_and_jobs(low_noise, tmp_path):
    data, design = low_noise
    spec = GridSpec(((0.1, 0.2), (0.1, 0.2), (0.0,)), n_holdouts=3)
    cfg = EngineConfig((0, 0, 0))
    first = grid_search(data, design, spec, cfg, checkpoint_dir=tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == [f"cell_{i:05d}.json" for i in range(4)]
    # a cached cell is reused as stored, a missing one is recomputed
    doc = json.loads((tmp_path / "cell_00000.json").read_text())
    doc["scores"] = [0.123, 0.123, 0.123]
    (tmp_path / "cell_00000.json").write_text(json.dumps(doc))
    (tmp_path / "cell_00003.json").unlink()
    again = grid_search(data, design, spec, cfg, checkpoint_dir=tmp_path)
    assert again.cells[0].scores == [0.123] * 3
    assert again.cells[3].same_scores(first.cells[3])
    par = grid_search(data, design, spec, cfg, n_jobs=2)
    assert all(a.same_scores(b) for a, b in zip(first.cells, par.cells))
    assert par.selected == first.selected


def test_grid_count_mismatch(low_noise):
    data, design = low_noise
    with pytest.raises(ConfigError):
        grid_search(data, design, GridSpec(((0.1,), (0.1,))), EngineConfig((0, 0)))
