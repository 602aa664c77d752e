import itertools

import numpy as np
import pytest

from duplex_forge.evaluation import DetectorParams, grid_search, grid_shape
from duplex_forge.evaluation.gridsearch import DEFAULT_RANGES, axis, objective
from duplex_forge.synthetic import event_corpus, random_corpus


def test_search_space_size():
    assert grid_shape() == (141, 121, 91)
    assert DEFAULT_RANGES == {"split": (0.20, 0.90), "interrupt": (0.10, 0.70), "overlap": (0.05, 0.50)}
    ax = axis(0.20, 0.90, 0.005)
    assert ax[0] == 0.2 and ax[-1] == 0.9 and 0.565 in ax


def test_objective_zero_at_generating_params():
    corpus = event_corpus(20, seed=2)
    assert objective(corpus, DetectorParams()) == 0
    res = grid_search(corpus)
    assert res.objective == 0 and res.n_configs == 141 * 121 * 91
    s, i, o = res.axes
    ref = res.objective_grid[np.searchsorted(s, 0.565), np.searchsorted(i, 0.405), np.searchsorted(o, 0.435)]
    assert ref == 0


SMALL = {"split": (0.3, 0.8), "interrupt": (0.1, 0.6), "overlap": (0.05, 0.5)}


@pytest.fixture(scope="module")
def noisy():
    # random dialogues carry flags the detector does not always agree with
    return random_corpus(12, seed=11)


@pytest.fixture(scope="module")
def noisy_result(noisy):
    return grid_search(noisy, SMALL, step=0.05)


def test_grid_matches_direct_detector(noisy, noisy_result):
    s, i, o = noisy_result.axes
    rng = np.random.default_rng(0)
    cells = list(itertools.product(range(len(s)), range(len(i)), range(len(o))))
    for n in rng.choice(len(cells), 40, replace=False):
        a, b, c = cells[n]
        p = DetectorParams(float(s[a]), float(i[b]), float(o[c]))
        assert noisy_result.objective_grid[a, b, c] == objective(noisy, p), p


def test_exhaustive_and_lexicographic(noisy_result):
    grid = noisy_result.objective_grid
    assert noisy_result.objective == grid.min()
    s, i, o = noisy_result.axes
    best = noisy_result.best.triple
    minima = [(float(s[a]), float(i[b]), float(o[c])) for a, b, c in zip(*np.nonzero(grid == grid.min()))]
    assert best == min(minima)


def test_workers_do_not_change_result(noisy, noisy_result):
    par = grid_search(noisy, SMALL, step=0.05, workers=3)
    assert par.best == noisy_result.best
    assert np.array_equal(par.counts, noisy_result.counts)


def test_summary_is_per_dialogue(noisy, noisy_result):
    summ = noisy_result.summary()
    assert set(summ) == {"missing_bc", "extra_bc", "missing_int", "extra_int"}
    total_mean = sum(m for m, _ in summ.values())
    assert total_mean * len(noisy) == pytest.approx(noisy_result.objective)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        grid_search([])
