import numpy as np
import pytest

from helpers import make_copy_dataset
from sqlifuzz.model import TransformerConfig
from sqlifuzz.training import (
    DivergedTraining,
    TrainSettings,
    eval_loss,
    encode_pairs,
    grid_paper_like,
    grid_tiny,
    train,
)

FAST = TrainSettings(epochs=6, batch_size=8, lr=1e-3, cv_epochs=1)


def test_loss_decreases_on_copy_task():
    pairs, vocab = make_copy_dataset(40, seed=1)
    model, report = train(pairs, grid_tiny(len(vocab), 16), vocab, FAST, seed=0)
    assert report.epoch_losses[-1] < report.epoch_losses[0]
    assert report.steps == 6 * 5
    assert np.isfinite(report.final_loss)


def test_single_grid_point_skips_cv():
    pairs, vocab = make_copy_dataset(20, seed=2)
    grid = grid_tiny(len(vocab), 16)
    model, report = train(pairs, grid, vocab, FAST, seed=0)
    assert report.chosen == grid[0]
    assert len(report.grid_losses) == 1
    assert np.isnan(report.grid_losses[0][1])


def test_grid_selection_runs_cv_and_picks_minimum():
    pairs, vocab = make_copy_dataset(30, seed=3)
    grid = [
        TransformerConfig(vocab_size=len(vocab), d_e=16, n_heads=2, n_layers=1,
                          d_ff=32, max_len=16, dropout=0.0),
        TransformerConfig(vocab_size=len(vocab), d_e=32, n_heads=2, n_layers=1,
                          d_ff=32, max_len=16, dropout=0.0),
    ]
    model, report = train(pairs, grid, vocab, FAST, seed=4)
    assert len(report.grid_losses) == 2
    losses = [l for _, l in report.grid_losses]
    assert all(np.isfinite(l) for l in losses)
    assert report.chosen == report.grid_losses[int(np.argmin(losses))][0]
    assert model.config == report.chosen


def test_deterministic_given_seed():
    pairs, vocab = make_copy_dataset(24, seed=5)
    grid = grid_tiny(len(vocab), 16)
    m1, r1 = train(pairs, grid, vocab, FAST, seed=7)
    m2, r2 = train(pairs, grid, vocab, FAST, seed=7)
    assert r1.epoch_losses == r2.epoch_losses
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_jobs_do_not_change_results():
    pairs, vocab = make_copy_dataset(24, seed=6)
    grid = [
        TransformerConfig(vocab_size=len(vocab), d_e=16, n_heads=2, n_layers=1,
                          d_ff=32, max_len=16, dropout=0.0),
        TransformerConfig(vocab_size=len(vocab), d_e=16, n_heads=4, n_layers=1,
                          d_ff=32, max_len=16, dropout=0.0),
    ]
    _, serial = train(pairs, grid, vocab, FAST, seed=9, jobs=1)
    _, threaded = train(pairs, grid, vocab, FAST, seed=9, jobs=2)
    assert serial.grid_losses == threaded.grid_losses
    assert serial.chosen == threaded.chosen


def test_divergence_names_grid_point():
    pairs, vocab = make_copy_dataset(20, seed=8)
    with pytest.raises(DivergedTraining, match="d_e=32"):
        train(pairs, grid_tiny(len(vocab), 16), vocab,
              TrainSettings(epochs=3, batch_size=4, lr=1e12), seed=0)


def test_too_few_pairs_rejected():
    pairs, vocab = make_copy_dataset(8, seed=9)
    with pytest.raises(ValueError):
        train(pairs, grid_tiny(len(vocab), 16), vocab, FAST, seed=0)


def test_stop_loss_short_circuits():
    pairs, vocab = make_copy_dataset(20, seed=10)
    settings = TrainSettings(epochs=500, batch_size=4, lr=1e-3, stop_loss=2.0)
    _, report = train(pairs, grid_tiny(len(vocab), 16), vocab, settings, seed=1)
    assert len(report.epoch_losses) < 500
    assert report.epoch_losses[-1] < 2.0


def test_grid_presets():
    assert len(grid_tiny(30)) == 1
    grid = grid_paper_like(30)
    assert len(grid) == 16
    assert len({(c.n_layers, c.n_heads, c.d_ff, c.d_e) for c in grid}) == 16


def test_eval_loss_matches_mean():
    pairs, vocab = make_copy_dataset(12, seed=11)
    model, _ = train(pairs, grid_tiny(len(vocab), 16), vocab, FAST, seed=0)
    data = encode_pairs(pairs, vocab)
    by_hand = sum(model.loss(s, d) for s, d in data) / len(data)
    assert eval_loss(model, data) == pytest.approx(by_hand, rel=1e-12)
