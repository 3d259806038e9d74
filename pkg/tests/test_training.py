import inspect

import numpy as np
import pytest

from stockgat import autodiff as ad
from stockgat.market_data import (SynthConfig, build_windows,
                                  generate_synthetic, split_dataset)
from stockgat.metrics import confusion, f1_accuracy
from stockgat.model import ModelConfig, MovementModel
from stockgat.pipeline import attach_adjacency
from stockgat.seeding import stream
from stockgat.training import (Adam, TrainConfig, TrainingDiverged,
                               day_loss, evaluate_sections, fit,
                               predictions_for, train_epoch,
                               write_history_csv)

SMALL = ModelConfig(lookback=5, hidden_tech=8, hidden_media=4,
                    fused_dim=8, heads=2, head_dim=4)


def small_split(n_stocks=4, n_days=40, signal="sentiment", p=1.0, seed=3):
    data = generate_synthetic(
        SynthConfig(n_stocks=n_stocks, n_days=n_days, signal=signal, p=p),
        seed=seed)
    split = split_dataset(build_windows(data.days_by_symbol))
    attach_adjacency(split.train + split.validation + split.test, None)
    return split


def small_config(**kw):
    kw.setdefault("model", SMALL)
    kw.setdefault("batch_size", 8)
    kw.setdefault("seed", 1)
    return TrainConfig(**kw)


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(learning_rate=-1.0, max_epochs=5, patience=2).validate()
    with pytest.raises(ValueError):
        small_config(max_epochs=10, patience=10).validate()
    small_config(max_epochs=10, patience=2).validate()


def test_zero_learning_rate_keeps_parameters_bit_identical():
    split = small_split()
    config = small_config(learning_rate=0.0, max_epochs=2, patience=1)
    model = MovementModel(SMALL, 1)
    before = {k: t.data.copy() for k, t in model.parameters().items()}
    train_epoch(model, Adam(model.parameters(), lr=0.0), split.train, config,
                stream(1, "shuffle"))
    for name, t in model.parameters().items():
        assert np.array_equal(t.data, before[name]), name


def test_one_step_decreases_batch_loss_over_20_seeds():
    split = small_split()
    section = split.train[0]
    decreased = 0
    for seed in range(20):
        model = MovementModel(SMALL, seed)
        before = day_loss(model, section).item()
        model.zero_grad()
        ad.backward(day_loss(model, section))
        Adam(model.parameters(), lr=1e-2).step()
        decreased += day_loss(model, section).item() < before
    assert decreased == 20


def test_gradients_zeroed_at_start_of_each_step():
    # two identical steps from the same state must produce identical grads,
    # which only holds if train_epoch zeroes before accumulating
    split = small_split()
    section = split.train[0]

    def grads_after_one_backward(prime):
        model = MovementModel(SMALL, 5)
        if prime:   # leave stale gradients lying around
            ad.backward(day_loss(model, section))
        model.zero_grad()
        ad.backward(day_loss(model, section))
        return {k: t.grad.copy() for k, t in model.parameters().items()}

    a = grads_after_one_backward(prime=False)
    b = grads_after_one_backward(prime=True)
    for name in a:
        assert np.array_equal(a[name], b[name])


def test_nan_loss_aborts_with_batch_dates():
    split = small_split()
    model = MovementModel(SMALL, 1)
    model.parameters()["head.w"].data[:] = np.nan
    config = small_config(max_epochs=2, patience=1)
    with pytest.raises(TrainingDiverged) as excinfo:
        train_epoch(model, Adam(model.parameters(), lr=1e-3), split.train,
                    config, stream(1, "shuffle"))
    assert excinfo.value.batch_dates


def test_patience_one_with_frozen_model_stops_after_two_epochs():
    split = small_split()
    # learning rate small enough that no thresholded prediction can move
    config = small_config(learning_rate=1e-30, max_epochs=50, patience=1)
    _, history = fit(MovementModel(SMALL, 1), split.train, split.validation,
                     config)
    assert len(history) == 2


def test_fit_is_deterministic_bit_for_bit(tmp_path):
    split = small_split()
    config = small_config(learning_rate=5e-3, max_epochs=3, patience=2)
    histories = []
    for _ in range(2):
        _, history = fit(MovementModel(SMALL, 1), split.train,
                         split.validation, config)
        path = tmp_path / f"h{_}.csv"
        write_history_csv(path, history)
        histories.append(path.read_bytes())
    assert histories[0] == histories[1]


def test_fit_returns_best_validation_model():
    split = small_split()
    config = small_config(learning_rate=5e-3, max_epochs=6, patience=5)
    model, history = fit(MovementModel(SMALL, 2), split.train,
                         split.validation, config)
    best = max(h.val_f1 for h in history)
    f1, _, _, _ = evaluate_sections(model, split.validation)
    assert f1 == pytest.approx(best, abs=1e-12)


def test_fit_interface_has_no_test_split_access():
    params = inspect.signature(fit).parameters
    assert "test_sections" not in params
    assert set(params) == {"model", "train_sections", "val_sections", "config",
                           "progress"}


def test_planted_deterministic_signal_is_learned_quickly():
    # p=1.0 plant: training F1 should become near-perfect
    split = small_split(n_stocks=6, n_days=60, p=1.0)
    config = small_config(learning_rate=2e-2)
    model = MovementModel(SMALL, 3)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    rng = stream(config.seed, "shuffle")
    best = 0.0
    for _ in range(200):
        train_epoch(model, optimizer, split.train, config, rng)
        f1, _, _, _ = evaluate_sections(model, split.train)
        best = max(best, f1)
        if best > 0.99:
            break
    assert best > 0.99


def test_predictions_for_yields_valid_records():
    split = small_split()
    model = MovementModel(SMALL, 1)
    records = predictions_for(model, split.test)
    assert records
    c = confusion(records)
    f1, acc = f1_accuracy(c)
    assert c.total == len(records)
    assert 0.0 <= acc <= 1.0


def test_history_csv_format(tmp_path):
    split = small_split()
    config = small_config(learning_rate=1e-3, max_epochs=2, patience=1)
    _, history = fit(MovementModel(SMALL, 1), split.train, split.validation,
                     config)
    path = tmp_path / "history.csv"
    write_history_csv(path, history)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_f1,val_acc,val_mcc"
    assert len(lines) == len(history) + 1
    assert lines[1].startswith("1,")
