import numpy as np
import pytest

from malclass.errors import ConfigError, DivergenceError
from malclass.nn import EncodedDataset, Tensor, TrainConfig, train


def tiny_dataset(n=8, length=4, classes=2, seed=0):
    rng = np.random.default_rng(seed)
    return EncodedDataset(
        rng.integers(1, 10, size=(n, length)).astype(np.int32),
        np.full(n, length, dtype=np.int64),
        rng.integers(0, classes, size=n).astype(np.int64),
    )


class ScriptedModel:
    """Replays a fixed validation-loss schedule; training loss is flat."""

    def __init__(self, val_losses):
        self.val_losses = list(val_losses)
        self.epoch = 0
        self.evals = 0
        self._p = Tensor(np.zeros(3, dtype=np.float64))

    def params(self):
        return [("p", self._p)]

    def compute_loss(self, inputs, lengths, labels, *, train, want_grads):
        if want_grads:  # a training batch; epochs advance on the first batch
            if getattr(self, "_saw_batch", False) is False:
                self.epoch += 1
            self._saw_batch = True
            return 1.0
        # validation pass ends the epoch
        self._saw_batch = False
        return float(self.val_losses[self.epoch - 1])


def test_early_stopping_exactly_patience_plus_one():
    # strictly increasing validation loss: first epoch is best, then
    # `patience` non-improving epochs, stop at patience + 1
    model = ScriptedModel([1.0 + 0.1 * e for e in range(100)])
    config = TrainConfig(learning_rate=0.1, batch_size=64, max_epochs=100,
                         patience=10, dropout=0.0, seed=0)
    result = train(model, tiny_dataset(), tiny_dataset(), config)
    assert len(result.history) == 11
    assert result.stopped_early
    assert result.best_epoch == 1


def test_early_stopping_equal_loss_counts_as_no_improvement():
    model = ScriptedModel([1.0] * 50)
    config = TrainConfig(learning_rate=0.1, max_epochs=50, patience=3, seed=0)
    result = train(model, tiny_dataset(), tiny_dataset(), config)
    assert len(result.history) == 4  # epoch 1 best, then 3 equal epochs


def test_runs_to_max_epochs_when_improving():
    model = ScriptedModel([1.0 / (e + 1) for e in range(7)])
    config = TrainConfig(learning_rate=0.1, max_epochs=7, patience=3, seed=0)
    result = train(model, tiny_dataset(), tiny_dataset(), config)
    assert len(result.history) == 7
    assert not result.stopped_early
    assert result.best_epoch == 7


def test_divergence_raises():
    model = ScriptedModel([1.0, float("nan")])
    config = TrainConfig(learning_rate=0.1, max_epochs=10, patience=5, seed=0)
    with pytest.raises(DivergenceError):
        train(model, tiny_dataset(), tiny_dataset(), config)


def test_empty_sets_rejected():
    model = ScriptedModel([1.0])
    empty = EncodedDataset(np.zeros((0, 4), dtype=np.int32),
                           np.zeros(0, dtype=np.int64),
                           np.zeros(0, dtype=np.int64))
    with pytest.raises(ConfigError):
        train(model, empty, tiny_dataset(), TrainConfig(learning_rate=0.1))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.1, patience=200, max_epochs=100)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.1, dropout=1.0)


def test_loss_history_bitwise_deterministic():
    from malclass.models import ClassifierSpec, build

    def run():
        spec = ClassifierSpec(kind="text_cnn", num_classes=2, vocab_size=20,
                              embedding_dim=8, hidden=4, dropout=0.5, max_len=8)
        model = build(spec, seed=5)
        ds = tiny_dataset(n=12, length=8, classes=2, seed=3)
        val = tiny_dataset(n=6, length=8, classes=2, seed=4)
        config = TrainConfig(learning_rate=1e-3, batch_size=4, max_epochs=5,
                             patience=5, dropout=0.5, seed=9)
        return train(model, ds, val, config).loss_history()

    assert run() == run()


def test_best_checkpoint_restored():
    from malclass.models import ClassifierSpec, build

    spec = ClassifierSpec(kind="text_cnn", num_classes=2, vocab_size=20,
                          embedding_dim=8, hidden=4, dropout=0.0, max_len=8)
    model = build(spec, seed=5)
    ds = tiny_dataset(n=12, length=8, classes=2, seed=3)
    config = TrainConfig(learning_rate=5e-3, batch_size=4, max_epochs=6,
                         patience=6, dropout=0.0, seed=9)
    result = train(model, ds, ds, config)
    # the model's post-training validation loss equals the recorded best
    from malclass.nn.training import _epoch_eval_loss
    final = _epoch_eval_loss(model, ds, 4)
    assert final == pytest.approx(result.best_val_loss, rel=1e-6)
