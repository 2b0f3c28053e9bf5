import pytest

from glacnet.checkpoint import (
    MAGIC,
    CheckpointError,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from glacnet.config import to_dict
from glacnet.data import synth_corpus
from glacnet.training import evaluate_perplexity, train

from conftest import small_config


@pytest.fixture(scope="module")
def trained():
    records = synth_corpus(0, 12)
    return records, train(records, small_config(epochs=2))


def test_save_load_save_is_byte_identical(trained, tmp_path):
    _, ckpt = trained
    save_checkpoint(ckpt, tmp_path / "a.ckpt")
    again = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(again, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_round_trip_preserves_everything(trained):
    records, ckpt = trained
    back = from_bytes(to_bytes(ckpt))
    assert back.vocab.words == ckpt.vocab.words
    assert to_dict(back.config) == to_dict(ckpt.config)
    assert back.epoch == ckpt.epoch == 2
    assert back.metrics == ckpt.metrics
    assert back.rng_state == ckpt.rng_state
    for name, p in ckpt.model.parameters().items():
        assert back.model.parameters()[name].data.tobytes() == p.data.tobytes()
    for name, s in ckpt.model.running_stats().items():
        assert back.model.running_stats()[name].var.tobytes() == s.var.tobytes()
    assert evaluate_perplexity(back.model, back.vocab, records) == evaluate_perplexity(
        ckpt.model, ckpt.vocab, records
    )


def test_bad_files(trained):
    blob = to_bytes(trained[1])
    with pytest.raises(CheckpointError):
        from_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        from_bytes(blob[:-8])
    with pytest.raises(CheckpointError):
        from_bytes(blob.replace(b'"format_version":1', b'"format_version":9'))
    assert blob.startswith(MAGIC)
