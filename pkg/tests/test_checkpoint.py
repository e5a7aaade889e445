import pytest
import torch

from libs.checkpoint import encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint
from libs.errors import DataError
from libs.model_core import DTYPE, TopicExpectationModel


def make_model(**kwargs):
    torch.manual_seed(4)
    return TopicExpectationModel(d_feat=7, hidden_size=3, dropout=0.0, **kwargs)


def test_save_and_load(tmp_path):
    model = make_model(separate_head_weights=True)
    path = save_checkpoint(model, tmp_path / 'model.ckpt', n_stocks=12, seed=99)
    loaded, header = load_checkpoint(path)

    assert (header.d, header.n, header.seed, header.d_feat) == (3, 12, 99, 7)
    assert header.separate_head_weights and not header.topics_reinit_daily and not header.plain_lstm
    for name, tensor in model.state_dict().items():
        assert torch.equal(loaded.state_dict()[name], tensor)

    x = torch.randn(4, 7, dtype=DTYPE)
    model.eval()
    assert torch.equal(model.step(x, list('ABCD'))[0], loaded.step(x, list('ABCD'))[0])


def test_plain_lstm_flag_round_trips(tmp_path):
    path = save_checkpoint(make_model(plain_lstm=True), tmp_path / 'model.ckpt', n_stocks=2, seed=0)
    loaded, header = load_checkpoint(path)
    assert header.plain_lstm and loaded.plain_lstm


def test_identical_weights_give_identical_bytes():
    assert encode_checkpoint(make_model(), 5, 1) == encode_checkpoint(make_model(), 5, 1)


def test_blocks_follow_state_dict_order(tmp_path):
    model = make_model()
    path = save_checkpoint(model, tmp_path / 'model.ckpt', n_stocks=2, seed=0)
    _, blocks = read_checkpoint(path)
    assert list(blocks) == list(model.state_dict())


def test_bad_magic(tmp_path):
    path = tmp_path / 'model.ckpt'
    data = bytearray(encode_checkpoint(make_model(), 2, 0))
    data[:8] = b'NOTACKPT'
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match='magic'):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = tmp_path / 'model.ckpt'
    path.write_bytes(encode_checkpoint(make_model(), 2, 0)[:-8])
    with pytest.raises(DataError, match='truncated'):
        load_checkpoint(path)
