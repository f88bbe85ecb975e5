import numpy as np
import pytest
import torch

import oracles
from conftest import random_encoder, tiny_encoder_config
from eventret.encoder import encode, encoder_layer
from eventret.vocab import TokenBatch


def _batch(ids, mask):
    return TokenBatch(torch.tensor(ids, dtype=torch.long), torch.tensor(mask, dtype=torch.bool))


@pytest.mark.parametrize("seed", range(5))
def test_encode_matches_scalar_oracle(seed):
    cfg = tiny_encoder_config()
    p = random_encoder(seed, cfg)
    rng = np.random.default_rng(seed)
    ids = [2] + rng.integers(4, cfg.vocab_size, size=3).tolist()
    hs = encode(_batch([ids], [[True] * 4]), p, cfg)
    ref = oracles.encode(ids, [True] * 4, dict(p.items()), "query_encoder", cfg.num_layers, cfg.num_heads)
    np.testing.assert_allclose(hs.states[0].detach().numpy(), ref, rtol=0, atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_encoder_layer_with_padding_matches_oracle(seed):
    cfg = tiny_encoder_config()
    p = random_encoder(seed, cfg)
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(1, 5, cfg.hidden_dim, generator=gen, dtype=torch.float64)
    valid = [True, True, True, False, False]
    out = encoder_layer(x, torch.tensor([valid]), p, "query_encoder.layers.0", cfg.num_heads)
    ref = oracles.encoder_layer(oracles.tolist(x[0]), valid, dict(p.items()), "query_encoder.layers.0", cfg.num_heads)
    np.testing.assert_allclose(out[0, :3].detach().numpy(), ref[:3], rtol=0, atol=1e-10)


def test_padding_does_not_change_real_tokens():
    cfg = tiny_encoder_config()
    p = random_encoder(7, cfg)
    alone = encode(_batch([[2, 5, 6, 3]], [[True] * 4]), p, cfg)
    padded = encode(_batch([[2, 5, 6, 3, 0, 0], [2, 7, 8, 9, 10, 3]], [[True] * 4 + [False] * 2, [True] * 6]), p, cfg)
    torch.testing.assert_close(padded.states[0, :4], alone.states[0], rtol=0, atol=1e-12)
    assert torch.count_nonzero(padded.states[0, 4:]) == 0


def test_dropout_is_seeded():
    cfg = tiny_encoder_config(dropout=0.3)
    p = random_encoder(1, cfg)
    b = _batch([[2, 5, 6, 3]], [[True] * 4])
    a1 = encode(b, p, cfg, dropout_seed=11).states
    a2 = encode(b, p, cfg, dropout_seed=11).states
    a3 = encode(b, p, cfg, dropout_seed=12).states
    off = encode(b, p, cfg).states
    assert torch.equal(a1, a2)
    assert not torch.equal(a1, a3)
    assert not torch.equal(a1, off)
    assert torch.equal(off, encode(b, p, cfg).states)


def test_rejects_bad_ids_and_lengths():
    cfg = tiny_encoder_config()
    p = random_encoder(0, cfg)
    with pytest.raises(ValueError, match="vocabulary"):
        encode(_batch([[2, cfg.vocab_size, 3]], [[True] * 3]), p, cfg)
    with pytest.raises(ValueError, match="positions"):
        L = cfg.max_positions + 1
        encode(_batch([[2] * L], [[True] * L]), p, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_encoder_config(hidden_dim=10, num_heads=4)
    with pytest.raises(ValueError):
        tiny_encoder_config(dropout=1.0)
    with pytest.raises(ValueError):
        tiny_encoder_config(num_layers=0)
