import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from eventret.encoder import EncoderConfig, init_encoder  # noqa: E402
from eventret.params import ParameterStore  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def randomize(store: ParameterStore, seed: int, scale: float = 0.5, dtype=torch.float64) -> ParameterStore:
    """Copy of ``store`` with every tensor redrawn: gains near 1, everything else N(0, scale^2)."""
    gen = torch.Generator().manual_seed(seed)
    out = ParameterStore(dtype)
    for name, t in store.items():
        noise = torch.randn(t.shape, generator=gen, dtype=torch.float64) * scale
        out.add(name, 1.0 + 0.3 * noise if name.endswith(".g") else noise)
    return out


def tiny_encoder_config(**kw) -> EncoderConfig:
    base = dict(num_layers=2, hidden_dim=8, num_heads=2, ffn_dim=16, dropout=0.1, vocab_size=20,
                max_query_len=6, max_event_len=6, max_doc_len=8)
    base.update(kw)
    return EncoderConfig(**base)


def random_encoder(seed: int, cfg: EncoderConfig | None = None, prefix: str = "query_encoder") -> ParameterStore:
    cfg = cfg or tiny_encoder_config()
    store = ParameterStore()
    init_encoder(store, prefix, cfg, torch.Generator().manual_seed(seed))
    return randomize(store, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
