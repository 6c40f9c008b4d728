from types import SimpleNamespace

import numpy as np
import pytest

from stitchgen.dataset import split_by_root
from stitchgen.denoiser import Denoiser, DenoiserConfig, train
from stitchgen.encoding import MetadataCodec, encode_metadata, fit_scaler
from stitchgen.schedule import linear_schedule
from stitchgen.synthetic import calendar_sines


@pytest.fixture(scope="session")
def toy():
    """calendar-sines, brands A/B for training, brand C held out, 50 training epochs."""
    data = calendar_sines()
    codec = MetadataCodec.fit(data.metadata_columns, data.metadata)
    train_split, test = split_by_root(data, "C")
    scaler = fit_scaler(train_split.signals)
    sched = linear_schedule()
    model = Denoiser(DenoiserConfig(window=32, channels=2, meta_width=codec.width), seed=0)
    losses = train(model, scaler.transform(train_split.signals), encode_metadata(train_split.metadata, codec),
                   sched, epochs=50, seed=0)
    return SimpleNamespace(data=data, codec=codec, scaler=scaler, sched=sched, model=model, losses=losses,
                           test=test, x=scaler.transform(test.signals), a=encode_metadata(test.metadata, codec))


@pytest.fixture
def tiny():
    """Untrained small denoiser on a short schedule, for fast structural checks."""
    cfg = DenoiserConfig(window=8, channels=2, meta_width=2, step_dim=4, hidden=6, mix_width=3)
    model = Denoiser(cfg, seed=3)
    sched = linear_schedule(T=6)
    rng = np.random.default_rng(11)
    M = 30
    return SimpleNamespace(model=model, sched=sched, M=M,
                           x=rng.normal(size=(M, 2)), a=rng.normal(size=(M, 2)))


# -- acceptance report -----------------------------------------------------------

_REPORT = pytest.StashKey[dict]()


class AcceptanceLog:
    def __init__(self, lines: dict):
        self.lines = lines

    def check(self, number: int, title: str, fn):
        """Run ``fn() -> (ok, detail)``, record one PASS/FAIL line and assert."""
        try:
            ok, detail = fn()
        except Exception as exc:  # recorded, then re-raised for pytest
            self.lines[number] = f"[FAIL] {number:2d}. {title}: {type(exc).__name__}: {exc}"
            print(self.lines[number])
            raise
        self.lines[number] = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"
        print(self.lines[number])
        assert ok, self.lines[number]


@pytest.fixture(scope="session")
def acceptance(request):
    return AcceptanceLog(request.config.stash.setdefault(_REPORT, {}))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
