import pytest

from monitored_fermions.config import DEFAULTS, load_config, parse_config


def test_text_roundtrip():
    cfg = parse_config("L = 12\ngamma = 2.5  # comment\nobservables = covariance\n")
    assert cfg.L == 12 and cfg.gamma == 2.5 and cfg.observables == ("covariance",)
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.digest == cfg.digest


def test_digest_ignores_bookkeeping_fields():
    cfg = parse_config("")
    assert cfg.replace(n_trajectories=7, n_workers=3, output="x").digest == cfg.digest
    assert cfg.replace(gamma=1.5).digest != cfg.digest


def test_overrides_win_and_none_is_ignored(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("L = 8\n")
    cfg = load_config(path, gamma=3.0, L=None)
    assert cfg.L == 8 and cfg.gamma == 3.0


@pytest.mark.parametrize("text", [
    "L = 10\nobservables = covariance",  # strips need L divisible by 4
    "unknown_key = 1",
    "filling = 1.5",
    "gamma = -1",
    "observables = spin",
    "T = -2",
    "L",
])
def test_invalid_configs(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_defaults():
    assert DEFAULTS.d == 2 and DEFAULTS.L == 16 and DEFAULTS.filling == 0.5
    assert DEFAULTS.T is None
