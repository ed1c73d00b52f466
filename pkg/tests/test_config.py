import pytest

from ssle.config import ConfigError, RunConfig, load_config, parse_config

EXAMPLE = """
# toy run
[run]
seed = 7

[data]
duration_s = 1.0
snrs = -5, 0, 5
noises = white, pink

[pae]
epochs_pae = 3
kl_warmup = false

[paths]
out = runs/a
"""


def test_parse_example():
    cfg = parse_config(EXAMPLE)
    assert cfg.seed == cfg.data.seed == cfg.pae.seed == cfg.dae.seed == 7
    assert cfg.data.duration_s == 1.0
    assert cfg.data.snrs == (-5.0, 0.0, 5.0)
    assert cfg.data.noises == ("white", "pink")
    assert cfg.pae.epochs_pae == 3 and cfg.pae.kl_warmup is False
    assert cfg.dae.epochs_pae == 50  # untouched section keeps defaults
    assert cfg.paths == {"out": "runs/a"}


def test_defaults_when_empty():
    assert parse_config("").resolved() == RunConfig().with_seed(1234).resolved()
    assert load_config().digest() == parse_config("").digest()


@pytest.mark.parametrize("text,match", [
    ("[model]\nx = 1\n", "unknown section"),
    ("[pae]\nepochs = 3\n", "unknown key"),
    ("[pae]\nseed = 3\n", "under \\[run\\]"),
    ("[run]\nverbose = 1\n", "unknown key"),
    ("[paths]\ncache = x\n", "unknown key"),
    ("[pae]\nlr = fast\n", "cannot parse"),
    ("[pae]\nkl_warmup = maybe\n", "cannot parse"),
    ("[pae]\nlr = -1\n", "lr must be positive"),
    ("[data]\ncase = case9\n", "case must be"),
    ("no header\n", "src.cfg"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, "src.cfg")


def test_error_names_source_section_and_key():
    with pytest.raises(ConfigError) as info:
        parse_config("[dae]\nbogus = 1\n", "run.cfg")
    msg = str(info.value)
    assert "run.cfg" in msg and "[dae]" in msg and "bogus" in msg


def test_digest_tracks_values():
    a = parse_config(EXAMPLE)
    assert a.digest() == parse_config(EXAMPLE).digest()
    assert a.digest() != a.with_seed(8).digest()
    assert len(a.digest()) == 16


def test_resolved_text_reparses():
    cfg = parse_config(EXAMPLE)
    back = parse_config(cfg.to_text())
    assert back.resolved() == cfg.resolved()
    assert cfg.digest() in cfg.to_text()


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.cfg")
