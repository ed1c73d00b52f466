import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ssle.models import DAE, PAE, VariationalLatent
from ssle.training import (
    LossReport, TrainConfig, TrainingError, alignment_targets, cycle_loss, dae_objective, kl_loss,
    masking_loss, recon_loss, train_dae, train_pae,
)
from ssle.tensor import Tensor


def latent(mu, logvar):
    return VariationalLatent(Tensor(np.asarray(mu, float)), Tensor(np.asarray(logvar, float)))


def kl_by_quadrature(mu, logvar):
    """KL(N(mu, e^logvar) || N(0, 1)) for one dimension, integrated numerically."""
    sd = np.exp(logvar / 2)
    q, p = stats.norm(mu, sd), stats.norm(0, 1)
    val, _ = integrate.quad(lambda x: q.pdf(x) * (q.logpdf(x) - p.logpdf(x)), mu - 12 * sd, mu + 12 * sd)
    return val


def test_kl_standard_normal_is_zero():
    assert kl_loss(latent(np.zeros((64, 5)), np.zeros((64, 5)))).item() == 0.0


def test_kl_unit_mean_is_half():
    mu = np.zeros((64, 3))
    mu[0] = 1.0
    assert kl_loss(latent(mu, np.zeros_like(mu))).item() == pytest.approx(0.5, abs=1e-12)


def test_kl_matches_quadrature():
    rng = np.random.default_rng(0)
    mu, lv = rng.normal(0, 1, (4, 3)), rng.uniform(-2, 2, (4, 3))
    # latent dims on axis -2, frames on axis -1
    expect = np.mean([sum(kl_by_quadrature(mu[d, t], lv[d, t]) for d in range(4)) for t in range(3)])
    assert kl_loss(latent(mu, lv)).item() == pytest.approx(expect, rel=1e-7)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_kl_nonnegative(seed):
    rng = np.random.default_rng(seed)
    assert kl_loss(latent(rng.normal(0, 2, (6, 4)), rng.uniform(-5, 5, (6, 4)))).item() >= 0


def test_recon_cases():
    assert recon_loss(np.ones((2, 3)), np.ones((2, 3))).item() == 0.0
    assert recon_loss(np.zeros(4), np.full(4, 2.0)).item() == 4.0
    with pytest.raises(ValueError, match="shape"):
        recon_loss(np.zeros(3), np.zeros(4))


def test_cycle_and_masking_arithmetic():
    S, X = np.zeros(4), np.zeros(2)
    assert cycle_loss(S, S + 1.0, X, X + 2.0, 1e-3).item() == pytest.approx(1.0 + 4e-3, abs=1e-12)
    assert masking_loss(1.0, 1.0, 1.0, 1e-3) == pytest.approx(2.001, abs=1e-12)


@pytest.mark.parametrize("kwargs,match", [
    ({"lr": 0}, "lr"), ({"batch_size": -1}, "batch_size"), ({"theta1": -1e-3}, "theta1"),
    ({"alignment_target": "clean"}, "alignment_target"), ({"pretasks": 3}, "pretasks"),
    ({"feature_kind": "cqt"}, "feature_kind"),
])
def test_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        TrainConfig(**kwargs)


def test_report_text_round_trip(tmp_path):
    rep = LossReport("pae")
    rep.add(0, 0, 1e-4, total=1.25, kl=0.1, recon=0.3, cycle=0.7)
    rep.add(1, 1, 2e-4, total=0.5, kl=1 / 3, recon=0.2, cycle=0.1)
    rep.write(tmp_path / "l.txt")
    back = LossReport.read(tmp_path / "l.txt")
    assert back.stage == "pae" and back.steps == rep.steps
    assert [e["total"] for e in back.epochs()] == [1.25, 0.5]


# --- loops on tiny synthetic data -----------------------------------------------

def tiny_pairs(n=2, T=6, seed=0):
    rng = np.random.default_rng(seed)
    clean = [rng.normal(-2, 1, (513, T)) for _ in range(n)]
    mix = [c + np.abs(rng.normal(0, 0.5, c.shape)) for c in clean]
    return clean, mix


def fast_cfg(**kw):
    base = dict(epochs_pae=2, epochs_dae=2, batch_size=2, kl_warmup=False)
    base.update(kw)
    return TrainConfig(**base)


def test_pae_logged_total_matches_terms():
    cfg = fast_cfg()
    _, _, rep = train_pae(None, cfg, data=tiny_pairs())
    for r in rep.steps:
        assert r["kl_weight"] == cfg.theta1
        assert r["total"] == pytest.approx(cfg.theta1 * r["kl"] + r["recon"] + r["cycle"], abs=1e-9)


def test_pae_deterministic():
    a = train_pae(None, fast_cfg(), data=tiny_pairs())
    b = train_pae(None, fast_cfg(), data=tiny_pairs())
    assert a[2].steps == b[2].steps
    for (_, p), (_, q) in zip(a[0].named_parameters(), b[0].named_parameters()):
        assert p.data.tobytes() == q.data.tobytes()


def test_pae_single_pretask_has_no_mask_updates():
    model, _, _ = train_pae(None, fast_cfg(pretasks=1), data=tiny_pairs())
    fresh = PAE(model.features, seed=model.arch["seed"])
    for (_, p), (_, q) in zip(model.masking.named_parameters(), fresh.masking.named_parameters()):
        assert p.data.tobytes() == q.data.tobytes()


def test_kl_warmup_ramps_to_theta1():
    cfg = fast_cfg(kl_warmup=True, epochs_pae=4, warmup_fraction=0.5)
    _, _, rep = train_pae(None, cfg, data=tiny_pairs())
    ws = [r["kl_weight"] for r in rep.steps]
    assert ws == sorted(ws) and ws[-1] == cfg.theta1 and ws[0] < cfg.theta1


def test_dae_leaves_pae_untouched():
    clean, mix = tiny_pairs()
    pae, _, _ = train_pae(None, fast_cfg(), data=(clean, mix))
    before = [p.data.tobytes() for p in pae.parameters()]
    _, _, rep = train_dae(None, pae, fast_cfg(), data=mix)
    assert [p.data.tobytes() for p in pae.parameters()] == before
    for r in rep.steps:
        assert r["total"] == pytest.approx(r["kl_weight"] * r["kl"] + r["recon"] + r["alignment"], abs=1e-9)


def test_alignment_zero_when_encoders_match():
    clean, mix = tiny_pairs()
    pae, _, _ = train_pae(None, fast_cfg(), data=(clean, mix))
    dae = DAE(pae.features, hidden=pae.hidden)
    dae.encoder.load_state_dict(pae.encoder.state_dict())
    dae.encoder.logvar.weight.data[:] = 0.0
    dae.encoder.logvar.bias.data[:] = -10.0  # clip floor, sigma ~ 7e-3
    xm = [pae.features.encoder_input(m) for m in mix]
    align = alignment_targets(pae, xm, "mixture")
    _, terms = dae_objective(dae, np.stack(xm), np.stack(xm), np.stack(align), fast_cfg(),
                             np.random.default_rng(0), 0.0)
    assert terms["alignment"].item() < 1e-4


def test_masked_target_differs_from_mixture():
    clean, mix = tiny_pairs()
    pae, _, _ = train_pae(None, fast_cfg(), data=(clean, mix))
    xm = [pae.features.encoder_input(m) for m in mix]
    a = alignment_targets(pae, xm, "mixture")
    b = alignment_targets(pae, xm, "masked")
    assert a[0].shape == b[0].shape == (64, 6)
    assert not np.allclose(a[0], b[0])


def test_nan_aborts_with_step():
    clean, mix = tiny_pairs()
    clean[1][0, 0] = np.nan
    with pytest.raises(TrainingError, match="step 0"):
        train_pae(None, fast_cfg(batch_size=2), data=(clean, mix))


def test_empty_data_rejected():
    with pytest.raises(TrainingError):
        train_pae(None, fast_cfg(), data=([], []))
    with pytest.raises(TrainingError, match="PAE"):
        train_dae(None, object(), fast_cfg(), data=[np.zeros((513, 4))])
