import numpy as np
import pytest

from mmdsculpt import models
from mmdsculpt.data import generate_xy_family, read_latent_dump
from mmdsculpt.diffcore import Tensor
from mmdsculpt.metrics import read_metrics_csv
from mmdsculpt.models import Layer, ModelParams, init_params, load_checkpoint, reconstruct_array
from mmdsculpt.priors import PriorSpec
from mmdsculpt.trainer import (
    DivergenceError,
    EpochRecord,
    EvalOptions,
    TrainConfig,
    TrainLog,
    evaluate,
    seed_streams,
    train,
)


@pytest.fixture(scope="module")
def xy256():
    return generate_xy_family("XY", 256, 32, np.random.default_rng(0))


def _fast(**kw):
    base = dict(lam=0.3, batch_size=64, lr=1e-3, epochs=3, hidden=(32, 16), seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=-1)
    with pytest.raises(ValueError):
        TrainConfig(regularizer="l1")
    with pytest.raises(ValueError):
        TrainConfig(estimator="jackknife")


def test_train_log_epochs_strictly_increase(tmp_path):
    log = TrainLog()
    log.append(EpochRecord(1, 0.5, 0.1, 0.01))
    with pytest.raises(ValueError):
        log.append(EpochRecord(1, 0.4, 0.1, 0.01))
    log.to_csv(tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == "epoch,recon,penalty,seconds"


def test_reconstruction_drops_tenfold_without_regularizer(xy256):
    images, _ = xy256
    x = images.reshape(len(images), -1)
    cfg = TrainConfig(lam=0.0, regularizer="none", batch_size=32, lr=1e-3, epochs=50, hidden=(128, 64))
    rngs = seed_streams(0)
    params = init_params(x.shape[1], 2, cfg.hidden, rngs["init"])
    before = np.mean((reconstruct_array(params, x) - x) ** 2)
    params, _ = train(cfg, images, None, params=params, rngs=rngs)
    after = np.mean((reconstruct_array(params, x) - x) ** 2)
    assert after * 10 <= before


def test_training_is_deterministic(xy256, tmp_path):
    images, _ = xy256
    cfg = _fast()
    prior = PriorSpec.standard_normal(2)
    p1, log1 = train(cfg, images, prior, tmp_path / "a")
    p2, log2 = train(cfg, images, prior, tmp_path / "b")
    strip = [[(r.epoch, r.recon, r.penalty) for r in log.epochs] for log in (log1, log2)]
    assert strip[0] == strip[1]
    for a, b in zip(p1.tensors(), p2.tensors()):
        assert np.array_equal(a.data, b.data)
    assert (tmp_path / "a" / "checkpoint.mdlp").read_bytes() == (tmp_path / "b" / "checkpoint.mdlp").read_bytes()


def test_mmd_penalty_decreases(xy256):
    images, _ = xy256
    cfg = _fast(epochs=30, batch_size=128, hidden=(64, 32))
    _, log = train(cfg, images, PriorSpec.standard_normal(2))
    assert log.epochs[-1].penalty < log.epochs[0].penalty


def test_batch_kld_regularizer_runs(xy256):
    images, _ = xy256
    _, log = train(_fast(regularizer="batch_kld", epochs=2), images)
    assert all(np.isfinite(r.penalty) for r in log.epochs)


def test_fresh_prior_batch_every_step(xy256, monkeypatch):
    images, _ = xy256
    seen = []
    real = models.sample_prior

    def spy(spec, n, rng):
        out = real(spec, n, rng)
        seen.append(out)
        return out

    monkeypatch.setattr(models, "sample_prior", spy)
    train(_fast(epochs=1), images, PriorSpec.standard_normal(2))
    assert len(seen) == 4
    assert all(s.shape == (64, 2) for s in seen)
    assert all(not np.array_equal(a, b) for a, b in zip(seen[:-1], seen[1:]))


def test_small_dataset_uses_whole_batch(xy256):
    images, _ = xy256
    with pytest.warns(UserWarning, match="smaller than batch_size"):
        train(_fast(batch_size=512, epochs=1), images[:40], PriorSpec.standard_normal(2))


def test_divergence_guard(xy256):
    images, _ = xy256
    bad = images.copy()
    bad[3, 0, 0] = np.nan
    with pytest.raises(DivergenceError):
        train(_fast(epochs=1), bad, PriorSpec.standard_normal(2))


def test_periodic_checkpoints(xy256, tmp_path):
    images, _ = xy256
    train(_fast(epochs=4, checkpoint_every=2), images, PriorSpec.standard_normal(2), tmp_path)
    names = sorted(p.name for p in tmp_path.glob("*.mdlp"))
    assert names == ["checkpoint.mdlp", "checkpoint_epoch0002.mdlp", "checkpoint_epoch0004.mdlp"]
    assert load_checkpoint(tmp_path / "checkpoint.mdlp").latent_dim == 2


# ------------------------------------------------------------------- evaluate

FAST_EVAL = EvalOptions(lps_epochs=5, mmd_samples=128)


def test_evaluate_untrained_model_is_complete(xy256, tmp_path):
    images, factors = xy256
    params = init_params(1024, 2, (32, 16), np.random.default_rng(1))
    m = evaluate(params, images, PriorSpec.standard_normal(2), None, factors, tmp_path, FAST_EVAL)
    expected = {"nmse_linear", "nmse_db", "lps_mlp", "lps_r2_dim0", "lps_r2_dim1", "covariance_ratio",
                "mig", "mmd2_biased", "mmd2_unbiased", "min_latent_std"}
    assert set(m) == expected
    assert all(np.isfinite(v) for v in m.values())
    for name in ("metrics.csv", "latents.ltnt", "report.svg", "covariance.csv", "hist_dim1.csv"):
        assert (tmp_path / name).exists()
    assert read_latent_dump(tmp_path / "latents.ltnt").shape == (256, 2)
    assert read_metrics_csv(tmp_path / "metrics.csv") == m


def test_evaluate_twice_gives_identical_csv(xy256, tmp_path):
    images, factors = xy256
    params = init_params(1024, 2, (32, 16), np.random.default_rng(2))
    for sub in ("a", "b"):
        evaluate(params, images, PriorSpec.standard_normal(2), None, factors, tmp_path / sub, FAST_EVAL)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_toy_pixel_encoder_mig_wiring(xy256):
    images, factors = xy256
    # z = (pixel 0, pixel 1): one linear layer that copies two pixels
    W = np.zeros((1024, 2))
    W[0, 0] = W[1, 1] = 1.0
    enc = [Layer(Tensor(W), Tensor(np.zeros(2)))]
    dec = [Layer(Tensor(np.zeros((2, 1024))), Tensor(np.zeros(1024)))]
    toy = ModelParams(enc, dec)
    m = evaluate(toy, images, None, None, factors, None, FAST_EVAL)
    assert 0.0 <= m["mig"] <= 1.0
    # the zero decoder outputs sigmoid(0) = 0.5 everywhere
    assert m["nmse_linear"] == pytest.approx(((images - 0.5) ** 2).sum() / (images ** 2).sum(), rel=1e-12)
