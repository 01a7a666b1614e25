"""Objectives: contextual similarity oracle battery, adversarial constants,
reconstruction terms, report identity, and descent smoke checks."""

import math

import numpy as np
import pytest
import torch

from nsdehaze import losses as L
from nsdehaze.errors import ArgumentError, ShapeError
from nsdehaze.networks import FeatureExtractor
from nsdehaze.torchops import to_tensor
from conftest import contextual_similarity_oracle, random_image


class ZeroCritic(torch.nn.Module):
    def forward(self, x):
        return torch.zeros(x.shape[0], dtype=x.dtype)


class SaturatedCritic(torch.nn.Module):
    def __init__(self, sign):
        super().__init__()
        self.sign = sign

    def forward(self, x):
        return torch.full((x.shape[0],), self.sign * 1e6, dtype=x.dtype)


class TestContextualSimilarity:
    def test_matches_double_loop_oracle(self, rng):
        for trial in range(50):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(2, 9))
            c = int(rng.integers(2, 6))
            X = rng.standard_normal((n, c))
            Y = rng.standard_normal((m, c))
            mine = float(
                L.contextual_similarity(
                    torch.tensor(X, dtype=torch.float64), torch.tensor(Y, dtype=torch.float64)
                )
            )
            assert abs(mine - contextual_similarity_oracle(X, Y)) <= 1e-6

    def test_single_feature_is_one(self):
        x = torch.tensor([[0.3, -1.2]])
        y = torch.tensor([[2.0, 0.5]])
        assert float(L.contextual_similarity(x, y)) == pytest.approx(1.0)

    def test_self_match_small_bandwidth(self, rng):
        X = torch.tensor(rng.standard_normal((5, 4)))
        assert float(L.contextual_similarity(X, X, h=0.05)) >= 0.999

    def test_row_stochastic(self, rng):
        xs = torch.tensor(rng.standard_normal((1, 6, 4)))
        ys = torch.tensor(rng.standard_normal((1, 7, 4)))
        y_mu = ys.mean(dim=1, keepdim=True)
        xn = torch.nn.functional.normalize(xs - y_mu, dim=2)
        yn = torch.nn.functional.normalize(ys - y_mu, dim=2)
        dist = 1 - torch.bmm(xn, yn.transpose(1, 2))
        rel = dist / (dist.min(dim=2, keepdim=True).values + 1e-5)
        w = torch.exp((1 - rel) / 0.5)
        cx = w / w.sum(dim=2, keepdim=True)
        assert float((cx.sum(dim=2) - 1).abs().max()) <= 1e-6

    def test_bounds(self, rng):
        X = torch.tensor(rng.standard_normal((8, 4)))
        Y = torch.tensor(rng.standard_normal((9, 4)))
        value = float(L.contextual_similarity(X, Y))
        assert 0.0 < value <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            L.contextual_similarity(torch.zeros(0, 3), torch.zeros(2, 3))

    def test_subsample_deterministic(self, rng):
        big = torch.tensor(rng.standard_normal((1, 4, 40, 40)))
        other = torch.tensor(rng.standard_normal((1, 4, 40, 40)))
        a = float(L.contextual_similarity(big, other, max_features=100))
        b = float(L.contextual_similarity(big, other, max_features=100))
        assert a == b


@pytest.fixture(scope="module")
def extractor():
    return FeatureExtractor().double()


class TestMscLoss:
    def test_nine_terms(self, extractor, rng):
        from nsdehaze.torchops import scale_levels

        img = to_tensor(random_image(rng, 16, 16), torch.float64)
        ref = to_tensor(random_image(rng, 16, 16), torch.float64)
        loss, breakdown = L.msc_loss(extractor, scale_levels(img), scale_levels(ref))
        assert len(breakdown) == 9
        assert float(loss) >= 0.0
        assert np.isfinite(float(loss))

    def test_identical_beats_shuffled(self, extractor):
        from nsdehaze.data import make_scene
        from nsdehaze.torchops import scale_levels

        wins = 0
        for seed in range(10):
            img = make_scene(16, 16, seed)
            rng = np.random.default_rng(seed)
            shuffled = img.reshape(-1, 3)[rng.permutation(16 * 16)].reshape(16, 16, 3)
            t = to_tensor(img, torch.float64)
            s = to_tensor(shuffled, torch.float64)
            same, _ = L.msc_loss(extractor, scale_levels(t), scale_levels(t))
            diff, _ = L.msc_loss(extractor, scale_levels(t), scale_levels(s))
            wins += float(same) <= float(diff)
        assert wins >= 9


class TestMsaLoss:
    def test_zero_logit_constants(self):
        levels = [torch.rand(2, 3, 8, 8) for _ in range(3)]
        disc_loss, per_scale = L.msa_loss_discriminator(ZeroCritic(), levels, levels)
        gen_loss, _ = L.msa_loss_generator(ZeroCritic(), levels)
        assert float(disc_loss) == pytest.approx(3 * 2 * math.log(2), rel=1e-6)
        assert float(gen_loss) == pytest.approx(3 * math.log(2), rel=1e-6)
        assert len(per_scale) == 3

    def test_perfect_critic_saturates_to_zero(self):
        refs = [torch.rand(1, 3, 8, 8) for _ in range(3)]
        fakes = [torch.rand(1, 3, 8, 8) for _ in range(3)]

        class PerfectCritic(torch.nn.Module):
            def forward(self, x):
                # logits saturate at the clamp bound with the right sign
                is_real = float(x.sum()) in self._real_sums
                return torch.full((x.shape[0],), 1e6 if is_real else -1e6, dtype=x.dtype)

        critic = PerfectCritic()
        critic._real_sums = {float(r.sum()) for r in refs}
        loss, _ = L.msa_loss_discriminator(critic, refs, fakes)
        assert float(loss) <= 6 * math.exp(-L.LOGIT_CLAMP) * 2

    def test_clamp_keeps_loss_finite(self):
        levels = [torch.rand(1, 3, 8, 8)]
        loss, _ = L.msa_loss_generator(SaturatedCritic(-1.0), levels)
        assert np.isfinite(float(loss))
        assert float(loss) == pytest.approx(L.LOGIT_CLAMP, rel=1e-3)


class TestReconstructionLoss:
    def test_identity_is_zero(self, extractor, rng):
        img = to_tensor(random_image(rng, 16, 16), torch.float64)
        total, parts = L.reconstruction_loss(img, img.clone(), extractor)
        assert float(parts["l1"]) == 0.0
        assert float(parts["perceptual"]) == 0.0
        assert float(parts["ssim"]) <= 1e-12
        assert float(total) <= 1e-11

    def test_uniform_offset_l1(self, extractor):
        a = to_tensor(np.full((16, 16, 3), 0.3), torch.float64)
        b = to_tensor(np.full((16, 16, 3), 0.4), torch.float64)
        weights = L.LossWeights()
        total, parts = L.reconstruction_loss(a, b, extractor, weights)
        assert float(parts["l1"]) == pytest.approx(0.1, abs=1e-9)
        assert weights.theta * float(parts["l1"]) == pytest.approx(0.5, abs=1e-8)

    def test_shape_mismatch(self, extractor):
        with pytest.raises(ShapeError):
            L.reconstruction_loss(torch.rand(1, 3, 16, 16), torch.rand(1, 3, 18, 18), extractor)

    def test_gradient_check(self, extractor, rng):
        from conftest import fd_gradient_check

        base = to_tensor(random_image(rng, 16, 16), torch.float64)
        target = to_tensor(random_image(rng, 16, 16), torch.float64)
        x = base.clone().requires_grad_(True)

        def loss():
            total, _ = L.reconstruction_loss(x, target, extractor)
            return total

        fd_gradient_check(loss, [x], n_probes=8, seed=3)


class TestTotalLoss:
    def test_zero_weights_zero_total(self):
        weights = L.LossWeights(omega1=0, omega2=0, theta=0, gamma=0, eta=0)
        parts = {"l1": torch.tensor(0.5), "perceptual": torch.tensor(0.3), "ssim": torch.tensor(0.2)}
        total, report = L.total_loss(weights, torch.tensor(1.0), torch.tensor(2.0), parts)
        assert float(total) == 0.0
        assert report.total == 0.0

    def test_report_identity_exact(self, rng):
        weights = L.LossWeights()
        parts = {
            "l1": torch.tensor(float(rng.random())),
            "perceptual": torch.tensor(float(rng.random())),
            "ssim": torch.tensor(float(rng.random())),
        }
        msa = torch.tensor(float(rng.random()))
        msc = torch.tensor(float(rng.random()))
        _, report = L.total_loss(weights, msa, msc, parts)
        recomputed = (
            weights.omega1 * report.msa
            + weights.omega2 * report.msc
            + weights.theta * report.rec_l1
            + weights.gamma * report.rec_perceptual
            + weights.eta * report.rec_ssim
        )
        assert abs(report.total - recomputed) <= 1e-9

    def test_csv_row_schema(self):
        report = L.LossReport(1.0, 0.1, 0.2, 0.3, 0.4, 0.5)
        assert L.LossReport.csv_header() == "step,total,msa,msc,rec_l1,rec_p,rec_ssim"
        row = report.csv_row(7)
        assert row.split(",")[0] == "7"
        assert len(row.split(",")) == 7

    def test_weights_validated(self):
        with pytest.raises(ArgumentError):
            L.LossWeights(theta=-1)


class TestDescentSmoke:
    def test_ten_steps_reduce_generator_total(self):
        # fixed batch, frozen critic; the generator-side total must drop
        from nsdehaze.data import make_toy_dataset
        from nsdehaze.harness import TrainConfig, init_state
        from nsdehaze.harness.train import train_step
        from nsdehaze.networks import NetworkConfig
        import tempfile, os

        with tempfile.TemporaryDirectory() as tmp:
            manifest = make_toy_dataset(4, (32, 32), os.path.join(tmp, "d"), seed=0, shift_px=4)
            from nsdehaze.imaging import load_image

            hazy = np.stack([load_image(r.hazy) for r in manifest.records])
            ref = np.stack([load_image(r.ref) for r in manifest.records])
            cfg = TrainConfig(
                epochs=1,
                batch=4,
                lr=1e-4,
                seed=0,
                out_dir=os.path.join(tmp, "run"),
                network=NetworkConfig(base_channels=16, generator_res_blocks=2, seed=0),
            )
            state = init_state(cfg)
            totals = []
            for _ in range(10):
                state, report = train_step(state, hazy, ref)
                totals.append(report.total)
            assert totals[-1] < totals[0]
