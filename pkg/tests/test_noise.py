"""Noise models, RNG streams, and noise-magnitude estimators."""

import numpy as np
import pytest

from saupefit import debias, estimators, experiments, geometry, noise, tensor


@pytest.fixture(scope="module")
def fragment():
    sequence, torsions = experiments.synthetic_ubiquitin(1734)
    seq = sequence[0:8]
    frag = geometry.TorsionSet(torsions.angles[0:7])
    return seq, frag


@pytest.fixture(scope="module")
def design_and_d(fragment):
    seq, frag = fragment
    A, kinds, idx = estimators.design_from_torsions(seq, frag.phi, frag.psi)
    S = experiments.demo_saupe()
    d = A @ tensor.from_tensor(S)
    return estimators.DesignMatrix(A, kinds, idx), d, S


class TestStreamRng:
    def test_same_address_reproduces(self):
        a = noise.stream_rng(7, 1, 2).standard_normal(5)
        b = noise.stream_rng(7, 1, 2).standard_normal(5)
        assert np.array_equal(a, b)

    def test_different_addresses_differ(self):
        a = noise.stream_rng(7, 1, 2).standard_normal(5)
        b = noise.stream_rng(7, 1, 3).standard_normal(5)
        c = noise.stream_rng(8, 1, 2).standard_normal(5)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_order_of_use_irrelevant(self):
        # draws from one stream do not perturb another
        r1 = noise.stream_rng(3, 0)
        r2 = noise.stream_rng(3, 1)
        x = r1.standard_normal(4)
        _ = r2.standard_normal(100)
        y = noise.stream_rng(3, 0).standard_normal(4)
        assert np.array_equal(x, y)


class TestNoiseSpec:
    def test_negative_magnitudes_rejected(self):
        with pytest.raises(ValueError):
            noise.NoiseSpec(sigma_torsion=-0.1)
        with pytest.raises(ValueError):
            noise.NoiseSpec(sigma_add=-1e-5)

    def test_rng_addressing(self):
        spec = noise.NoiseSpec(0.1, 1e-5, seed=11, stream_id=4)
        a = spec.rng(2).standard_normal(3)
        b = noise.stream_rng(11, 4, 2).standard_normal(3)
        assert np.array_equal(a, b)


class TestPerturbTorsions:
    def test_zero_sigma_identity(self, fragment):
        _, frag = fragment
        out = noise.perturb_torsions(frag, 0.0, noise.stream_rng(1))
        assert np.array_equal(out.angles, frag.angles)

    def test_negative_sigma_rejected(self, fragment):
        _, frag = fragment
        with pytest.raises(ValueError):
            noise.perturb_torsions(frag, -0.1, noise.stream_rng(1))

    def test_offset_statistics(self, fragment):
        _, frag = fragment
        sigma = np.deg2rad(10.0)
        rng = noise.stream_rng(5)
        offsets = np.concatenate([
            (noise.perturb_torsions(frag, sigma, rng).angles
             - frag.angles).ravel()
            for _ in range(500)])
        assert abs(offsets.mean()) < 4 * sigma / np.sqrt(offsets.size)
        assert abs(offsets.std() / sigma - 1.0) < 0.05


class TestAddCouplingNoise:
    def test_zero_sigma_returns_copy(self):
        d = np.arange(5.0)
        out = noise.add_coupling_noise(d, 0.0, noise.stream_rng(1))
        assert np.array_equal(out, d)
        out[0] = 99.0
        assert d[0] == 0.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            noise.add_coupling_noise(np.zeros(3), -1.0, noise.stream_rng(1))

    def test_noise_statistics(self):
        d = np.zeros(20000)
        out = noise.add_coupling_noise(d, 2e-4, noise.stream_rng(9))
        assert abs(out.std() / 2e-4 - 1.0) < 0.03


class TestSensitivity:
    def test_shape(self, fragment):
        seq, frag = fragment
        sens = noise.sensitivity(frag, seq)
        assert sens.g_phi.shape == (7, 21, 5)
        assert sens.g_psi.shape == (7, 21, 5)

    def test_matches_independent_finite_difference(self, fragment):
        # same derivative from a one-coordinate-at-a-time evaluation at
        # a different step size
        seq, frag = fragment
        sens = noise.sensitivity(frag, seq)
        step = 3e-6
        for k in (0, 3, 6):
            for which in ("phi", "psi"):
                angles_p = frag.angles.copy()
                angles_m = frag.angles.copy()
                col = 0 if which == "phi" else 1
                angles_p[k, col] += step
                angles_m[k, col] -= step
                tp = geometry.TorsionSet(angles_p)
                tm = geometry.TorsionSet(angles_m)
                Ap, _, _ = estimators.design_from_torsions(seq, tp.phi, tp.psi)
                Am, _, _ = estimators.design_from_torsions(seq, tm.phi, tm.psi)
                g = (Ap - Am) / (2 * step)
                ref = sens.g_phi[k] if which == "phi" else sens.g_psi[k]
                assert np.allclose(g, ref, atol=1e-4)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            noise.SensitivityTensor(np.zeros((2, 3, 5)), np.zeros((1, 3, 5)))


class TestResidualProjector:
    def test_projector_identities(self, design_and_d):
        design, _, _ = design_and_d
        P = noise.residual_projector(design)
        assert np.allclose(P, P.T, atol=1e-12)
        assert np.allclose(P @ P, P, atol=1e-12)
        assert np.allclose(P @ design.A, 0.0, atol=1e-12)
        assert abs(np.trace(P) - (design.A.shape[0] - 5)) < 1e-9

    def test_expected_quadratic_matches_loop(self, design_and_d, fragment):
        seq, frag = fragment
        design, d, S = design_and_d
        sens = noise.sensitivity(frag, seq)
        s = tensor.from_tensor(S)
        q = noise.expected_quadratic(sens, design, s)
        P = noise.residual_projector(design)
        ref = 0.0
        for k in range(len(frag)):
            for g in (sens.g_phi[k], sens.g_psi[k]):
                w = g @ s
                ref += float(w @ P @ w)
        assert abs(q - ref) < 1e-12 * max(1.0, abs(ref))


class TestEstimateSigma:
    def test_recovers_small_noise(self, fragment, design_and_d):
        # mean estimate over templates perturbed at 4 degrees lands
        # within 15% of the truth
        seq, frag = fragment
        _, d, _ = design_and_d
        sigma = np.deg2rad(4.0)
        rng = noise.stream_rng(21)
        estimates = []
        for _ in range(60):
            template = noise.perturb_torsions(frag, sigma, rng)
            design, fit = debias.template_fit(template, seq, d=d)
            sens = noise.sensitivity(template, seq)
            estimates.append(noise.estimate_sigma(fit, sens, design))
        assert abs(np.mean(estimates) / sigma - 1.0) < 0.15

    def test_zero_noise_gives_zero(self, fragment, design_and_d):
        seq, frag = fragment
        _, d, _ = design_and_d
        design, fit = debias.template_fit(frag, seq, d=d)
        sens = noise.sensitivity(frag, seq)
        assert noise.estimate_sigma(fit, sens, design) < 1e-8


class TestEstimateSigmaAdd:
    def test_unbiased_for_additive_noise(self, design_and_d):
        # <sigma_hat^2> matches sigma_add^2 over many draws
        design, d, _ = design_and_d
        sigma_add = 5e-5
        rng = noise.stream_rng(31)
        sq = []
        for _ in range(2000):
            fit = estimators.ols_fit(
                design, noise.add_coupling_noise(d, sigma_add, rng))
            sq.append(noise.estimate_sigma_add(fit) ** 2)
        assert abs(np.mean(sq) / sigma_add ** 2 - 1.0) < 0.05

    def test_too_few_couplings_rejected(self, design_and_d):
        design, d, _ = design_and_d
        sub = estimators.DesignMatrix(design.A[:5])
        fit = estimators.ols_fit(sub, d[:5])
        with pytest.raises(noise.NoiseError):
            noise.estimate_sigma_add(fit)
