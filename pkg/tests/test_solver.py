import math

import numpy as np
import pytest

import hfmri.solver as solver
from hfmri.core import InvalidArgument, NumericalError, PatchSupport, make_grid
from hfmri.frames import FilterBank, analyze, check_uep, synthesize
from hfmri.phantom import SamplingMask, add_noise_to_snr, default_phantom, ellipse_kspace, vardensity_mask
from hfmri.solver import (
    R_UNSAMPLED_ORIGIN,
    SolverParams,
    SolverState,
    hard_threshold,
    init_state,
    objective,
    objective_increments,
    procrustes_bank,
    project_C,
    reconstruct,
    synthesis,
    update_c,
    update_v,
    update_w,
    zero_fill,
)
from hfmri.transforms import WeightSpec, gradient_weight, hankel_gram, idft


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def phantom_problem(N, ratio=0.3, seed=0, snr=25.0, scale=1.0):
    v = scale * ellipse_kspace(default_phantom().rescaled(N, N))
    mask = vardensity_mask(make_grid(N), ratio, seed=seed)
    f, _ = add_noise_to_snr(v, mask, snr, seed=seed)
    return v, f * mask.weights(), mask


def random_state(rng, N, K, density=0.3, R=50.0):
    M2 = K * K
    Q, _ = np.linalg.qr(crandn(rng, M2, M2))
    bank = FilterBank(Q / K, PatchSupport.square(K))
    c = crandn(rng, M2, 2, N, N) * (rng.random((M2, 2, N, N)) < density)
    v = project_C(crandn(rng, N, N) * 10, R)
    state = SolverState.from_arrays(v, c, bank, R=R, L=float(N))
    return state


# ---------------------------------------------------------------- projection

def test_project_interior_unchanged():
    v = np.array([[1 + 1j, -0.5], [0.2j, 0]])
    assert np.array_equal(project_C(v, 2.0), v)


def test_project_345():
    out = project_C(np.array([[3 + 4j]]), 2.5)
    assert out[0, 0] == pytest.approx(1.5 + 2j, abs=1e-15)


def test_project_idempotent():
    v = crandn(np.random.default_rng(0), 8, 8) * 5
    once = project_C(v, 3.0)
    assert np.array_equal(project_C(once, 3.0), once)
    assert np.abs(once).max() <= 3.0 + 1e-15


def test_project_rejects_nonpositive_R():
    with pytest.raises(InvalidArgument):
        project_C(np.zeros((2, 2)), 0.0)


# ---------------------------------------------------------------- params

def test_params_defaults_are_phantom_preset():
    p = SolverParams()
    assert p == SolverParams.phantom_preset()
    assert (p.K, p.r, p.mu, p.gamma) == (25, 500, 0.1, 10.0)
    assert (p.beta1, p.beta2, p.beta3, p.eps, p.max_iter) == (1e-4, 1e-4, 1e-4, 2e-4, 600)


def test_params_real_preset():
    p = SolverParams.real_preset()
    assert (p.K, p.r, p.mu, p.gamma) == (45, 1620, 0.05, 5.0)


def test_threshold_phantom_preset():
    assert SolverParams().threshold == pytest.approx(math.sqrt(20 / 0.1001), rel=1e-15)
    assert SolverParams().threshold == pytest.approx(14.135, abs=5e-4)


@pytest.mark.parametrize("kw", [
    dict(K=0), dict(K=3, r=10), dict(r=0), dict(mu=0), dict(beta1=-1),
    dict(gamma=-1), dict(eps=0), dict(R=-2.0), dict(max_iter=-1), dict(L=0.0),
    dict(init_subgrid_fraction=0.0),
])
def test_params_invalid(kw):
    with pytest.raises(InvalidArgument):
        SolverParams(**kw)


# ---------------------------------------------------------------- init

def test_init_R_from_dc():
    _, f, mask = phantom_problem(32)
    st = init_state(f, mask, SolverParams(K=4, r=10))
    assert st.R == abs(f[16, 16])


def test_init_R_unsampled_origin():
    rng = np.random.default_rng(1)
    ind = rng.random((16, 16)) < 0.5
    ind[8, 8] = False
    f = crandn(rng, 16, 16) * ind
    st = init_state(f, SamplingMask(make_grid(16), ind), SolverParams(K=3, r=5))
    assert st.R == R_UNSAMPLED_ORIGIN == 1e8


def test_init_R_explicit():
    _, f, mask = phantom_problem(16)
    assert init_state(f, mask, SolverParams(K=3, r=5, R=7.0)).R == 7.0


def test_init_structure_and_uep():
    _, f, mask = phantom_problem(32)
    p = SolverParams(K=5, r=12)
    st = init_state(f, mask, p)
    assert check_uep(st.bank) <= 1e-10
    assert np.abs(st.v).max() <= st.R
    assert np.array_equal(st.v, project_C(mask.weights() * f, st.R))
    c = st.c
    assert not np.any(c[p.r:])
    full = analyze(st.bank, gradient_weight(st.v, WeightSpec(32.0, make_grid(32))))
    assert np.allclose(c[:p.r], full[:p.r], atol=1e-12 * np.abs(full).max())


def test_init_tail_exactly_zero_on_rank_deficient_data():
    # rank-2 exponential-sum k-space with a full mask
    N, K = 16, 4
    k1, k2 = make_grid(N).mesh()
    v = np.exp(-2j * np.pi * (3.3 * k1 + 1.7 * k2) / N) + 0.5 * np.exp(2j * np.pi * (2.1 * k1 - 4.6 * k2) / N)
    mask = SamplingMask(make_grid(N), np.ones((N, N), bool))
    st = init_state(v, mask, SolverParams(K=K, r=4, R=1e8))
    assert not np.any(st.c[4:])


def test_init_K_too_large():
    _, f, mask = phantom_problem(16)
    with pytest.raises(InvalidArgument):
        init_state(f, mask, SolverParams(K=9, r=5))


def test_init_objective_matches_direct():
    _, f, mask = phantom_problem(16)
    p = SolverParams(K=3, r=5, gamma=0.01, mu=0.2)
    st = init_state(f, mask, p)
    assert st.trace[0].objective == pytest.approx(objective(st, f, mask, p), rel=1e-12)


def test_empty_mask_rejected():
    mask = SamplingMask(make_grid(8), np.zeros((8, 8), bool))
    with pytest.raises(InvalidArgument):
        init_state(np.zeros((8, 8)), mask, SolverParams(K=2, r=2))


def test_grid_mismatch_rejected():
    mask = vardensity_mask(make_grid(8), 0.5)
    with pytest.raises(InvalidArgument):
        init_state(np.zeros((16, 16)), mask, SolverParams(K=2, r=2))


# ---------------------------------------------------------------- v-step

def test_update_v_scalar_average():
    # one sampled entry away from the origin where the weight term is absent (mu -> 0)
    N = 4
    ind = np.zeros((N, N), bool)
    ind[2, 2] = True
    f = np.zeros((N, N), complex)
    f[2, 2] = 2.0
    bank = FilterBank.standard(PatchSupport.square(1))
    st = SolverState.from_arrays(np.zeros((N, N)), np.zeros((1, 2, N, N)), bank, R=10.0, L=1.0)
    p = SolverParams(K=1, r=1, mu=1e-300, beta1=1.0)
    v = update_v(st, f, SamplingMask(make_grid(N), ind), p)
    assert v[2, 2] == pytest.approx(1.0, abs=1e-12)


def test_update_v_prox_dominance():
    rng = np.random.default_rng(2)
    st = random_state(rng, 8, 2)
    mask = vardensity_mask(make_grid(8), 0.5)
    f = crandn(rng, 8, 8) * mask.weights()
    p = SolverParams(K=2, r=2, mu=1e-300, beta1=1e6)
    v = update_v(st, f, mask, p)
    resid = np.linalg.norm(mask.weights() * (st.v - f))
    assert np.linalg.norm(v - st.v) <= resid / p.beta1


def test_update_v_solves_entrywise_quadratic():
    # J(v) = 1/2|m v - f|^2 + mu/2 |Lambda v - W* c|^2 + beta1/2 |v - v_n|^2, per entry
    rng = np.random.default_rng(3)
    N = 8
    st = random_state(rng, N, 2, R=1e9)
    mask = vardensity_mask(make_grid(N), 0.5, seed=1)
    f = crandn(rng, N, N) * mask.weights()
    p = SolverParams(K=2, r=2, mu=0.7, beta1=0.3)
    spec = WeightSpec(st.L, make_grid(N))
    target = synthesize(st.bank, st.c)
    m = mask.weights()

    def J(v):
        d = gradient_weight(v, spec) - target
        return (0.5 * np.abs(m * v - f) ** 2 + 0.5 * p.mu * np.sum(np.abs(d) ** 2, axis=0)
                + 0.5 * p.beta1 * np.abs(v - st.v) ** 2)

    v = update_v(st, f, mask, p)
    # the objective is separable; test each entry against perturbations
    base = J(v)
    for delta in (1e-3, -1e-3, 1e-3j, -1e-3j):
        assert np.all(J(v + delta) >= base - 1e-9)
    assert J(v).sum() <= J(st.v).sum() and J(v).sum() <= J(np.zeros_like(v)).sum()


def test_update_v_respects_R():
    rng = np.random.default_rng(4)
    st = random_state(rng, 8, 2, R=0.5)
    mask = vardensity_mask(make_grid(8), 0.5)
    f = 100 * crandn(rng, 8, 8) * mask.weights()
    v = update_v(st, f, mask, SolverParams(K=2, r=2))
    assert np.abs(v).max() <= 0.5 + 1e-15


# ---------------------------------------------------------------- c-step

def test_hard_threshold_definition():
    out = hard_threshold(np.array([3.0, 1.5, -2.5]), 2.0)
    assert out.tolist() == [3.0, 0.0, -2.5]


def test_hard_threshold_tie_goes_to_zero():
    assert hard_threshold(np.array([2.0, -2.0, 2j]), 2.0).tolist() == [0, 0, 0]


def test_hard_threshold_is_l0_prox():
    # argmin gamma 1{c != 0} + a/2 |c - z|^2 over the two candidates {0, z}
    rng = np.random.default_rng(5)
    gamma, a = 0.8, 1.7
    lam = math.sqrt(2 * gamma / a)
    z = crandn(rng, 200)
    out = hard_threshold(z, lam)
    for zi, oi in zip(z, out):
        best = 0 if 0.5 * a * abs(zi) ** 2 <= gamma else zi
        assert oi == best


def test_update_c_gamma_zero_is_weighted_average():
    rng = np.random.default_rng(6)
    st = random_state(rng, 8, 2)
    p = SolverParams(K=2, r=2, gamma=0.0, mu=0.3, beta2=0.2)
    w = gradient_weight(st.v, st.weights)
    expected = (p.mu * analyze(st.bank, w) + p.beta2 * st.c) / (p.mu + p.beta2)
    assert np.allclose(update_c(st, p), expected, atol=1e-12)


def test_update_c_thresholds():
    rng = np.random.default_rng(7)
    st = random_state(rng, 8, 2)
    p = SolverParams(K=2, r=2, gamma=3.0, mu=0.3, beta2=0.2)
    w = gradient_weight(st.v, st.weights)
    z = (p.mu * analyze(st.bank, w) + p.beta2 * st.c) / (p.mu + p.beta2)
    out = update_c(st, p)
    assert np.allclose(out, hard_threshold(z, p.threshold), atol=1e-12)
    assert 0 < np.count_nonzero(out) < out.size


def test_update_c_does_not_mutate_state():
    rng = np.random.default_rng(8)
    st = random_state(rng, 8, 2)
    before = st.c.copy()
    update_c(st, SolverParams(K=2, r=2, gamma=1.0))
    assert np.array_equal(st.c, before)


# ---------------------------------------------------------------- W-step

def test_procrustes_fixed_point():
    rng = np.random.default_rng(9)
    Q, _ = np.linalg.qr(crandn(rng, 9, 9))
    bank = procrustes_bank(Q / 3 * 5.0, PatchSupport.square(3))
    assert np.allclose(bank.A, Q / 3, atol=1e-12)


def _dupdate_objective(st, c, A, p):
    bank = FilterBank(A, st.bank.support)
    w = gradient_weight(st.v, st.weights)
    return (0.5 * p.mu * np.sum(np.abs(analyze(bank, w) - c) ** 2)
            + 0.5 * p.beta3 * np.sum(np.abs(A - st.bank.A) ** 2))


def test_update_w_beats_random_feasible_points():
    rng = np.random.default_rng(10)
    N, K = 8, 2
    st = random_state(rng, N, K, density=0.5)
    p = SolverParams(K=K, r=2, mu=0.4, beta3=0.05)
    new = update_w(st, p)
    assert check_uep(new) <= 1e-10
    best = _dupdate_objective(st, st.c, new.A, p)
    assert best <= _dupdate_objective(st, st.c, st.bank.A, p) + 1e-9
    for _ in range(20):
        Q, _ = np.linalg.qr(crandn(rng, K * K, K * K))
        assert best <= _dupdate_objective(st, st.c, Q / K, p) + 1e-9


# ---------------------------------------------------------------- objective

def test_objective_c_zero():
    rng = np.random.default_rng(11)
    st = random_state(rng, 8, 2, density=0.0)
    mask = vardensity_mask(make_grid(8), 0.5)
    f = crandn(rng, 8, 8) * mask.weights()
    p = SolverParams(K=2, r=2, mu=0.3)
    w = gradient_weight(st.v, st.weights)
    expected = 0.5 * np.sum(np.abs(mask.weights() * st.v - f) ** 2) + 0.15 * np.sum(np.abs(w) ** 2)
    assert objective(st, f, mask, p) == pytest.approx(expected, rel=1e-10)


def test_objective_consistent_state_is_zero():
    _, f, _ = phantom_problem(8)
    mask = SamplingMask(make_grid(8), np.ones((8, 8), bool))
    bank = FilterBank.standard(PatchSupport.square(2))
    c = analyze(bank, gradient_weight(f, WeightSpec(8.0, make_grid(8))))
    st = SolverState.from_arrays(f, c, bank, R=1e8, L=8.0)
    assert objective(st, f, mask, SolverParams(K=2, r=2, gamma=0.0)) == pytest.approx(0.0, abs=1e-9)


def test_objective_counts_l0():
    rng = np.random.default_rng(12)
    st = random_state(rng, 8, 2, density=0.1)
    mask = vardensity_mask(make_grid(8), 0.5)
    f = crandn(rng, 8, 8) * mask.weights()
    F0 = objective(st, f, mask, SolverParams(K=2, r=2, gamma=0.0))
    F1 = objective(st, f, mask, SolverParams(K=2, r=2, gamma=2.0))
    assert F1 - F0 == pytest.approx(2.0 * np.count_nonzero(st.c), rel=1e-9)


# ---------------------------------------------------------------- sparse/dense paths

@pytest.mark.parametrize("factor", [1e9, 0.0])
def test_chunk_paths_match_oracles(monkeypatch, factor):
    monkeypatch.setattr(solver, "SPARSE_FACTOR", factor)
    monkeypatch.setattr(solver, "CHUNK_BYTES", 2 * 16 * 16 * 16 * 4)
    N, K = 16, 3
    rng = np.random.default_rng(13)
    st = random_state(rng, N, K, density=0.05)
    p = SolverParams(K=K, r=5, gamma=1.0)
    s = synthesis(st.store, st.bank)
    assert np.allclose(s, synthesize(st.bank, st.c), atol=1e-12)
    w, gram, store = solver._coefficient_pass(st, st.v, p, inplace=False)
    assert len(store.chunks) == 3
    assert all(ch.is_sparse == (factor > 1) for ch in store.chunks)
    G = hankel_gram(w, store.to_dense(), st.bank.support)
    assert np.allclose(gram, G, atol=1e-10 * np.abs(G).max())


def test_fold_pad_is_adjoint_of_wrap_pad():
    rng = np.random.default_rng(14)
    sup = PatchSupport.square(4)
    x = crandn(rng, 2, 8, 8)
    y = crandn(rng, 2 * 11 * 11)
    lhs = np.vdot(solver._wrap_pad(x, sup), y)
    rhs = np.vdot(x, solver._fold_pad(y, sup, 8))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


# ---------------------------------------------------------------- full runs

@pytest.fixture(scope="module")
def small_run():
    v, f, mask = phantom_problem(32, ratio=0.3, seed=1, scale=40.0)
    p = SolverParams(K=5, r=20, mu=0.05, gamma=5.0, max_iter=40)
    return v, f, mask, p, reconstruct(f, mask, p)


def test_run_monotone(small_run):
    _, _, _, p, res = small_run
    F = np.array([t.objective for t in res.trace])
    inc = objective_increments(res.trace, p.gamma)
    assert np.all(inc <= 1e-9 * np.abs(F[:-1]) + 1e-9)
    assert F[-1] < F[0]


def test_run_feasible_and_tight(small_run):
    _, _, _, _, res = small_run
    assert np.abs(res.v).max() <= res.state.R
    assert check_uep(res.state.bank) <= 1e-10


def test_run_trace_matches_direct_objective(small_run):
    _, f, mask, p, res = small_run
    assert res.trace[-1].objective == pytest.approx(objective(res.state, f, mask, p), rel=1e-9)


def test_run_image_is_idft(small_run):
    _, _, _, _, res = small_run
    assert np.array_equal(res.image, idft(res.v))


def test_run_deterministic(small_run):
    _, f, mask, p, res = small_run
    again = reconstruct(f, mask, p)
    a = np.array([t.objective for t in res.trace])
    b = np.array([t.objective for t in again.trace])
    assert np.allclose(a, b, rtol=1e-12, atol=0)
    assert np.array_equal(res.v, again.v)


def test_identity_problem():
    rng = np.random.default_rng(15)
    N = 16
    f = np.fft.fftshift(np.fft.fft2(rng.random((N, N))))
    mask = SamplingMask(make_grid(N), np.ones((N, N), bool))
    res = reconstruct(f, mask, SolverParams(K=3, r=9, gamma=1e-8, mu=1e-3, max_iter=50))
    assert res.converged and res.n_iters < 50
    ref = zero_fill(f, mask)
    err = np.linalg.norm(res.image - ref) / np.linalg.norm(ref)
    assert 20 * math.log10(1 / err) >= 60


def test_callback_and_cancel():
    _, f, mask = phantom_problem(16)
    seen = []
    res = reconstruct(f, mask, SolverParams(K=3, r=5, max_iter=10),
                      callback=lambda i, F, rel: seen.append(i),
                      cancel=lambda: len(seen) >= 2)
    assert res.cancelled and not res.converged
    assert seen == [1, 2] and res.n_iters == 2


def test_max_iter_zero_returns_init():
    _, f, mask = phantom_problem(16)
    res = reconstruct(f, mask, SolverParams(K=3, r=5, max_iter=0))
    assert res.n_iters == 0 and len(res.trace) == 1


def test_numerical_error_dump():
    _, f, mask = phantom_problem(16)
    f = f.copy()
    f[mask.indicator.nonzero()[0][3], mask.indicator.nonzero()[1][3]] = np.nan
    with pytest.raises(NumericalError) as info:
        reconstruct(f, mask, SolverParams(K=3, r=5, R=1e8, max_iter=5))
    assert "v" in info.value.state and "iter" in info.value.state
