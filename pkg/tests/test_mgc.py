import numpy as np
import numpy.testing as npt
import pytest

from a2fpn import mgc, oracles
from a2fpn.levels import LevelFeature


def test_compatibility_columns_are_distributions(rng):
    q = rng.standard_normal((7, 4)).astype(np.float32)
    k = rng.standard_normal((4, 5)).astype(np.float32)
    m = mgc.compatibility(q, k, 4)
    assert m.shape == (5, 7)  # keys × queries
    npt.assert_allclose(m.sum(axis=0), 1.0, atol=1e-6)


def test_compatibility_matches_oracle(rng):
    q = rng.standard_normal((6, 4))
    k = rng.standard_normal((4, 3))
    npt.assert_allclose(mgc.compatibility(q, k, 4),
                        oracles.compatibility_oracle(q, k, 4), atol=1e-12)


def test_compatibility_invariant_to_key_rescale(rng):
    # L2 normalization runs over the key feature axis, so stretching any
    # key column by a positive factor cannot move the map
    q = rng.standard_normal((6, 4))
    k = rng.standard_normal((4, 5)) + 0.1
    scales = rng.uniform(0.25, 30.0, size=5)
    npt.assert_allclose(mgc.compatibility(q, k * scales, 4),
                        mgc.compatibility(q, k, 4), atol=1e-12)


def test_compatibility_not_invariant_to_query_rescale(rng):
    # queries are deliberately left unnormalized
    q = rng.standard_normal((6, 4))
    k = rng.standard_normal((4, 5)) + 0.1
    assert not np.allclose(mgc.compatibility(q * 3.0, k, 4), mgc.compatibility(q, k, 4))


def test_compatibility_rejects_dim_mismatch(rng):
    with pytest.raises(ValueError):
        mgc.compatibility(rng.standard_normal((3, 4)), rng.standard_normal((5, 2)), 4)
    with pytest.raises(ValueError):
        mgc.compatibility(rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), 8)


def test_collect_context_shapes(rng):
    fdata = rng.standard_normal((4, 3, 5))
    psi = rng.standard_normal((6, 4))   # 6 context columns
    phi = rng.standard_normal((8, 4))   # embed to 8 channels
    bank, _ = mgc.collect_context_fwd(fdata, psi, phi)
    assert bank.shape == (8, 6)


def test_collect_pools_constant_map_exactly(rng):
    # every attention column is a distribution, so a constant embedding
    # pools back to itself
    fdata = np.ones((4, 3, 3))
    psi = rng.standard_normal((5, 4))
    phi = rng.standard_normal((8, 4))
    bank, _ = mgc.collect_context_fwd(fdata, psi, phi)
    want = (phi @ np.ones(4)).reshape(8, 1) * np.ones((1, 5))
    npt.assert_allclose(bank, want, atol=1e-12)


def test_orthogonal_loss_zero_at_orthonormal_rows():
    qr, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((8, 3)))
    params = mgc.MgcParams(
        levels={2: mgc.MgcLevelParams(theta=np.zeros((8, 8)), xi=np.zeros((8, 8)),
                                      psi=qr.T, phi=np.zeros((8, 8)),
                                      gcn=None)},
        lambda_o=1e-4,
    )
    assert mgc.orthogonal_reg_loss(params) < 1e-25


def test_orthogonal_loss_positive_off_manifold(rng):
    psi = rng.standard_normal((3, 8)) * 2.0
    params = mgc.MgcParams(
        levels={2: mgc.MgcLevelParams(theta=np.zeros((8, 8)), xi=np.zeros((8, 8)),
                                      psi=psi, phi=np.zeros((8, 8)), gcn=None)},
        lambda_o=1e-4,
    )
    loss = mgc.orthogonal_reg_loss(params)
    d = psi @ psi.T - np.eye(3)
    npt.assert_allclose(loss, 1e-4 * np.sum(d * d), atol=1e-12)
    grads = mgc.orthogonal_reg_grads(params)
    npt.assert_allclose(grads[2], 4e-4 * (d @ psi), atol=1e-12)


def test_gcn_layer_zero_mix_is_identity(rng):
    g = rng.standard_normal((8, 5))
    triplet = mgc.GcnParams(rng.standard_normal((2, 8)), rng.standard_normal((2, 8)),
                            np.zeros((8, 8)))
    npt.assert_array_equal(mgc.gcn_layer(g, triplet), g)


def test_reason_multilevel_concats_columns(rng):
    triplet = mgc.GcnParams(0.3 * rng.standard_normal((2, 8)),
                            0.3 * rng.standard_normal((2, 8)),
                            0.3 * rng.standard_normal((8, 8)))
    banks = [rng.standard_normal((8, 3)), rng.standard_normal((8, 5))]
    fused = mgc.reason_multilevel(banks, triplet)
    assert fused.shape == (8, 8)
    with pytest.raises(ValueError):
        mgc.reason_multilevel([banks[0], rng.standard_normal((4, 2))], triplet)


def _tiny_mgc_params(rng, c=8, collect=(2, 3), distribute=(2, 3, 4)):
    levels = {}
    for i, lvl in enumerate(distribute):
        kw = dict(theta=0.4 * rng.standard_normal((c, c)),
                  xi=0.4 * rng.standard_normal((c, c)))
        if lvl in collect:
            n = 4 - i
            qr, _ = np.linalg.qr(rng.standard_normal((c, n)))
            kw.update(psi=qr.T, phi=0.4 * rng.standard_normal((c, c)),
                      gcn=mgc.GcnParams(0.4 * rng.standard_normal((c // 4, c)),
                                        0.4 * rng.standard_normal((c // 4, c)),
                                        0.4 * rng.standard_normal((c, c))))
        levels[lvl] = mgc.MgcLevelParams(**kw)
    shared = mgc.GcnParams(0.4 * rng.standard_normal((c // 4, c)),
                           0.4 * rng.standard_normal((c // 4, c)),
                           0.4 * rng.standard_normal((c, c)))
    return mgc.MgcParams(levels=levels, shared_gcn=shared,
                         out_weight=0.4 * rng.standard_normal((c, c)))


def test_mgc_forward_enriches_every_level(rng):
    params = _tiny_mgc_params(rng)
    feats = [LevelFeature(2, 4, rng.standard_normal((8, 4, 4))),
             LevelFeature(3, 8, rng.standard_normal((8, 2, 2))),
             LevelFeature(4, 16, rng.standard_normal((8, 1, 2)))]
    outs = mgc.mgc_forward(feats, params)
    assert [f.level for f in outs] == [2, 3, 4]
    for before, after in zip(feats, outs):
        assert after.data.shape == before.data.shape
        assert not np.allclose(after.data, before.data)


def test_mgc_forward_zero_out_weight_is_residual_projection(rng):
    # with the output mix zeroed, distribution degenerates to the xi path
    params = _tiny_mgc_params(rng)
    params.out_weight = np.zeros_like(params.out_weight)
    feats = [LevelFeature(2, 4, rng.standard_normal((8, 4, 4))),
             LevelFeature(3, 8, rng.standard_normal((8, 2, 2)))]
    outs = mgc.mgc_forward(feats, params)
    for f in feats:
        xi = params.levels[f.level].xi
        want = (xi @ f.data.reshape(8, -1)).reshape(f.data.shape)
        got = next(o for o in outs if o.level == f.level)
        npt.assert_allclose(got.data, want, atol=1e-12)


def test_mgc_forward_requires_a_collector(rng):
    params = _tiny_mgc_params(rng, collect=())
    feats = [LevelFeature(2, 4, rng.standard_normal((8, 2, 2)))]
    with pytest.raises(ValueError):
        mgc.mgc_forward(feats, params)


def test_mgc_backward_covers_all_param_names(rng):
    params = _tiny_mgc_params(rng)
    feats = [LevelFeature(2, 4, rng.standard_normal((8, 4, 4))),
             LevelFeature(3, 8, rng.standard_normal((8, 2, 2))),
             LevelFeature(4, 16, rng.standard_normal((8, 1, 2)))]
    outs, cache = mgc.mgc_forward_fwd(feats, params)
    glevels, pg = mgc.mgc_forward_bwd(cache, [np.ones_like(o.data) for o in outs])
    assert sorted(glevels) == [2, 3, 4]
    want = {"mgc.out.weight"}
    want |= {f"mgc.shared_gcn.w{i}.weight" for i in (1, 2, 3)}
    for lvl in (2, 3, 4):
        want |= {f"mgc.l{lvl}.theta.weight", f"mgc.l{lvl}.xi.weight"}
    for lvl in (2, 3):
        want |= {f"mgc.l{lvl}.psi.weight", f"mgc.l{lvl}.phi.weight"}
        want |= {f"mgc.l{lvl}.gcn.w{i}.weight" for i in (1, 2, 3)}
    assert set(pg) == want
