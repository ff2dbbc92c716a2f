import numpy as np
import pytest

import oracles
from avref.errors import CalibrationError, ConfigurationError, GroundingError
from avref.grounding import (
    Calibration,
    Grounder,
    GrounderConfig,
    GroundingHead,
    OracleGrounder,
    build_examples,
    example_loss_and_grads,
    image_to_robot,
    train_grounding,
    selection_accuracy,
)
from avref.instructions import TaskKind
from avref.nn import grad_check
from avref.scene import (
    CandidateRegion,
    DetectorNoise,
    FeatureMapPyramid,
    R_LOC_DIM,
    make_task,
    propose_regions,
    render_features,
    scene_task_set,
)
from avref.seeding import derive_seed, rng_for

SMALL = dict(sizes=(2, 4, 8), channels=(6, 5, 4), fusion_dim=5, attn_dim=7,
             embed_dim=8, hidden_dim=6)


def small_head(seed=0, feature_dim=24):
    return GroundingHead(feature_dim, SMALL["channels"], SMALL["fusion_dim"],
                         SMALL["attn_dim"], np.random.default_rng(seed))


def random_pyramid(rng, sizes=(2, 4, 8), channels=(6, 5, 4)):
    return FeatureMapPyramid(
        [rng.normal(size=(s, s, c)) for s, c in zip(sizes, channels)], sizes, channels
    )


def candidate(rng, box=None, object_id=0):
    box = box or tuple(sorted(rng.uniform(10, 240, size=2)) + [250, 250])
    box = (box[0], box[1], min(box[0] + 40, 255), min(box[1] + 40, 255))
    feat = rng.normal(size=R_LOC_DIM)
    return CandidateRegion(object_id, box, feat, 0.9, "bottle")


class TestFuse:
    def test_zero_instruction_zero_bias_annihilates(self, rng):
        head = small_head()
        head.b_gate[:] = 0.0
        pyramid = random_pyramid(rng)
        fused = head.fuse(np.zeros(24), pyramid)
        for lvl in fused.per_level:
            assert not np.any(lvl)
        assert not np.any(fused.merged)

    def test_single_cell_grid_is_gated_product(self, rng):
        head = GroundingHead(6, (3,), 4, 5, rng)
        f_t = rng.normal(size=6)
        grid = rng.normal(size=(1, 1, 3))
        pyramid = FeatureMapPyramid([grid], (1,), (3,))
        fused = head.fuse(f_t, pyramid)
        from avref.nn.ops import leaky_relu

        gate = leaky_relu(f_t @ head.w_gate + head.b_gate)
        vis = leaky_relu(grid[0, 0] @ head.w_vis[0] + head.b_vis[0])
        np.testing.assert_allclose(fused.merged[0, 0], gate * vis, atol=1e-12)

    def test_matches_scalar_oracle_seed3(self):
        rng = np.random.default_rng(3)
        head = small_head(seed=3)
        f_t = rng.normal(size=24)
        pyramid = random_pyramid(rng)
        fused = head.fuse(f_t, pyramid)
        ref = oracles.fuse(
            head.w_gate.tolist(), head.b_gate.tolist(),
            [w.tolist() for w in head.w_vis], [b.tolist() for b in head.b_vis],
            f_t.tolist(), [lvl.tolist() for lvl in pyramid.levels],
        )
        np.testing.assert_allclose(fused.merged, np.array(ref), atol=1e-9)

    def test_dimension_mismatch(self, rng):
        head = small_head()
        with pytest.raises(ConfigurationError):
            head.fuse(np.zeros(7), random_pyramid(rng))


class TestAttend:
    def test_single_candidate_selected(self, rng):
        head = small_head()
        fused = head.fuse(rng.normal(size=24), random_pyramid(rng))
        result = head.attend(fused, [candidate(rng)])
        np.testing.assert_allclose(result.beta, [1.0])
        assert result.selected_index == 0

    def test_identical_candidates_uniform(self, rng):
        head = small_head()
        fused = head.fuse(rng.normal(size=24), random_pyramid(rng))
        c = candidate(rng)
        result = head.attend(fused, [c, c, c, c])
        np.testing.assert_allclose(result.beta, np.full(4, 0.25), atol=1e-12)

    def test_zero_weights_uniform(self, rng):
        head = small_head()
        head.w_score[:] = 0.0
        fused = head.fuse(rng.normal(size=24), random_pyramid(rng))
        cands = [candidate(rng, object_id=i) for i in range(3)]
        result = head.attend(fused, cands)
        np.testing.assert_allclose(result.beta, np.full(3, 1 / 3), atol=1e-12)

    def test_empty_candidates(self, rng):
        head = small_head()
        fused = head.fuse(rng.normal(size=24), random_pyramid(rng))
        with pytest.raises(GroundingError):
            head.attend(fused, [])

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(17)
        head = small_head(seed=17)
        f_t = rng.normal(size=24)
        pyramid = random_pyramid(rng)
        fused = head.fuse(f_t, pyramid)
        cands = [candidate(rng, object_id=i) for i in range(3)]
        result = head.attend(fused, cands)
        beta, s_loc, best = oracles.attend(
            head.w_map.tolist(), head.b_map.tolist(),
            head.w_reg.tolist(), head.b_reg.tolist(), head.w_score.tolist(),
            fused.merged.tolist(),
            [c.box for c in cands], [c.feature.tolist() for c in cands],
        )
        np.testing.assert_allclose(result.beta, beta, atol=1e-9)
        np.testing.assert_allclose(result.s_loc, s_loc, atol=1e-9)
        assert result.selected_index == best

    def test_beta_sums_to_one_and_argmax_rule(self, rng):
        head = small_head(seed=2)
        fused = head.fuse(rng.normal(size=24), random_pyramid(rng))
        cands = [candidate(rng, object_id=i) for i in range(5)]
        result = head.attend(fused, cands)
        assert abs(result.beta.sum() - 1.0) < 1e-9
        assert np.all(result.beta >= 0)
        assert result.selected_index == int(np.argmax(result.s_loc))


class TestCalibration:
    def test_identity(self):
        calib = Calibration(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        assert image_to_robot((12.5, 30.0), calib) == (12.5, 30.0)

    def test_translation(self):
        calib = Calibration(np.array([[1.0, 0.0, 100.0], [0.0, 1.0, 0.0]]))
        assert image_to_robot((10.0, 20.0), calib) == (110.0, 20.0)

    def test_fit_recovers_affine(self):
        rng = np.random.default_rng(0)
        true = np.array([[2.4, 0.1, -300.0], [-0.05, 2.6, -310.0]])
        px = rng.uniform(0, 256, size=(4, 2))
        mm = (np.column_stack([px, np.ones(4)]) @ true.T)
        calib = Calibration.fit(px, mm)
        np.testing.assert_allclose(calib.matrix, true, atol=1e-9)

    def test_roundtrip_within_half_pixel(self):
        calib = Calibration.default()
        for point in [(0.0, 0.0), (128.0, 128.0), (255.0, 13.0)]:
            mm = calib.apply(point)
            back = calib.invert(mm)
            assert abs(back[0] - point[0]) < 0.5
            assert abs(back[1] - point[1]) < 0.5

    def test_unfitted_raises(self):
        with pytest.raises(CalibrationError):
            Calibration().apply((1.0, 2.0))

    def test_collinear_rejected(self):
        px = [(0, 0), (10, 10), (20, 20)]
        mm = [(0, 0), (25, 25), (50, 50)]
        with pytest.raises(CalibrationError):
            Calibration.fit(px, mm)

    def test_residual_enforced(self):
        px = [(0, 0), (10, 0), (0, 10), (10, 10)]
        mm = [(0, 0), (25, 0), (0, 25), (250, 250)]  # grossly non-affine
        with pytest.raises(CalibrationError):
            Calibration.fit(px, mm)


def tiny_config(**kw):
    base = dict(embed_dim=8, hidden_dim=6, fusion_dim=5, attn_dim=7,
                sizes=(2, 4, 8), channels=(6, 5, 4), detector=DetectorNoise(),
                epochs=2, lr=5e-3)
    base.update(kw)
    return GrounderConfig(**base)


class TestGrounderTraining:
    def test_joint_grad_check(self, vocab):
        cfg = tiny_config()
        model = Grounder(vocab, cfg, rng_for(101, "init"))
        tasks = [make_task(1, TaskKind.EXISTENCE, 3), make_task(5, TaskKind.EXPLORATORY, 4)]
        examples, skipped = build_examples(tasks, cfg, vocab, 99)
        assert skipped == 0
        params = model.params()
        for i, ex in enumerate(examples):
            err = grad_check(lambda: example_loss_and_grads(model, ex), params,
                             rng_for(50 + i, "gc"), num_coords=220)
            assert err < 1e-5

    def test_loss_decreases(self, vocab):
        tasks = []
        for i in range(30):
            tasks.extend(scene_task_set((i % 6) + 1, derive_seed(9, "t", i),
                                        families=(TaskKind.EXISTENCE,)))
        model, curve, _, _ = train_grounding(tasks, vocab, tiny_config(epochs=3), 5)
        assert curve[-1][1] < curve[0][1]

    def test_training_deterministic(self, vocab):
        tasks = [make_task(1, TaskKind.EXISTENCE, s) for s in range(10)]
        cfg = tiny_config(epochs=1)
        m1, _, _, _ = train_grounding(tasks, vocab, cfg, 5)
        m2, _, _, _ = train_grounding(tasks, vocab, cfg, 5)
        for (n1, p1), (n2, p2) in zip(sorted(m1.params().items()), sorted(m2.params().items())):
            assert n1 == n2
            assert p1.tobytes() == p2.tobytes()

    def test_missing_target_candidates_skipped(self, vocab):
        cfg = tiny_config(detector=DetectorNoise(p_miss=1.0))
        tasks = [make_task(1, TaskKind.EXISTENCE, s) for s in range(3)]
        examples, skipped = build_examples(tasks, cfg, vocab, 0)
        assert examples == []
        assert skipped == 3


class TestBottleIndistinguishability:
    def test_content_permutation_leaves_scores_unchanged(self, vocab):
        from avref.audio.synth import ObjectClass
        from avref.scene import Scene, SceneObject, ground_truth_for

        cfg = tiny_config()
        model = Grounder(vocab, cfg, rng_for(8, "init"))
        task = make_task(2, TaskKind.EXISTENCE, 6)
        pyramid = render_features(task.scene, 1, cfg.sizes, cfg.channels)
        cands = propose_regions(task.scene, DetectorNoise.none(), 2)
        out1 = model.ground(task, pyramid, cands)

        rotated = Scene(
            [
                SceneObject(o.id, o.kind, o.box, o.color, o.distractor,
                            contents=(ObjectClass((int(o.contents) + 1) % 12)
                                      if o.contents is not None else None),
                            table_mm=o.table_mm)
                for o in task.scene.objects
            ],
            task.scene.frame_px, task.scene.archetype, task.scene.seed, task.scene.anchored,
        )
        task2 = ground_truth_for(rotated, task.intent)
        pyramid2 = render_features(rotated, 1, cfg.sizes, cfg.channels)
        cands2 = propose_regions(rotated, DetectorNoise.none(), 2)
        out2 = model.ground(task2, pyramid2, cands2)
        np.testing.assert_array_equal(out1["target"].s_loc, out2["target"].s_loc)
        np.testing.assert_array_equal(out1["target"].beta, out2["target"].beta)


class TestOracleGrounder:
    def test_selects_ground_truth(self):
        task = make_task(1, TaskKind.EXISTENCE, 9)
        cands = propose_regions(task.scene, DetectorNoise.none(), 0)
        out = OracleGrounder().ground(task, None, cands)
        assert out["target"].selected.object_id in task.referent_ids
        assert out["destination"].selected.object_id == task.destination_id

    def test_missing_candidate_raises(self):
        task = make_task(1, TaskKind.EXISTENCE, 9)
        with pytest.raises(GroundingError):
            OracleGrounder().ground(task, None, [])


class TestPersistence:
    def test_save_load_bit_exact(self, vocab, tmp_path):
        cfg = tiny_config()
        model = Grounder(vocab, cfg, rng_for(3, "init"))
        path = tmp_path / "grounder.npz"
        model.save(path)
        loaded = Grounder.load(path)
        for (n1, p1), (n2, p2) in zip(sorted(model.params().items()),
                                      sorted(loaded.params().items())):
            assert n1 == n2
            assert p1.tobytes() == p2.tobytes()
        task = make_task(1, TaskKind.EXISTENCE, 2)
        pyr = render_features(task.scene, 0, cfg.sizes, cfg.channels)
        cands = propose_regions(task.scene, DetectorNoise.none(), 1)
        a = model.ground(task, pyr, cands)
        b = loaded.ground(task, pyr, cands)
        np.testing.assert_array_equal(a["target"].s_loc, b["target"].s_loc)
