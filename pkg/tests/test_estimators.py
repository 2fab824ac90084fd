import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from windb.estimators import (
    DiscriminativeVerticalBlur,
    DistortionFreeProjector,
    MeshScreen,
    SphericalDBSCAN,
)
from windb.geometry import GridSpec, build_grid
from windb.pipeline import (
    PipelineConfig,
    apply_mesh,
    blur_overlaps_frame,
    build_mesh_mask,
    project_distortion_free,
)
from windb.validation import FrameError


def frames(n=2, w=96, h=48, seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, (h, w, 3), dtype=np.uint8) for _ in range(n)]


class TestFrameStages:
    def test_pipeline_matches_function_chain(self):
        fs = frames()
        chain = Pipeline([
            ("project", DistortionFreeProjector()),
            ("dvb", DiscriminativeVerticalBlur()),
            ("mesh", MeshScreen()),
        ])
        got = chain.fit_transform(fs)
        gm = build_grid(GridSpec(96, 48, 30.0))
        cfg = PipelineConfig()
        for frame, out in zip(fs, got):
            want = apply_mesh(
                blur_overlaps_frame(project_distortion_free(frame, gm), gm, cfg),
                build_mesh_mask(gm, 5),
            )
            assert np.array_equal(out, want)

    def test_single_frame_in_single_frame_out(self):
        f = frames(1)[0]
        out = DistortionFreeProjector().fit(f).transform(f)
        assert isinstance(out, np.ndarray) and out.shape == f.shape

    def test_unfitted_transform_rejected(self):
        with pytest.raises(FrameError, match="not fitted"):
            MeshScreen().transform(frames(1)[0])

    def test_get_params_and_clone(self):
        stage = DiscriminativeVerticalBlur(interval_deg=15.0, ksize=11, sigma=2.0)
        params = stage.get_params()
        assert params == {"interval_deg": 15.0, "ksize": 11, "sigma": 2.0}
        twin = clone(stage)
        assert twin.get_params() == params

    def test_set_params(self):
        stage = MeshScreen().set_params(thickness_px=3)
        assert stage.thickness_px == 3


class TestSphericalDBSCAN:
    def test_two_clusters_and_noise(self):
        rng = np.random.default_rng(1)
        a = np.stack([rng.normal(0, 0.01, 8), rng.normal(0, 0.01, 8)], axis=1)
        b = np.stack([rng.normal(0, 0.01, 8), rng.normal(math.pi / 2, 0.01, 8)], axis=1)
        lone = np.array([[1.2, -2.0]])
        est = SphericalDBSCAN(eps_deg=10.0, min_pts=3).fit(np.concatenate([a, b, lone]))
        assert set(est.labels_[:8]) == {0}
        assert set(est.labels_[8:16]) == {1}
        assert est.labels_[16] == -1
        assert est.noise_ == [16]

    def test_fit_predict_matches_labels(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.01], [0.0, 0.02]])
        est = SphericalDBSCAN(eps_deg=5.0, min_pts=2)
        labels = est.fit_predict(pts)
        assert np.array_equal(labels, est.labels_)

    def test_clone_keeps_params(self):
        est = SphericalDBSCAN(eps_deg=7.0, min_pts=4)
        assert clone(est).get_params() == {"eps_deg": 7.0, "min_pts": 4}
