"""Backend equivalence: the compiled kernels must match the NumPy fallback."""

import numpy as np
import pytest

from superfield._kernels import get_backend
from superfield.render import ProjectedView
from superfield.synthetic import look_at_camera

from .conftest import random_scene
from .oracles import brute_force_min_cut

try:
    get_backend("native")
    HAVE_NATIVE = True
except ImportError:  # pragma: no cover
    HAVE_NATIVE = False

needs_native = pytest.mark.skipif(not HAVE_NATIVE, reason="native kernel not built")


def run_composite(backend, view, cam, n_gp, label_map, codebook):
    vis = np.zeros(n_gp)
    latent = np.zeros((n_gp, codebook.shape[1]))
    residual = np.ones((cam.height, cam.width), np.float32)
    accum = np.zeros((cam.height, cam.width), np.float32)
    gp_img = np.full((cam.height, cam.width), -1, np.int32)
    w_img = np.zeros((cam.height, cam.width), np.float32)
    presence = np.zeros((cam.height, cam.width), np.float32)
    select = np.zeros(n_gp, np.uint8)
    select[::2] = 1
    backend.composite_view(
        view.mean2d, view.inv_cov, view.opacity, view.gp_index, view.bbox,
        cam.height, cam.width, 16, 0.99, 1e-4, 1e-4,
        vis_out=vis, label_map=label_map, codebook=codebook, latent_out=latent,
        select=select, presence_out=presence,
        argmax_gp_out=gp_img, argmax_w_out=w_img,
        accum_out=accum, residual_out=residual,
    )
    return vis, latent, residual, accum, gp_img, w_img, presence


@needs_native
class TestCompositeAgreement:
    def test_all_outputs_agree(self, rng):
        scene = random_scene(rng, 120)
        cam = look_at_camera((0.5, 0.5, 9.0), (0, 0, 0), width=128, height=96, focal=70.0)
        view = ProjectedView(scene, cam)
        label_map = rng.integers(0, 6, (cam.height, cam.width)).astype(np.uint32)
        codebook = np.vstack([np.zeros(8), rng.standard_normal((8, 8))])
        out_py = run_composite(get_backend("python"), view, cam, len(scene), label_map, codebook)
        out_nat = run_composite(get_backend("native"), view, cam, len(scene), label_map, codebook)
        names = ("vis", "latent", "residual", "accum", "gp", "w", "presence")
        for name, a, b in zip(names, out_py, out_nat):
            if name == "gp":
                assert np.array_equal(a, b), name
            elif name in ("residual", "accum", "w", "presence"):
                assert np.array_equal(a, b), name  # per-pixel sequences identical
            else:
                assert np.allclose(a, b, rtol=1e-12, atol=1e-12), name


@needs_native
class TestMinCutAgreement:
    def test_random_instances(self):
        py = get_backend("python")
        nat = get_backend("native")
        for trial in range(60):
            rng = np.random.default_rng(trial)
            n = int(rng.integers(2, 14))
            n_edges = int(rng.integers(0, 3 * n))
            eu = rng.integers(0, n, n_edges).astype(np.int32)
            ev = rng.integers(0, n, n_edges).astype(np.int32)
            keep = eu != ev
            eu, ev = eu[keep], ev[keep]
            cap = rng.uniform(0.05, 2.0, eu.size)
            src = rng.uniform(0, 2, n) * (rng.random(n) > 0.3)
            snk = rng.uniform(0, 2, n) * (rng.random(n) > 0.3)
            f_py, s_py = py.min_cut(n, src, snk, eu, ev, cap)
            f_nat, s_nat = nat.min_cut(n, src, snk, eu, ev, cap)
            assert f_py == pytest.approx(f_nat, abs=1e-9)
            assert np.array_equal(s_py, s_nat), trial


class TestMinCutCorrectness:
    @pytest.mark.parametrize("backend_name", ["python", "native"] if HAVE_NATIVE else ["python"])
    def test_matches_brute_force(self, backend_name):
        backend = get_backend(backend_name)
        for trial in range(40):
            rng = np.random.default_rng(100 + trial)
            n = int(rng.integers(2, 10))
            n_edges = int(rng.integers(0, 2 * n))
            eu = rng.integers(0, n, n_edges).astype(np.int32)
            ev = rng.integers(0, n, n_edges).astype(np.int32)
            keep = eu != ev
            eu, ev = eu[keep], ev[keep]
            cap = rng.uniform(0.05, 2.0, eu.size)
            src = rng.uniform(0, 1.5, n)
            snk = rng.uniform(0, 1.5, n)
            flow, side = backend.min_cut(n, src, snk, eu, ev, cap)
            best = brute_force_min_cut(n, src, snk, eu, ev, cap)
            assert flow == pytest.approx(best, abs=1e-9), trial
            # The returned side must realize the min-cut value.
            cut = float(np.sum(src[side == 0])) + float(np.sum(snk[side == 1]))
            cut += float(np.sum(cap[side[eu] != side[ev]]))
            assert cut == pytest.approx(best, abs=1e-9), trial

    def test_disconnected_sink(self):
        backend = get_backend("python")
        flow, side = backend.min_cut(
            2, np.array([5.0, 0.0]), np.array([0.0, 0.0]),
            np.zeros(0, np.int32), np.zeros(0, np.int32), np.zeros(0),
        )
        assert flow == 0.0
        assert side[0] == 1
