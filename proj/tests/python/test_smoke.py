"""End-to-end sanity checks for the Python bindings."""

import numpy as np
import pytest

import gridpv


def checker_image(w, h):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            img[y, x] = ((x * 7 + y * 13) % 256, (x * 3 + y) % 256, (x + y * 11) % 256)
    return img


def test_version_and_exports():
    assert gridpv.__version__
    for name in ("resize_bilinear", "vlad_encode", "lr_fit", "run_pipeline"):
        assert hasattr(gridpv, name)


def test_resize_shapes_and_constant_fill():
    img = np.full((10, 14, 3), 200, dtype=np.uint8)
    out = gridpv.resize_bilinear(img, 7, 5)
    assert out.shape == (5, 7, 3)
    assert (out == 200).all()


def test_baseline_descriptor_on_a_flat_tile():
    tile = np.full((16, 16, 3), 128, dtype=np.uint8)
    desc = gridpv.extract_baseline(tile)
    assert len(desc) == 22
    assert desc[0] == pytest.approx(128 / 255, abs=1e-6)  # channel means
    assert desc[3] == pytest.approx(0.0, abs=1e-6)  # channel stds vanish (float32 noise)


def test_tile_grid_counts_and_coverage():
    img = checker_image(32, 32)
    mask = np.full((32, 32), 255, dtype=np.uint8)
    tiles = gridpv.tile_grid(img, mask, 16)
    assert len(tiles) == 4
    rows_cols = [(r, c) for r, c, _, _ in tiles]
    assert rows_cols == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for _, _, coverage, pixels in tiles:
        assert coverage == pytest.approx(1.0)
        assert pixels.shape == (16, 16, 3)

    with pytest.raises(gridpv.GridpvError):
        gridpv.tile_grid(img, np.zeros((32, 32), dtype=np.uint8), 16)


def test_vlad_matches_a_numpy_recount():
    rng = np.random.default_rng(31)
    x = np.concatenate(
        [rng.normal(-3, 0.5, size=(40, 4)), rng.normal(3, 0.5, size=(40, 4))]
    )
    cb = gridpv.kmeans_fit(x, 2, seed=5)
    assert cb.k == 2 and cb.dim == 4
    assert np.all(np.diff(cb.inertia_history) <= 1e-9)

    # the binding quantizes local vectors to float32 before encoding
    locals32 = x.astype(np.float32).astype(np.float64)
    got = np.asarray(gridpv.vlad_encode(cb, x, signed_sqrt=False, l2=False)).ravel()
    want = np.zeros(2 * 4)
    dist = ((locals32[:, None, :] - cb.centroids[None, :, :]) ** 2).sum(axis=2)
    nearest = dist.argmin(axis=1)
    for c in range(2):
        want[c * 4 : (c + 1) * 4] = (locals32[nearest == c] - cb.centroids[c]).sum(axis=0)
    assert np.abs(got - want).max() <= 1e-9


def test_fv_and_avg_shapes():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 3))
    gmm = gridpv.gmm_fit(x, 2, seed=9)
    assert np.asarray(gmm.weights).sum() == pytest.approx(1.0)
    fv = np.asarray(gridpv.fv_encode(gmm, x)).ravel()
    assert fv.shape == (2 * 2 * 3,)
    assert np.linalg.norm(fv) == pytest.approx(1.0)

    locals32 = x.astype(np.float32).astype(np.float64)
    avg = np.asarray(gridpv.avg_encode(x)).ravel()
    assert np.abs(avg - locals32.mean(axis=0)).max() <= 1e-12


def test_classifiers_and_model_files(tmp_path):
    rng = np.random.default_rng(11)
    x = np.concatenate([rng.normal(-2, 0.6, (25, 2)), rng.normal(2, 0.6, (25, 2))])
    y = [0] * 25 + [1] * 25

    model = gridpv.lr_fit(x, y, c=1.0, solver="lbfgs", seed=0)
    assert model.family == "lr"
    labels, scores = gridpv.predict(model, x)
    assert labels == y
    assert all(0.0 <= s <= 1.0 for s in scores)

    path = str(tmp_path / "model.bin")
    gridpv.save_model(model, path)
    again, _ = gridpv.predict(gridpv.load_model(path), x)
    assert again == labels

    forest = gridpv.rf_fit(x, y, n_estimators=30, seed=3)
    svc = gridpv.svm_fit(x, y, c=1.0, kernel="rbf", seed=3)
    assert gridpv.predict(forest, x)[0] == y
    assert gridpv.predict(svc, x)[0] == y


def test_score_aggregation():
    assert gridpv.round2(gridpv.weighted_f1([1.00, 0.94], 0.96)) == pytest.approx(0.97)
    report = gridpv.score_report([1, 0, 1, 0], [1, 0, 1, 1], ["a", "a", "b", "b"])
    assert set(report["per_city"]) == {"a", "b"}
    assert report["per_city"]["a"]["f1"] == pytest.approx(1.0)
    assert 0.0 <= report["weighted_f1"] <= 1.0


def test_rooftop_rendering_is_deterministic():
    spec = gridpv.CitySpec()
    spec.name = "demo"
    spec.n_with_pv = 1
    spec.n_no_pv = 1
    spec.size_min = 48
    spec.size_max = 64
    spec.seed = 21
    first_img, first_mask = gridpv.render_rooftop(spec, 0, True)
    second_img, second_mask = gridpv.render_rooftop(spec, 0, True)
    assert first_img.dtype == np.uint8 and first_img.ndim == 3
    assert (first_img == second_img).all() and (first_mask == second_mask).all()
    bare_img, bare_mask = gridpv.render_rooftop(spec, 0, False)
    assert (bare_mask == first_mask).all()  # panels never change the footprint
    assert (bare_img != first_img).any()


def test_tiny_pipeline_run(tmp_path):
    data = tmp_path / "data"
    for name, seed in (("alpha", 1), ("bravo", 2)):
        spec = gridpv.CitySpec()
        spec.name = name
        spec.n_with_pv = 4
        spec.n_no_pv = 4
        spec.size_min = 48
        spec.size_max = 64
        spec.seed = seed
        train_count, test_count = gridpv.generate_city(spec, str(data))
        assert train_count == 6 and test_count == 2

    config = gridpv.Config()
    config.load_text(
        "\n".join(
            [
                "cities = alpha, bravo",
                f"data = {data}",
                "threshold = 0.01",
                "grid.sizes = 16",
                "encode.k = 2",
                "families = lr",
                "lr.c = 1",
                "lr.solvers = liblinear",
            ]
        ),
        "<smoke>",
    )
    report = gridpv.run_pipeline_report(config)
    assert report["approach"] == "brg-vlad"
    assert [s["city"] for s in report["steps"]] == ["alpha", "bravo"]
    assert report["steps"][0]["stopped_phase"] == "p3"
    assert report["steps"][1]["stopped_phase"] == "p1"  # token threshold: reuse wins
    assert report["all_passed"] is True
