import dataclasses
import json

import numpy as np
import pytest

from helpers import constant_class_model, make_scan, small_config
from rangeseg import pipeline
from rangeseg.errors import ConfigurationError, StageError
from rangeseg.network import ConvLayer, ConvSpec, Model, NetworkConfig, \
    build_network, conv2d, forward
from rangeseg.pipeline import (PipelineConfig, benchmark,
                               compute_receptive_field, forward_split,
                               horizontal_stride, load_config,
                               receptive_field_of_convs, run_frame,
                               run_frame_split, split_halo)
from rangeseg.postprocess import PatchConfig
from rangeseg.projection import ProjectionConfig


SMALL_NET = dict(stem_widths=[4, 4, 4], stage_blocks=[1, 1, 1, 1],
                 stage_widths=[4, 8, 8, 8])


def write_config(tmp_path, **overrides):
    raw = {
        "projection": {"height": 16, "width": 128},
        "network": SMALL_NET,
        "patch": {"k": 3},
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def small_pipeline_cfg(width=128, **kw):
    return PipelineConfig(projection=ProjectionConfig(height=16, width=width),
                          network=small_config(), patch=PatchConfig(k=3),
                          **kw)


# ------------------------------------------------------------ config file


def test_load_config_round_trip(tmp_path):
    path = write_config(tmp_path, split_cores=2, power_watts=16.8,
                        quantized=True,
                        paths={"dataset_root": "/data", "weights": "w.rsgw",
                               "output_dir": "/out"})
    cfg = load_config(path)
    assert cfg.projection.width == 128
    assert cfg.network.stage_widths == (4, 8, 8, 8)
    assert cfg.patch.k == 3
    assert cfg.split_cores == 2
    assert cfg.power_watts == 16.8
    assert cfg.quantized is True
    assert cfg.dataset_root == "/data"
    assert cfg.network_explicit is True


def test_load_config_defaults(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("{}")
    cfg = load_config(path)
    assert cfg.projection.height == 64
    assert cfg.network == NetworkConfig()
    assert cfg.split_cores == 1
    assert cfg.network_explicit is False


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"projekshun": {}}))
    with pytest.raises(ConfigurationError):
        load_config(str(path))


def test_load_config_rejects_unknown_section_fields(tmp_path):
    path = write_config(tmp_path, projection={"height": 16, "wdith": 64})
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_load_config_rejects_unknown_path_keys(tmp_path):
    path = write_config(tmp_path, paths={"dataset": "/x"})
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "syntax.json"
    path.write_text("{nope")
    with pytest.raises(ConfigurationError):
        load_config(str(path))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "absent.json"))


def test_pipeline_config_validation():
    with pytest.raises(ConfigurationError):
        small_pipeline_cfg(split_cores=3)
    with pytest.raises(ConfigurationError):
        small_pipeline_cfg(power_watts=0.0)


# ------------------------------------------------------- receptive field


def test_receptive_field_single_3x3():
    rv, rh, jv, jh = receptive_field_of_convs([ConvSpec(1, 1)])
    assert (rv, rh) == (1, 1)
    assert (jv, jh) == (1, 1)


def test_receptive_field_two_3x3():
    specs = [ConvSpec(1, 1), ConvSpec(1, 1)]
    rv, rh, _jv, _jh = receptive_field_of_convs(specs)
    assert (rv, rh) == (2, 2)


def test_receptive_field_dilation_2():
    rv, rh, _, _ = receptive_field_of_convs(
        [ConvSpec(1, 1, dilation=(2, 2), padding=(2, 2))])
    assert (rv, rh) == (2, 2)


def test_receptive_field_stride_grows_step():
    specs = [ConvSpec(1, 1, stride=(2, 2)), ConvSpec(1, 1)]
    rv, rh, jv, jh = receptive_field_of_convs(specs)
    # second conv reaches 1 output step = 2 input pixels
    assert (rv, rh) == (3, 3)
    assert (jv, jh) == (2, 2)


def test_default_network_receptive_field_and_halo():
    cfg = NetworkConfig()
    assert compute_receptive_field(cfg) == (227, 227)
    assert horizontal_stride(cfg) == 8
    assert split_halo(cfg) == 232


def test_small_network_receptive_field_and_halo():
    cfg = small_config()
    assert compute_receptive_field(cfg) == (55, 55)
    assert split_halo(cfg) == 56


def test_perturbation_stays_inside_computed_radius(backend):
    # empirical upper bound: flipping one input column must not move any
    # output column farther away than the computed horizontal radius
    cfg = small_config()
    model = build_network(cfg, seed=0)
    _rv, rh = compute_receptive_field(cfg)
    x = np.zeros((8, 8, 256), np.float32)
    base = forward(model, x)
    x2 = x.copy()
    x2[:, :, 128] = 1.0
    diff_cols = np.where(np.any(forward(model, x2) != base, axis=(0, 1)))[0]
    assert diff_cols.size  # the probe must actually reach the output
    assert abs(diff_cols - 128).max() <= rh


# ---------------------------------------------------------- split forward


def test_split_seam_alignment_errors(backend):
    model = build_network(small_config())
    with pytest.raises(ConfigurationError):
        forward_split(model, np.zeros((8, 8, 30), np.float32), halo=8)
    with pytest.raises(ConfigurationError):
        # halved width 20 is not a multiple of the total stride 8
        forward_split(model, np.zeros((8, 8, 40), np.float32), halo=8)
    with pytest.raises(ConfigurationError):
        forward_split(model, np.zeros((8, 8, 64), np.float32), halo=3)


def test_split_forward_bit_identical(backend, rng):
    model = build_network(small_config(), seed=1)
    x = rng.normal(size=(8, 16, 128)).astype(np.float32)
    whole = forward(model, x)
    halved = forward_split(model, x, split_halo(model.config))
    np.testing.assert_array_equal(whole, halved)


def test_split_with_short_halo_differs_only_near_seam(backend, rng):
    model = build_network(small_config(), seed=2)
    _rv, rh = compute_receptive_field(model.config)
    x = rng.normal(size=(8, 8, 256)).astype(np.float32)
    whole = forward(model, x)
    halved = forward_split(model, x, halo=0)
    diff_cols = np.where(np.any(whole != halved, axis=(0, 1)))[0]
    assert diff_cols.size  # halo 0 must actually break the seam
    seam = 128
    assert diff_cols.min() >= seam - rh
    assert diff_cols.max() < seam + rh


def test_toy_single_conv_split_exhaustive(backend, rng):
    # 3x3 conv, stride 1 everywhere: halo 1 is exactly enough
    cfg = NetworkConfig(stage_strides=(1, 1, 1, 1))
    spec = ConvSpec(1, 1)
    w = rng.normal(size=(1, 1, 3, 3)).astype(np.float32)
    model = Model(config=cfg)
    fn = lambda t: conv2d(t, spec, w)
    x = rng.normal(size=(1, 4, 16)).astype(np.float32)
    np.testing.assert_array_equal(forward_split(model, x, 1, fn), fn(x))
    short = forward_split(model, x, 0, fn)
    diff_cols = np.where(np.any(short != fn(x), axis=(0, 1)))[0]
    assert diff_cols.tolist() == [7, 8]


def test_halo_is_clamped_to_half_width(backend, rng):
    model = build_network(small_config(), seed=0)
    x = rng.normal(size=(8, 8, 64)).astype(np.float32)
    # requested halo 56 exceeds the 32-column half: clamp makes each half
    # see the whole image, so the result still matches exactly
    np.testing.assert_array_equal(forward_split(model, x, 56),
                                  forward(model, x))


# ------------------------------------------------------------ run_frame


def test_run_frame_deterministic(backend, rng):
    cfg = small_pipeline_cfg()
    model = build_network(cfg.network, seed=0)
    scan = make_scan(rng, 1500)
    a = run_frame(model, scan, cfg)
    b = run_frame(model, scan, cfg)
    assert a.shape == (1500,)
    np.testing.assert_array_equal(a, b)


def test_run_frame_constant_class_model(backend, rng):
    cfg = small_pipeline_cfg()
    model = constant_class_model(build_network(cfg.network, seed=0), 7)
    labels = run_frame(model, make_scan(rng, 400), cfg)
    assert (labels == 7).all()


def test_run_frame_empty_scan(backend):
    cfg = small_pipeline_cfg()
    model = build_network(cfg.network, seed=0)
    labels = run_frame(model, np.zeros((0, 4), np.float32), cfg)
    assert labels.shape == (0,)


def test_run_frame_split_matches_unsplit(backend, rng):
    cfg = small_pipeline_cfg()
    model = build_network(cfg.network, seed=3)
    scan = make_scan(rng, 2500)
    np.testing.assert_array_equal(run_frame_split(model, scan, cfg),
                                  run_frame(model, scan, cfg))


def test_split_cores_two_in_config_uses_split_path(backend, rng):
    cfg = small_pipeline_cfg(split_cores=2)
    model = build_network(cfg.network, seed=3)
    scan = make_scan(rng, 800)
    base = run_frame(model, scan, dataclasses.replace(cfg, split_cores=1))
    np.testing.assert_array_equal(run_frame(model, scan, cfg), base)


def test_stage_error_names_the_failing_stage(backend):
    cfg = small_pipeline_cfg()
    model = build_network(cfg.network, seed=0)
    bad_scan = np.zeros((1, 4), np.float32)  # zero range cannot project
    with pytest.raises(StageError) as err:
        run_frame(model, bad_scan, cfg)
    assert err.value.stage == "project"
    assert err.value.exit_code == 2


def test_quantized_without_params_is_config_error(backend, rng):
    cfg = small_pipeline_cfg(quantized=True)
    model = build_network(cfg.network, seed=0)
    with pytest.raises(StageError) as err:
        run_frame(model, make_scan(rng, 100), cfg)
    assert err.value.stage == "forward"
    assert err.value.exit_code == 3


def test_quantized_split_matches_quantized_unsplit(backend, rng):
    from rangeseg.quantize import calibrate

    cfg = small_pipeline_cfg(quantized=True)
    model = build_network(cfg.network, seed=1)
    scan = make_scan(rng, 1200)
    # calibrate on the projected channels of the same frame
    from rangeseg.normals import compute_normals
    from rangeseg.projection import spherical_project
    image, _ = spherical_project(scan, cfg.projection)
    compute_normals(image)
    quant = calibrate(model, [image.channels])
    split = run_frame_split(model, scan, cfg, quant=quant)
    whole = run_frame(model, scan, dataclasses.replace(cfg, split_cores=1),
                      quant=quant)
    np.testing.assert_array_equal(split, whole)


# ------------------------------------------------------------- benchmark


def test_benchmark_identities_and_stages(backend, rng):
    cfg = small_pipeline_cfg(power_watts=16.8)
    model = build_network(cfg.network, seed=0)
    scans = [make_scan(rng, 300) for _ in range(3)]
    report = benchmark(model, scans, cfg)
    assert report.frames == 3
    assert report.fps == report.frames / report.wall_seconds
    assert report.gops_per_second == report.gops_per_frame * report.fps
    assert report.gop_per_watt == report.gops_per_second / 16.8
    assert set(report.stage_seconds) == {"project", "normals", "forward",
                                         "nla"}
    assert all(v >= 0 for v in report.stage_seconds.values())
    d = report.to_dict()
    assert d["frames"] == 3 and "gop_per_watt" in d


def test_benchmark_without_power_omits_efficiency(backend, rng):
    cfg = small_pipeline_cfg()
    model = build_network(cfg.network, seed=0)
    report = benchmark(model, [make_scan(rng, 200)], cfg)
    assert report.gop_per_watt is None
    assert "gop_per_watt" not in report.to_dict()


def test_benchmark_rejects_empty_scan_list(backend):
    from rangeseg.errors import InputError

    cfg = small_pipeline_cfg()
    model = build_network(cfg.network, seed=0)
    with pytest.raises(InputError):
        benchmark(model, [], cfg)


def test_published_efficiency_identity_is_exact():
    # 714 GOP/s at 16.8 W is exactly 42.5 GOP/W in binary floating point
    assert 714.0 / 16.8 == 42.5
