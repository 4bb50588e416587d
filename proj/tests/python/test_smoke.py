"""Smoke tests for the python surface and the command-line tools."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import hwgen

CLI = os.environ.get("HWGEN_CLI")
TOYGEN = os.environ.get("HWGEN_TOYGEN")


def test_tokenize_round_trip():
    ids, mask = hwgen.tokenize("the", 8)
    assert ids == [116, 104, 101, 0, 0, 0, 0, 0]
    assert mask == [1, 1, 1, 0, 0, 0, 0, 0]
    assert hwgen.detokenize(ids) == "the"
    with pytest.raises(hwgen.HwgenDataError):
        hwgen.tokenize("", 8)


def test_schedule_and_q_sample_limits():
    s = hwgen.make_schedule(1000, 1e-4, 0.02)
    assert s.T == 1000
    assert s.alpha_bar(1000) < 0.01
    bars = list(s.alpha_bars)
    assert all(b2 < b1 for b1, b2 in zip(bars, bars[1:]))

    ones = np.ones(hwgen.LATENT_SHAPE, dtype=np.float32)
    zeros = np.zeros(hwgen.LATENT_SHAPE, dtype=np.float32)
    tiny = hwgen.make_schedule(1, 1e-12, 1e-12)
    z = hwgen.q_sample(ones, 1, zeros, tiny)
    assert np.allclose(z, 1.0, atol=1e-6)


def test_ddim_hand_value():
    s = hwgen.make_schedule(2, 0.19, 1.0 - 0.25 / 0.81)  # alpha_bars: 0.81, 0.25
    assert abs(s.alpha_bar(1) - 0.81) < 1e-12
    assert abs(s.alpha_bar(2) - 0.25) < 1e-9
    z_t = np.full(hwgen.LATENT_SHAPE, 1.0, dtype=np.float32)
    eps = np.full(hwgen.LATENT_SHAPE, 0.5, dtype=np.float32)
    z_prev = hwgen.ddim_step(z_t, eps, 2, 1, s)
    assert abs(float(z_prev[0, 0, 0]) - 1.2386) < 1e-4


def test_cer_wer_and_frechet():
    assert hwgen.cer("kitten", "sitting") == pytest.approx(0.5)
    assert hwgen.wer(["deep"], ["keep"]) == 1.0
    fid = hwgen.frechet_distance(
        np.array([0.0]), np.array([[1.0]]), np.array([1.0]), np.array([[1.0]])
    )
    assert fid == pytest.approx(1.0)


def test_style_algebra():
    a = np.array([0.0, 2.0], dtype=np.float32)
    b = np.array([2.0, 0.0], dtype=np.float32)
    assert np.allclose(hwgen.interpolate_styles(a, b, 0.0), a)
    assert np.allclose(hwgen.interpolate_styles(a, b, 1.0), b)
    assert np.allclose(hwgen.interpolate_styles(a, b, 0.5), hwgen.mix_styles([a, b], [0.5, 0.5]))
    p0 = hwgen.perturb_style(a, 0.0, seed=1)
    assert np.allclose(p0, a)
    p1 = hwgen.perturb_style(a, 0.5, seed=1)
    p2 = hwgen.perturb_style(a, 0.5, seed=1)
    assert np.array_equal(p1, p2)


def test_canonicalize_and_codec():
    img = np.random.RandomState(0).rand(128, 300).astype(np.float32)
    canon = hwgen.canonicalize_image(img)
    assert canon.shape == (hwgen.CANON_H, hwgen.CANON_W)
    again = hwgen.canonicalize_image(canon)
    assert np.array_equal(canon, again)

    word = hwgen.render_toy_word("pen", 0)
    z = hwgen.encode_latent(word)
    assert z.shape == hwgen.LATENT_SHAPE
    back = hwgen.decode_latent(z)
    assert np.max(np.abs(back - word)) < 1e-6  # toy renders are block-constant

    assert hwgen.triplet_loss(a := np.zeros(4), a, np.zeros(4), margin=0.7) == pytest.approx(0.7)


def test_segment_long_word():
    parts = hwgen.segment_long_word("interoperabilitationism", 10)
    assert "".join(parts) == "interoperabilitationism"
    assert all(len(p) <= 10 for p in parts)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    """Tiny CLI pipeline shared by the subprocess tests."""
    if not CLI or not TOYGEN:
        pytest.skip("HWGEN_CLI / HWGEN_TOYGEN not set")
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    subprocess.run(
        [TOYGEN, "--out-dir", str(corpus), "--writers", "2", "--train-words", "4",
         "--test-words", "1", "--unseen-samples", "2"],
        check=True,
    )
    small = [
        "--set", "style_train.batch=6", "--set", "model.style_widths=4,8",
        "--set", "model.d=8", "--set", "diffusion.batch=2", "--set", "diffusion.T=50",
        "--set", "model.unet_widths=8,16,24", "--set", "model.d_model=16",
        "--set", "model.temb_dim=16", "--set", "model.groups=4",
        "--set", "model.d_text=12", "--set", "sample.k=2",
    ]
    subprocess.run(
        [CLI, "train-style", "--manifest", str(corpus / "manifest.tsv"),
         "--charset-file", str(corpus / "charset.txt"), "--out", str(root / "style.ckpt"),
         "--epochs", "2"] + small,
        check=True,
    )
    subprocess.run(
        [CLI, "train-diffusion", "--manifest", str(corpus / "manifest.tsv"),
         "--style-ckpt", str(root / "style.ckpt"), "--out", str(root / "diff.ckpt"),
         "--steps", "8"] + small,
        check=True,
    )
    style_dir = root / "w00"
    style_dir.mkdir()
    for p in (corpus / "images").glob("*_w00.png"):
        (style_dir / p.name).write_bytes(p.read_bytes())
    return {"root": root, "corpus": corpus, "small": small, "style_dir": style_dir}


def test_cli_exit_codes(toy_run):
    root = toy_run["root"]
    # unknown config key -> 2
    r = subprocess.run([CLI, "train-style", "--manifest", "x", "--set", "model.typo=1"],
                       capture_output=True)
    assert r.returncode == 2
    # missing manifest -> 3
    r = subprocess.run([CLI, "train-style", "--manifest", str(root / "nope.tsv")],
                       capture_output=True)
    assert r.returncode == 3
    # damaged checkpoint -> 4
    bad = root / "bad.ckpt"
    bad.write_bytes(b"junk")
    r = subprocess.run([CLI, "sample", "--ckpt", str(bad), "--text", "x",
                        "--style-dir", str(toy_run["style_dir"])], capture_output=True)
    assert r.returncode == 4


def test_cli_sample_deterministic(toy_run):
    root, small = toy_run["root"], toy_run["small"]
    args = [CLI, "sample", "--ckpt", str(root / "diff.ckpt"), "--text", "deep",
            "--style-dir", str(toy_run["style_dir"]), "--seed", "7", "--steps", "6"] + small
    subprocess.run(args + ["--out", str(root / "a.png")], check=True)
    subprocess.run(args + ["--out", str(root / "b.png")], check=True)
    assert (root / "a.png").read_bytes() == (root / "b.png").read_bytes()


def test_cli_interpolate_and_evaluate(toy_run):
    root, corpus, small = toy_run["root"], toy_run["corpus"], toy_run["small"]
    subprocess.run(
        [CLI, "interpolate", "--ckpt", str(root / "diff.ckpt"), "--text", "ink",
         "--style-a", str(toy_run["style_dir"]), "--style-b", str(toy_run["style_dir"]),
         "--weights", "0,0.5,1", "--seed", "3", "--steps", "4",
         "--out", str(root / "interp.png")] + small,
        check=True,
    )
    assert (root / "interp.png").exists()

    subprocess.run(
        [CLI, "regenerate", "--manifest", str(corpus / "manifest.tsv"),
         "--ckpt", str(root / "diff.ckpt"), "--out-dir", str(root / "regen"),
         "--seed", "5", "--steps", "4", "--split", "train"] + small,
        check=True,
    )
    report = root / "rep.json"
    subprocess.run(
        [CLI, "evaluate", "--real-manifest", str(corpus / "manifest.tsv"),
         "--gen-manifest", str(root / "regen" / "manifest.tsv"),
         "--metrics", "fid", "--report", str(report)] + small,
        check=True,
    )
    data = json.loads(report.read_text())
    assert "fid" in data and math.isfinite(data["fid"])
    assert data["config_hash"]


def test_cli_output_root_env(toy_run, tmp_path):
    root, small = toy_run["root"], toy_run["small"]
    env = dict(os.environ, HWGEN_ROOT=str(tmp_path / "outroot"))
    subprocess.run(
        [CLI, "sample", "--ckpt", str(root / "diff.ckpt"), "--text", "pen",
         "--style-dir", str(toy_run["style_dir"]), "--seed", "2", "--steps", "4",
         "--out", "rooted.png"] + small,
        check=True, env=env,
    )
    assert (tmp_path / "outroot" / "rooted.png").exists()


def test_pipeline_python_sampling(toy_run):
    root = toy_run["root"]
    pipe = hwgen.Pipeline.load(str(root / "diff.ckpt"))
    assert pipe.codec_tag == "stub"
    exemplars = [hwgen.render_toy_word("pen", 0), hwgen.render_toy_word("ink", 0)]
    img1 = pipe.sample("dog", exemplars, seed=5, steps=6)
    img2 = pipe.sample("dog", exemplars, seed=5, steps=6)
    assert img1.shape == (hwgen.CANON_H, hwgen.CANON_W)
    assert np.array_equal(img1, img2)
    emb = pipe.embed_style(exemplars[0])
    assert emb.ndim == 1 and np.isfinite(emb).all()
