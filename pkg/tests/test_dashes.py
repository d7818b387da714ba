import struct

import numpy as np
import pytest
from scipy import ndimage

from pfm_lab import dashes
from pfm_lab.dashes import HORIZONTAL, SIZE, VERTICAL, DashDataset, DashImage
from pfm_lab.filters import HORIZONTAL_LINE, VERTICAL_LINE

from oracles import relu_response_sum


def _single(kind, r=20, c=20):
    img = np.zeros((SIZE, SIZE), dtype=np.uint8)
    if kind == "h":
        img[r, c:c + 5] = 1
    else:
        img[r:r + 5, c] = 1
    return img


def _brute_score(img):
    return relu_response_sum(img, HORIZONTAL_LINE) - relu_response_sum(img, VERTICAL_LINE)


def test_single_dash_scores_from_brute_force_oracle():
    assert _brute_score(_single("h")) == pytest.approx(24.0, abs=1e-12)
    assert _brute_score(_single("v")) == pytest.approx(-24.0, abs=1e-12)
    assert dashes.oracle_score(_single("h")) == 24.0
    assert dashes.oracle_score(_single("v")) == -24.0


def test_single_dash_at_border_clearance_still_scores_24():
    assert dashes.oracle_score(_single("h", 1, 1)) == 24.0
    assert dashes.oracle_score(_single("v", SIZE - 6, SIZE - 2)) == -24.0


def test_empty_image_is_horizontal_by_convention():
    img = DashImage(np.zeros((SIZE, SIZE), dtype=np.uint8), 0, 0)
    assert dashes.oracle_classify(img) == (HORIZONTAL, 0.0)


def test_oracle_accuracy_trivial_cases():
    empty = DashImage(np.zeros((SIZE, SIZE), dtype=np.uint8), 1, 0)
    assert dashes.oracle_accuracy(DashDataset([empty])) == 1.0
    wrong = DashImage(_single("h"), 0, 1)
    right = DashImage(_single("h"), 1, 0)
    assert dashes.oracle_accuracy(DashDataset([right, wrong])) == 0.5


def test_generation_is_deterministic(dashes7):
    again = dashes.generate(7, 1024)
    assert again == dashes7
    assert all(a.pixels.tobytes() == b.pixels.tobytes() for a, b in zip(again, dashes7))


def test_different_seed_differs(dashes7):
    assert not dashes.generate(8, 4) == DashDataset(dashes7.images[:4])


def test_count_validated():
    with pytest.raises(ValueError):
        dashes.generate(1, 0)


def test_image_invariants(dashes7):
    assert len(dashes7) == 1024
    for img in dashes7:
        assert img.pixels.shape == (SIZE, SIZE)
        assert set(np.unique(img.pixels)) <= {0, 1}
        assert img.n_horizontal != img.n_vertical
        assert 2 <= img.n_horizontal + img.n_vertical <= 12
        assert (img.label == HORIZONTAL) == (img.n_horizontal > img.n_vertical)


def test_dashes_are_separate_one_by_five_segments(dashes7):
    for img in dashes7.images[:200]:
        # 8-connectivity so diagonal contact would merge two dashes
        labeled, n = ndimage.label(img.pixels, structure=np.ones((3, 3)))
        assert n == img.n_horizontal + img.n_vertical
        shapes = [(s[0].stop - s[0].start, s[1].stop - s[1].start) for s in ndimage.find_objects(labeled)]
        assert shapes.count((1, 5)) == img.n_horizontal
        assert shapes.count((5, 1)) == img.n_vertical
        assert not img.pixels[[0, -1], :].any() and not img.pixels[:, [0, -1]].any()


def test_class_balance(dashes7):
    counts = np.bincount(dashes7.labels, minlength=2)
    assert 480 <= counts[HORIZONTAL] <= 544 and 480 <= counts[VERTICAL] <= 544


def test_score_is_additive_and_oracle_is_perfect(dashes7):
    for img in dashes7:
        assert dashes.oracle_score(img) == 24 * (img.n_horizontal - img.n_vertical)
    assert dashes.oracle_accuracy(dashes7) == 1.0


def test_fast_oracle_matches_brute_force(dashes7):
    for img in dashes7.images[:10]:
        assert dashes.oracle_score(img) == pytest.approx(_brute_score(img.pixels), abs=1e-9)


def test_to_arrays(dashes7):
    X, y = dashes7.to_arrays()
    assert X.shape == (1024, 1, SIZE, SIZE) and X.dtype == np.float64
    np.testing.assert_array_equal(y, dashes7.labels)


# --- file format ------------------------------------------------------------------

def test_file_round_trip_and_layout(tmp_path):
    ds = dashes.generate(3, 5)
    path = dashes.save(ds, tmp_path / "d.odcd")
    raw = path.read_bytes()
    assert raw[:4] == b"ODCD"
    assert struct.unpack_from("<IIII", raw, 4) == (1, 5, 48, 48)
    assert len(raw) == 20 + 5 * (3 + 48 * 48)
    label, n_h, n_v = raw[20:23]
    assert (label, n_h, n_v) == (ds[0].label, ds[0].n_horizontal, ds[0].n_vertical)
    back = dashes.load(path)
    assert back == ds and back.seed == 3
    dashes.save(back, tmp_path / "again.odcd")
    assert (tmp_path / "again.odcd").read_bytes() == raw


def test_manifest_records_seed_and_version(tmp_path):
    path = dashes.save(dashes.generate(11, 2), tmp_path / "d.odcd")
    text = (tmp_path / "d.odcd.manifest").read_text()
    assert "seed=11" in text and "generator_version=1" in text


def test_minimal_file(tmp_path):
    path = dashes.save(dashes.generate(0, 1), tmp_path / "one.odcd")
    assert len(dashes.load(path)) == 1


@pytest.mark.parametrize("corrupt", ["magic", "version", "truncated", "label"])
def test_corrupt_files_rejected(tmp_path, corrupt):
    path = dashes.save(dashes.generate(0, 2), tmp_path / "d.odcd", write_manifest=False)
    raw = bytearray(path.read_bytes())
    if corrupt == "magic":
        raw[:4] = b"XXXX"
    elif corrupt == "version":
        raw[4] = 9
    elif corrupt == "truncated":
        raw = raw[:-1]
    else:
        raw[20] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        dashes.load(path)
