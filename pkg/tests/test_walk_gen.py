import math

import numpy as np
import pytest

from matedcrt.errors import DomainError, FormatError, ResourceError
from matedcrt.walk_gen import (WALK_MAGIC, WalkParams, correlation_of, generate_walk, load_walk,
                               save_walk)


def test_correlation_values():
    assert correlation_of(math.sqrt(2)) == pytest.approx(0.0, abs=1e-15)
    assert correlation_of(math.sqrt(8 / 3)) == pytest.approx(0.5, rel=1e-14)
    assert correlation_of(1.0) == pytest.approx(-math.sqrt(2) / 2, rel=1e-14)


@pytest.mark.parametrize("gamma", [0.0, 2.0, -1.0, 2.5])
def test_correlation_domain(gamma):
    with pytest.raises(DomainError):
        correlation_of(gamma)


def test_window_three_length():
    w = generate_walk(WalkParams(math.sqrt(2), 3, 1, 7))
    assert len(w.samples_l) == len(w.samples_r) == 7
    assert w.samples_l[w.origin_index] == 0.0 and w.samples_r[w.origin_index] == 0.0
    assert w.t_min == -3 and w.t_max == 3


def test_determinism_and_seed_dependence():
    p = WalkParams(math.sqrt(8 / 3), 500, 2, 11)
    assert generate_walk(p).equals(generate_walk(p))
    q = WalkParams(math.sqrt(8 / 3), 500, 2, 12)
    assert not generate_walk(p).equals(generate_walk(q))


def test_window_extension_preserves_inner_walk():
    small = generate_walk(WalkParams(1.0, 100, 1, 3))
    big = generate_walk(WalkParams(1.0, 300, 1, 3))
    lo = big.index_of(-100)
    assert np.array_equal(big.samples_l[lo:lo + 201], small.samples_l)
    assert np.array_equal(big.samples_r[lo:lo + 201], small.samples_r)


@pytest.mark.parametrize("gamma", [1.0, math.sqrt(2), math.sqrt(8 / 3)])
def test_increments_centred_and_correlated(gamma):
    n = 20000
    w = generate_walk(WalkParams(gamma, n, 1, 5))
    dl, dr = np.diff(w.samples_l), np.diff(w.samples_r)
    tol = 4 * (2 * n) ** -0.5
    assert abs(dl.mean()) < tol and abs(dr.mean()) < tol
    assert abs(np.corrcoef(dl, dr)[0, 1] - correlation_of(gamma)) < 0.03
    assert abs(dl.var() - 1) < 0.05


def test_mesh_increments_scale():
    w = generate_walk(WalkParams(math.sqrt(2), 2000, 4, 1))
    unit = w.samples_l[::4]
    assert abs(np.diff(unit).var() - 1) < 0.1


def test_params_validation():
    with pytest.raises(DomainError):
        WalkParams(1.0, 0)
    with pytest.raises(DomainError):
        WalkParams(1.0, 10, 0)
    with pytest.raises(DomainError):
        WalkParams(2.0, 10)


def test_resource_limit(monkeypatch):
    monkeypatch.setenv("MCRT_MAX_BYTES", "1000")
    with pytest.raises(ResourceError) as exc:
        generate_walk(WalkParams(1.0, 1000))
    assert exc.value.required_bytes > 1000


def test_save_load_roundtrip(tmp_path):
    w = generate_walk(WalkParams(math.sqrt(4 / 3), 257, 3, 99))
    path = tmp_path / "w.bin"
    save_walk(w, path)
    v = load_walk(path)
    assert v.equals(w)
    assert v.params == w.params
    assert path.read_bytes()[:8] == WALK_MAGIC


def test_load_rejects_corruption(tmp_path):
    w = generate_walk(WalkParams(1.0, 20))
    path = tmp_path / "w.bin"
    save_walk(w, path)
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXXXXXX" + bytes(raw[8:]))
    with pytest.raises(FormatError):
        load_walk(bad)
    bad.write_bytes(bytes(raw[:-8]))
    with pytest.raises(FormatError):
        load_walk(bad)
    raw[8] = 9  # version
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_walk(bad)
