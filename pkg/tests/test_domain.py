import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gllab.domain import DomainError, DomainSpec, HoleSpec, area, betti_numbers, build_domain


def _annulus(n, r=0.3, c=(0.25, 0.0)):
    return build_domain(DomainSpec(box=(-1, -1, 1, 1), shape="annulus", resolution=n,
                                   radius=1.0, inner_radius=r, inner_center=c))


def test_square_counts():
    d = build_domain(DomainSpec(box=(0, 0, 1, 1), shape="rectangle", resolution=8))
    assert d.n_omega == 64
    assert d.n_edges == 2 * 7 * 8
    assert d.n_vertices == 49
    assert d.n_holes == 0
    assert betti_numbers(d.omega_mask) == (1, 0)


def test_annulus_topology():
    d = _annulus(32)
    assert d.n_holes == 1
    assert betti_numbers(d.omega_mask) == (1, 1)
    assert betti_numbers(d.tilde_mask) == (1, 0)


def test_two_rectangular_holes():
    spec = DomainSpec(box=(0, 0, 2, 1), shape="rectangle-with-rectangular-holes", resolution=32,
                      holes=(HoleSpec("rectangle", (0.5, 0.5), (0.25, 0.25)),
                             HoleSpec("rectangle", (1.5, 0.5), (0.25, 0.25))))
    d = build_domain(spec)
    assert d.n_holes == 2
    assert betti_numbers(d.omega_mask) == (1, 2)
    assert area(d, "hole_0") == pytest.approx(0.0625)


def test_area_converges():
    errs = [abs(area(_annulus(n), "omega") - math.pi * (1 - 0.09)) for n in (16, 32, 64)]
    assert errs[2] < errs[0]
    assert errs[2] < 0.05


@pytest.mark.parametrize("kw,msg", [
    (dict(resolution=4), "resolution"),
    (dict(inner_radius=1.2), "outer boundary"),
])
def test_invalid_specs(kw, msg):
    base = dict(box=(-1, -1, 1, 1), shape="annulus", resolution=32, radius=1.0,
                inner_radius=0.3, inner_center=(0.0, 0.0))
    base.update(kw)
    with pytest.raises(DomainError, match=msg):
        build_domain(DomainSpec(**base))


def test_overlapping_holes():
    spec = DomainSpec(box=(0, 0, 2, 1), shape="rectangle-with-rectangular-holes", resolution=32,
                      holes=(HoleSpec("rectangle", (0.8, 0.5), (0.4, 0.3)),
                             HoleSpec("rectangle", (1.0, 0.5), (0.4, 0.3))))
    with pytest.raises(DomainError, match="overlaps"):
        build_domain(spec)


def test_unresolved_hole():
    with pytest.raises(DomainError):
        _annulus(8, r=0.05)


def test_spec_roundtrip():
    d = _annulus(16)
    assert DomainSpec.from_dict(d.spec.to_dict()) == d.spec


@given(st.integers(0, 2**31 - 1))
def test_rot_grad_vanishes(seed):
    d = _annulus(16)
    theta = np.random.default_rng(seed).standard_normal(d.n_tilde)
    assert np.abs(d.rot_matrix @ (d.grad_matrix("tilde") @ theta)).max() < 1e-10


@given(st.integers(0, 2**31 - 1))
def test_div_rot_adjoint_vanishes(seed):
    d = _annulus(16)
    f = np.random.default_rng(seed).standard_normal(d.n_vertices)
    div = -(d.grad_matrix("tilde").T @ (d.rot_adjoint_matrix @ f))
    assert np.abs(div).max() < 1e-10
