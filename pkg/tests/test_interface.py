import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokesbiot.interface import (GeometryMismatchError, common_refinement, segment_quadrature,
                                  tangential_permeability)
from stokesbiot.mesh import build_fracture_domain, build_structured

TAGS = {"left": "left", "right": "right", "bottom": "bottom", "top": "top"}


def flat_pair(n_f, n_p):
    fluid = build_structured((0, 1, 0, 1), n_f, n_f, "fluid", {**TAGS, "bottom": "interface"})
    poro = build_structured((0, 1, -1, 0), n_p, n_p, "poro", {**TAGS, "top": "interface"})
    return fluid, poro


def overlay_oracle(n_f, n_p):
    """Brute-force merge of the two 1D breakpoint sets on [0, 1]."""
    breaks = sorted(set(np.round(np.concatenate([np.linspace(0, 1, n_f + 1),
                                                 np.linspace(0, 1, n_p + 1)]), 12)))
    return len(breaks) - 1


def test_matching_grids_one_segment_per_edge():
    pairing = common_refinement(*flat_pair(8, 8))
    assert pairing.n_segments == 8
    assert pairing.length == pytest.approx(1.0, abs=1e-12)


def test_five_vs_eight_overlay():
    pairing = common_refinement(*flat_pair(5, 8))
    oracle = overlay_oracle(5, 8)
    assert pairing.n_segments == oracle
    assert 8 <= pairing.n_segments <= 12
    assert pairing.length == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(n_f=st.integers(2, 17), n_p=st.integers(2, 17))
def test_overlay_matches_oracle(n_f, n_p):
    pairing = common_refinement(*flat_pair(n_f, n_p))
    assert pairing.n_segments == overlay_oracle(n_f, n_p)
    assert pairing.length == pytest.approx(1.0, abs=1e-10)


def test_overlay_symmetric():
    f13, p8 = flat_pair(13, 8)
    a = common_refinement(f13, p8)
    # swapping roles: tag the poro mesh bottom as master side instead
    lengths_a = np.sort(a.seg_length)
    f8, p13 = flat_pair(8, 13)
    b = common_refinement(f8, p13)
    assert a.n_segments == b.n_segments
    assert np.allclose(lengths_a, np.sort(b.seg_length), atol=1e-12)


def test_normals_opposite_and_tangent():
    pairing = common_refinement(*flat_pair(5, 8))
    assert np.allclose(pairing.seg_n_f, [0.0, -1.0], atol=1e-14)
    assert np.allclose(pairing.seg_n_p, [0.0, 1.0], atol=1e-14)
    dots = np.einsum("kd,kd->k", pairing.seg_n_f, pairing.seg_n_p)
    assert np.allclose(dots, -1.0, atol=1e-14)
    assert np.allclose(np.abs(pairing.seg_tau @ np.array([1.0, 0.0])), 1.0, atol=1e-14)


def test_mismatched_traces_rejected():
    fluid = build_structured((0, 1, 0.1, 1.1), 4, 4, "fluid", {**TAGS, "bottom": "interface"})
    poro = build_structured((0, 1, -1, 0), 4, 4, "poro", {**TAGS, "top": "interface"})
    with pytest.raises(GeometryMismatchError):
        common_refinement(fluid, poro)


def test_missing_interface_tag_rejected():
    fluid = build_structured((0, 1, 0, 1), 4, 4, "fluid", TAGS)
    poro = build_structured((0, 1, -1, 0), 4, 4, "poro", {**TAGS, "top": "interface"})
    with pytest.raises(GeometryMismatchError):
        common_refinement(fluid, poro)


def test_segment_quadrature_preimages_and_length():
    pairing = common_refinement(*flat_pair(5, 8))
    sq = segment_quadrature(pairing, 3)
    # both preimages map to the same physical point (already asserted inside,
    # here we just confirm total weight = interface length)
    assert sq.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_segment_quadrature_midpoint_rule():
    pairing = common_refinement(*flat_pair(4, 4))
    sq = segment_quadrature(pairing, 1)
    assert sq.weights.shape[1] == 1
    assert np.allclose(sq.weights[:, 0], pairing.seg_length)
    assert np.allclose(sq.phys[:, 0, 1], 0.0, atol=1e-14)


def test_line_integral_of_x():
    pairing = common_refinement(*flat_pair(5, 8))
    sq = segment_quadrature(pairing, 4)
    val = np.sum(sq.weights * sq.phys[:, :, 0])
    assert val == pytest.approx(0.5, abs=1e-12)


def test_cross_mesh_monomial_products_exact():
    """Traces from both sides integrate products exactly (mortar consistency)."""
    pairing = common_refinement(*flat_pair(5, 8))
    sq = segment_quadrature(pairing, 7)
    x = sq.phys[:, :, 0]
    for (i, j) in [(0, 0), (1, 1), (2, 1), (3, 2), (2, 3)]:
        val = np.sum(sq.weights * x**i * x**j)
        exact = 1.0 / (i + j + 1)
        assert val == pytest.approx(exact, rel=1e-12)


def test_fracture_pairing_arclength_and_normals():
    fluid, poro = build_fracture_domain(0.05)
    pairing = common_refinement(fluid, poro)
    n_trace = len(poro.boundary_edge_ids("interface"))
    assert pairing.n_segments == n_trace       # shared polyline: 1 to 1
    dots = np.einsum("kd,kd->k", pairing.seg_n_f, pairing.seg_n_p)
    assert np.all(dots < -1 + 1e-10)
    # half-ellipse perimeter with semi-axes (sqrt(0.5), 0.05)
    from scipy.special import ellipe

    a, b = np.sqrt(0.5), 0.05
    perimeter = 2 * a * ellipe(1 - (b / a) ** 2)
    assert pairing.length == pytest.approx(perimeter, rel=5e-3)


def test_tangential_permeability_per_segment():
    pairing = common_refinement(*flat_pair(4, 4))
    K = np.array([[3.0, 1.0], [1.0, 2.0]])
    Kj = tangential_permeability(pairing, K)
    # flat interface: tau = (+-1, 0) so K_j = K_xx
    assert np.allclose(Kj, 3.0, atol=1e-13)
    m = pairing.mesh_p.n_tris
    Kcells = np.broadcast_to(K, (m, 2, 2))
    assert np.allclose(tangential_permeability(pairing, Kcells), 3.0, atol=1e-13)
