"""Triangle-mesh utilities and binary volume / edge-graph formats."""
import numpy as np
import pytest

from infillbench import mesh as msh
from infillbench import volio


# ---------------------------------------------------------------- geometry

def test_box_volume_and_closedness():
    box = msh.make_box((0, 0, 0), (2, 3, 4))
    box.check_closed()
    assert box.volume() == pytest.approx(24.0)


def test_icosphere_volume_converges():
    errs = []
    for sub in (1, 2, 3):
        s = msh.make_icosphere(radius=1.0, subdivisions=sub)
        s.check_closed()
        errs.append(abs(s.volume() - 4.0 / 3.0 * np.pi))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / (4.0 / 3.0 * np.pi) < 0.01


def test_winding_number_inside_outside():
    box = msh.make_box((0, 0, 0), (1, 1, 1))
    w = msh.winding_number(box, np.array([[0.5, 0.5, 0.5],
                                          [2.0, 0.5, 0.5],
                                          [-0.1, -0.1, -0.1]]))
    assert w[0] == pytest.approx(1.0, abs=1e-6)
    assert abs(w[1]) < 1e-6 and abs(w[2]) < 1e-6


def test_segment_mesh_intersection():
    box = msh.make_box((0, 0, 0), (1, 1, 1))
    p0 = np.array([0.5, 0.5, 0.5])
    p1 = np.array([2.0, 0.5, 0.5])
    t = msh.segment_mesh_intersection(box, p0, p1)
    assert t is not None
    assert t == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert (p0 + t * (p1 - p0))[0] == pytest.approx(1.0, abs=1e-12)
    assert msh.segment_mesh_intersection(
        box, np.array([2.0, 2, 2]), np.array([3.0, 3, 3])) is None


def test_stl_obj_roundtrip(tmp_path):
    mesh = msh.make_icosphere(radius=0.7, subdivisions=1)
    msh.save_stl(mesh, tmp_path / "m.stl")
    back = msh.load_mesh(tmp_path / "m.stl")
    assert back.volume() == pytest.approx(mesh.volume(), rel=1e-6)
    msh.save_obj(mesh, tmp_path / "m.obj")
    back = msh.load_mesh(tmp_path / "m.obj")
    assert len(back.triangles) == len(mesh.triangles)
    assert back.volume() == pytest.approx(mesh.volume(), rel=1e-9)


# ----------------------------------------------------------------- volumes

def test_labels_roundtrip(tmp_path):
    labels = np.random.default_rng(0).integers(0, 4, (4, 5, 6)).astype(np.uint8)
    volio.save_labels(tmp_path / "a.vox", labels, 0.25, (1, 2, 3))
    back, spacing, origin = volio.load_labels(tmp_path / "a.vox")
    assert (back == labels).all()
    assert spacing == pytest.approx(0.25)
    assert np.allclose(origin, (1, 2, 3))


def test_f32_roundtrip_scalar_and_vector(tmp_path):
    rng = np.random.default_rng(1)
    scalar = rng.standard_normal((3, 4, 5)).astype(np.float32)
    volio.save_f32(tmp_path / "s.f32", scalar, 1.0, (0, 0, 0))
    back, spacing, origin = volio.load_f32(tmp_path / "s.f32")
    assert (back == scalar).all()
    vec = rng.standard_normal((3, 4, 5, 3)).astype(np.float32)
    volio.save_f32(tmp_path / "v.f32", vec, 1.0, (0, 0, 0))
    back, _, _ = volio.load_f32(tmp_path / "v.f32")
    assert back.shape == (3, 4, 5, 3) and (back == vec).all()


def test_truncated_volume_rejected(tmp_path):
    volio.save_labels(tmp_path / "a.vox", np.ones((2, 2, 2), np.uint8),
                      1.0, (0, 0, 0))
    data = (tmp_path / "a.vox").read_bytes()
    (tmp_path / "b.vox").write_bytes(data[:-3])
    with pytest.raises(volio.FormatError):
        volio.load_labels(tmp_path / "b.vox")


# -------------------------------------------------------------- edge graph

def test_edge_graph_dedupes_and_roundtrips(tmp_path):
    nodes = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=np.float64)
    with pytest.raises(volio.FormatError):
        volio.EdgeGraph(nodes, np.array([[0, 1], [2, 2]]))   # self-loop
    g = volio.EdgeGraph(nodes, np.array([[0, 1], [1, 0], [1, 2]]))
    assert len(g.edges) == 2                    # reversed duplicate merged
    volio.save_edge_graph(tmp_path / "g.obj", g)
    back = volio.load_edge_graph(tmp_path / "g.obj")
    assert np.allclose(back.nodes, nodes)
    assert (np.sort(back.edges, axis=1) == np.sort(g.edges, axis=1)).all()
