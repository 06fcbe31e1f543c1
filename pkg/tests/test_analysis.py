"""Design evaluation, deviation fields, rotated loads and CSV comparison."""
import numpy as np
import pytest

from infillbench import analysis as an
from infillbench import domain as dm
from infillbench import fem
from infillbench import stressfield as sf
from infillbench import topopt as to
from infillbench.rasterize import MaterialField

from conftest import solid_box, cantilever


def _solid_field(dom):
    rho = (dom.labels.ravel(order="F") != dm.VOID).astype(np.float64)
    d = dom.copy()
    d.labels[d.labels == dm.BOUNDARY] = dm.PASSIVE
    return MaterialField(rho, d, {"strategy": "solid"})


def test_evaluate_design_solid_baseline():
    dom = cantilever(8, 4, 4)
    report, sigma, vm = an.evaluate_design(_solid_field(dom), dom,
                                           fem.SolverConfig(rel_tol=1e-8))
    assert report.volume_fraction == pytest.approx(1.0)
    assert report.compliance > 0
    assert (vm >= 0).all() and np.isfinite(vm).all()
    assert report.solver_stats["converged"]


def test_deviation_self_is_zero():
    dom = cantilever(6, 4, 4)
    _, sigma, _ = an.evaluate_design(_solid_field(dom), dom,
                                     fem.SolverConfig(rel_tol=1e-8))
    mask = dom.labels.ravel(order="F") != dm.VOID
    dev = an.deviation_field(sigma, sigma, mask)
    ok = dev.compared & ~dev.degenerate
    assert ok.any()
    assert dev.values[ok].max() <= 1e-10
    assert dev.stats()["mean"] <= 1e-10


def test_deviation_orthogonal_is_one_and_symmetric():
    dom = solid_box(3, 3, 3)
    n = dom.n_elements
    sx = np.zeros((n, 6))
    sx[:, 0] = 5.0
    sy = np.zeros((n, 6))
    sy[:, 1] = 3.0
    fx = sf.StressTensorField(sx, dom)
    fy = sf.StressTensorField(sy, dom)
    mask = np.ones(n, dtype=bool)
    d1 = an.deviation_field(fx, fy, mask)
    d2 = an.deviation_field(fy, fx, mask)
    ok = d1.compared & ~d1.degenerate
    assert np.allclose(d1.values[ok], 1.0)
    assert np.allclose(d1.values, d2.values)
    # sign flip means identical axes: deviation zero
    d3 = an.deviation_field(fx, sf.StressTensorField(-sx, dom), mask)
    assert d3.values[d3.compared & ~d3.degenerate].max() <= 1e-12


def test_deviation_degenerate_excluded():
    dom = solid_box(2, 2, 2)
    n = dom.n_elements
    hydro = np.zeros((n, 6))
    hydro[:, :3] = 1.0
    other = np.zeros((n, 6))
    other[:, 0] = 1.0
    dev = an.deviation_field(sf.StressTensorField(hydro, dom),
                             sf.StressTensorField(other, dom),
                             np.ones(n, dtype=bool))
    assert dev.degenerate.all()
    assert dev.stats()["n"] == 0
    assert (dev.values == 0).all()


def test_rotation_matrix_properties():
    R = an.rotation_matrix((45.0, 0.0, 0.0))
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert np.allclose(an.rotation_matrix((0, 0, 0)), np.eye(3))
    # intrinsic x->y->z composition order
    Rx = an.rotation_matrix((30, 0, 0))
    Ry = an.rotation_matrix((0, 40, 0))
    Rz = an.rotation_matrix((0, 0, 50))
    assert np.allclose(an.rotation_matrix((30, 40, 50)), Rz @ Ry @ Rx,
                       atol=1e-12)


def test_variable_load_preserves_magnitude_and_identity():
    dom = cantilever(8, 4, 4)
    field = _solid_field(dom)
    base, _, _ = an.evaluate_design(field, dom, fem.SolverConfig(rel_tol=1e-8))
    same = an.variable_load(field, dom, (0.0, 0.0, 0.0),
                            fem.SolverConfig(rel_tol=1e-8))
    assert same.compliance == pytest.approx(base.compliance, rel=1e-6)
    rot = an.variable_load(field, dom, (31.0, 17.0, -5.0),
                           fem.SolverConfig(rel_tol=1e-8))
    assert rot.load_case == (31.0, 17.0, -5.0)
    # per-node force magnitudes preserved by the rotation
    R = an.rotation_matrix((31.0, 17.0, -5.0))
    rotated = dom.loads @ R.T
    assert np.allclose(np.linalg.norm(rotated, axis=1),
                       np.linalg.norm(dom.loads, axis=1), atol=1e-12)


def test_compare_designs_sorted_csv(tmp_path):
    def rep(stg, c, vf):
        return an.DesignReport(strategy=stg, params={}, volume_fraction=vf,
                               compliance=c, preset_id="p",
                               deviation_stats={"mean": 0.1, "p90": 0.2},
                               solver_stats={"iterations": 5, "wall_s": 0.1})
    text = an.compare_designs([rep("a", 30.0, 0.3), rep("b", 10.0, 0.3),
                               rep("c", 20.0, 0.3)], tmp_path / "c.csv")
    lines = text.strip().splitlines()
    assert lines[0].split(",")[0:3] == ["strategy", "vf", "compliance"]
    assert [l.split(",")[0] for l in lines[1:]] == ["b", "c", "a"]
    assert (tmp_path / "c.csv").read_text() == text


def test_compare_designs_mixed_presets_rejected():
    def rep(pid):
        return an.DesignReport(strategy="s", params={}, volume_fraction=0.5,
                               compliance=1.0, preset_id=pid)
    with pytest.raises(ValueError):
        an.compare_designs([rep("a"), rep("b")])


def test_design_report_invariants():
    with pytest.raises(ValueError):
        an.DesignReport(strategy="s", params={}, volume_fraction=0.5,
                        compliance=-1.0)
    with pytest.raises(ValueError):
        an.DesignReport(strategy="s", params={}, volume_fraction=1.5,
                        compliance=1.0)
