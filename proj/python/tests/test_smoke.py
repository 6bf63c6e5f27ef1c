import cmath

import numpy as np
import pytest

import spincal

LAT = spincal.Lattice.elliptic(1.0, complex(0.3, 1.1))


def two_body(seed=3):
    spec = spincal.OrbitSpec(2, 1, [4.0])
    return spincal.seeded_phase_point(spec, seed)


def test_kernel_values():
    z = complex(0.21, 0.17)
    h = 1e-5
    dzeta = (spincal.zeta(z + h, LAT) - spincal.zeta(z - h, LAT)) / (2 * h)
    assert abs(spincal.wp(z, LAT) + dzeta) < 1e-7
    assert abs(spincal.sigma(-z, LAT) + spincal.sigma(z, LAT)) < 1e-12
    rational = spincal.Lattice.rational()
    assert abs(spincal.phi(0.3, 0.5, rational) - (1 / 0.3 - 1 / 0.5) * cmath.exp(0.3 / 0.5)) < 1e-12


def test_phase_point_and_integration():
    pp = two_body()
    assert pp.N == 2
    assert pp.f.shape == (2, 2)
    np.testing.assert_allclose(np.diag(pp.f), [2.0, 2.0], atol=1e-12)
    h0 = spincal.hamiltonian(pp, LAT)
    traj = spincal.integrate(pp, 1.0, LAT, samples=11)
    assert not traj.failed
    assert len(traj.times) == 11
    assert abs(spincal.hamiltonian(traj.states[-1], LAT) - h0) < 1e-8


def test_curve_and_divisor():
    pp = two_body()
    c = spincal.char_poly(pp, complex(0.2, 0.3), LAT)
    assert len(c) == 3
    assert abs(c[0] - 1) < 1e-12
    assert len(spincal.branch_points(pp, LAT)) == 2 * spincal.genus(2, 1) - 2
    d = spincal.divisor(pp, LAT)
    assert d.complete()
    assert len(d.points) == 1


def test_darboux_constant():
    r = spincal.darboux_check(two_body(), LAT)
    assert abs(r["c_hat"] - 2) < 1e-6
    assert abs(r["kz_mean"] - 0.5) < 1e-5


def test_audit_and_cli():
    a = spincal.dof_audit(4, 2)
    assert (a.total, a.two_g, a.equal) == (12, 12, True)
    code, out, _ = spincal.run_command(["audit", "--N", "2", "--l", "1"])
    assert code == 0
    assert "genus=2 orbit_dim=2" in out
    code, _, err = spincal.run_command(["simulate", "--config", "/nonexistent.json"])
    assert code == 2
    assert "configuration error" in err


def test_errors_map_to_python():
    with pytest.raises(spincal._core.ConfigError):
        spincal.OrbitSpec(3, 1, [5.0])
    assert issubclass(spincal._core.ConfigError, RuntimeError)
    assert cmath.isfinite(spincal.wp_prime(0.4, LAT))


def test_report_config_matches_schema(tmp_path):
    import json
    import pathlib

    jsonschema = pytest.importorskip("jsonschema")
    root = pathlib.Path(__file__).resolve().parents[2]
    schema = json.loads((root / "schema" / "config.schema.json").read_text())
    code, _, _ = spincal.run_command(["audit", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report["config"], schema)
    csv = (tmp_path / "audit.csv").read_text().splitlines()
    assert csv[0] == f"# tool=spincal version={spincal.__version__} config_hash={report['config_hash']} table=audit"
    assert csv[1] == "N,l,particle,orbit,reduction,total,two_g,equal"
    assert csv[2] == "2,1,4,2,-2,4,4,1"
