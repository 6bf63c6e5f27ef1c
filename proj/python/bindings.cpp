#include "spincal/errors.hpp"
#include "spincal/harness.hpp"
#include "spincal/sepvars.hpp"
#include "spincal/spectral.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace spincal;

PYBIND11_MODULE(_core, m)
{
    m.doc() = "spincal C++ core";
    m.attr("__version__") = version();

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", error.ptr());
    py::register_exception<TrackingError>(m, "TrackingError", error.ptr());
    py::register_exception<CollisionError>(m, "CollisionError", error.ptr());
    py::register_exception<LatticePoleError>(m, "LatticePoleError", error.ptr());

    py::enum_<Variant>(m, "Variant").value("rational", Variant::rational).value("elliptic", Variant::elliptic);

    py::class_<Lattice>(m, "Lattice")
        .def_static("elliptic", [](cplx w1, cplx w2) { return Lattice::elliptic(w1, w2); }, py::arg("omega1"),
                    py::arg("omega2"))
        .def_static("trigonometric", [](cplx w1) { return Lattice::trigonometric(w1); }, py::arg("omega1"))
        .def_static("rational", [] { return Lattice::rational(); });

    m.def("sigma", [](cplx z, const Lattice &lat) { return sigma(z, lat); }, py::arg("z"), py::arg("lattice"));
    m.def("zeta", [](cplx z, const Lattice &lat) { return zeta(z, lat); }, py::arg("z"), py::arg("lattice"));
    m.def("wp", [](cplx z, const Lattice &lat) { return wp(z, lat); }, py::arg("z"), py::arg("lattice"));
    m.def("wp_prime", [](cplx z, const Lattice &lat) { return wp_prime(z, lat); }, py::arg("z"), py::arg("lattice"));
    m.def("phi", [](cplx x, cplx z, const Lattice &lat) { return phi(x, z, lat); }, py::arg("x"), py::arg("z"),
          py::arg("lattice"));

    py::class_<OrbitSpec>(m, "OrbitSpec")
        .def(py::init([](int N, int l, std::vector<cplx> lambdas, double diagonal, std::vector<double> diagonal_values) {
                 OrbitSpec s;
                 s.N = N;
                 s.l = l;
                 s.lambdas = std::move(lambdas);
                 s.diagonal = diagonal;
                 s.diagonal_values = std::move(diagonal_values);
                 s.validate();
                 return s;
             }),
             py::arg("N"), py::arg("l"), py::arg("lambdas"), py::arg("diagonal") = 2.0,
             py::arg("diagonal_values") = std::vector<double>{})
        .def_readonly("N", &OrbitSpec::N)
        .def_readonly("l", &OrbitSpec::l)
        .def_readonly("lambdas", &OrbitSpec::lambdas)
        .def_readonly("diagonal", &OrbitSpec::diagonal)
        .def_readonly("diagonal_values", &OrbitSpec::diagonal_values);

    py::class_<InitialLayout>(m, "InitialLayout")
        .def(py::init<>())
        .def_readwrite("spacing", &InitialLayout::spacing)
        .def_readwrite("direction", &InitialLayout::direction)
        .def_readwrite("jitter", &InitialLayout::jitter)
        .def_readwrite("momentum_scale", &InitialLayout::momentum_scale);

    py::class_<PhasePoint>(m, "PhasePoint")
        .def(py::init([](CVector x, CVector p, CMatrix f) {
                 if (x.size() != p.size() || f.rows() != x.size() || f.cols() != x.size())
                     throw ConfigError("PhasePoint: x, p and f sizes disagree");
                 return PhasePoint{std::move(x), std::move(p), std::move(f)};
             }),
             py::arg("x"), py::arg("p"), py::arg("f"))
        .def_readwrite("x", &PhasePoint::x)
        .def_readwrite("p", &PhasePoint::p)
        .def_readwrite("f", &PhasePoint::f)
        .def_property_readonly("N", &PhasePoint::size);

    m.def("seeded_phase_point", &seeded_phase_point, py::arg("spec"), py::arg("seed"),
          py::arg("layout") = InitialLayout{});
    m.def("orbit_dimension", py::overload_cast<int, int>(&orbit_dimension), py::arg("N"), py::arg("l"));
    m.def("genus", &genus, py::arg("N"), py::arg("l"));
    m.def(
        "hamiltonian", [](const PhasePoint &pp, const Lattice &lat, Variant v) { return hamiltonian(pp, lat, v); },
        py::arg("point"), py::arg("lattice"), py::arg("variant") = Variant::elliptic);
    m.def("char_poly", &char_poly, py::arg("point"), py::arg("z"), py::arg("lattice"),
          "coefficients r_0..r_N of (2k)^(N-j) in det(2k + L(z)), r_0 = 1");

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("times", &Trajectory::times)
        .def_readonly("states", &Trajectory::states)
        .def_readonly("failed", &Trajectory::failed)
        .def_readonly("failure", &Trajectory::failure)
        .def_property_readonly("accepted_steps", [](const Trajectory &t) { return t.stats.accepted; })
        .def_property_readonly("rejected_steps", [](const Trajectory &t) { return t.stats.rejected; });

    m.def(
        "integrate",
        [](const PhasePoint &pp, double T, const Lattice &lat, Variant v, double rtol, double atol, int samples) {
            IntegratorConfig cfg;
            cfg.rtol = rtol;
            cfg.atol = atol;
            cfg.samples = samples;
            py::gil_scoped_release release;
            return integrate(pp, T, lat, v, cfg);
        },
        py::arg("point"), py::arg("T"), py::arg("lattice"), py::arg("variant") = Variant::elliptic,
        py::arg("rtol") = 1e-10, py::arg("atol") = 1e-12, py::arg("samples") = 101);

    py::class_<BranchPoint>(m, "BranchPoint")
        .def_readonly("z", &BranchPoint::z)
        .def_readonly("k", &BranchPoint::k)
        .def_readonly("multiplicity", &BranchPoint::multiplicity)
        .def_readonly("residual", &BranchPoint::residual);
    m.def(
        "branch_points", [](const PhasePoint &pp, const Lattice &lat) { return branch_points(pp, lat); },
        py::arg("point"), py::arg("lattice"));

    py::class_<DivisorPoint>(m, "DivisorPoint")
        .def_readonly("z", &DivisorPoint::z)
        .def_readonly("k", &DivisorPoint::k)
        .def_readonly("sheet", &DivisorPoint::sheet)
        .def_readonly("residual", &DivisorPoint::residual)
        .def_readonly("curve_residual", &DivisorPoint::curve_residual);
    py::class_<DivisorSearch>(m, "DivisorSearch")
        .def_readonly("points", &DivisorSearch::points)
        .def_readonly("adjoint_points", &DivisorSearch::adjoint_points)
        .def_readonly("expected", &DivisorSearch::expected)
        .def("complete", &DivisorSearch::complete);
    m.def(
        "divisor", [](const PhasePoint &pp, const Lattice &lat) { return divisor(pp, lat); }, py::arg("point"),
        py::arg("lattice"));

    m.def(
        "darboux_check",
        [](const PhasePoint &pp, const Lattice &lat, double fd_step, int trials, std::uint64_t seed) {
            const DivisorGradients grads = divisor_gradients(pp, lat, fd_step);
            const BracketMatrix b = bracket_matrix(grads, pp.f);
            const ReducedFormFit fit = reduced_form_fit(grads, pp, trials, seed);
            py::dict d;
            d["ZZ"] = b.ZZ;
            d["KK"] = b.KK;
            d["KZ"] = b.KZ;
            d["kz_mean"] = b.kz_mean();
            d["kz_diagonal_spread"] = b.kz_diagonal_spread();
            d["c_hat"] = fit.c_hat;
            d["fit_residual"] = fit.residual;
            return d;
        },
        py::arg("point"), py::arg("lattice"), py::arg("fd_step") = 1e-5, py::arg("trials") = 20, py::arg("seed") = 1);

    py::class_<DofAudit>(m, "DofAudit")
        .def_readonly("particle", &DofAudit::particle)
        .def_readonly("orbit", &DofAudit::orbit)
        .def_readonly("reduction", &DofAudit::reduction)
        .def_readonly("total", &DofAudit::total)
        .def_readonly("two_g", &DofAudit::two_g)
        .def_readonly("equal", &DofAudit::equal);
    m.def("dof_audit", &dof_audit, py::arg("N"), py::arg("l"));

    m.def(
        "run_command",
        [](const std::vector<std::string> &args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_command(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a CLI subcommand; returns (exit_code, stdout, stderr).");
}
