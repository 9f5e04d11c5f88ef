#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pifsim/config.hpp"
#include "pifsim/nufft.hpp"
#include "pifsim/strategies.hpp"

namespace py = pybind11;
using namespace pifsim;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Complex = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Points& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) {
        throw py::value_error("points must have shape (M, 3)");
    }
    std::vector<Vec3> p(static_cast<std::size_t>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t j = 0; j < a.shape(0); ++j) {
        p[static_cast<std::size_t>(j)] = {r(j, 0), r(j, 1), r(j, 2)};
    }
    return p;
}

Complex modes_array(const FourierField& f) {
    Complex out({f.N, f.N, f.N});
    std::copy(f.coeffs.begin(), f.coeffs.end(), out.mutable_data());
    return out;
}

FourierField modes_field(const Complex& a, double L) {
    if (a.ndim() != 3 || a.shape(0) != a.shape(1) || a.shape(1) != a.shape(2)) {
        throw py::value_error("modes must have shape (N, N, N)");
    }
    auto f = FourierField::zeros(static_cast<int>(a.shape(0)), L);
    std::copy(a.data(), a.data() + a.size(), f.coeffs.begin());
    return f;
}

std::vector<cplx> strengths(const Complex& c, std::size_t m) {
    if (static_cast<std::size_t>(c.size()) != m) {
        throw py::value_error("need one strength per point");
    }
    return {c.data(), c.data() + c.size()};
}

py::dict record_dict(const StepRecord& r) {
    py::dict d;
    d["step"] = r.step;
    d["t"] = r.t;
    d["field_energy"] = r.field_energy;
    d["kinetic_energy"] = r.kinetic_energy;
    d["external_energy"] = r.external_energy;
    d["total_energy"] = r.total_energy;
    d["momentum"] = r.momentum;
    d["total_charge"] = r.total_charge;
    d["fundamental_energy"] = r.fundamental_energy;
    d["particle_count"] = r.particle_count;
    return d;
}

cli::Settings settings_of(const py::dict& d) {
    cli::Settings s;
    for (const auto& [k, v] : d) {
        auto key = py::str(k).cast<std::string>();
        if (py::isinstance<py::bool_>(v)) {
            s[key] = v.cast<bool>() ? "true" : "false";
        } else {
            s[key] = py::str(v).cast<std::string>();
        }
    }
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Particle-in-Fourier Vlasov-Poisson simulator";

    // translators run most recent first: register bases before derived types
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<cli::UsageError>(m, "UsageError", PyExc_ValueError);

    m.def(
        "nufft_type1",
        [](const Points& x, const Complex& c, int N, double L, double eps) {
            const auto p = to_points(x);
            const auto s = strengths(c, p.size());
            py::gil_scoped_release nogil;
            auto f = nufft::type1(nufft::make_plan(N, L, eps), p, s);
            py::gil_scoped_acquire gil;
            return modes_array(f);
        },
        py::arg("points"), py::arg("strengths"), py::arg("N"), py::arg("L"), py::arg("eps") = 1e-7,
        "Sum_j c_j exp(-i k.x_j) on the N^3 modes m in [-N/2, N/2)^3, indexed [m_x][m_y][m_z] + N/2.");
    m.def(
        "nufft_type2",
        [](const Complex& modes, const Points& x, double L, double eps) {
            const auto f = modes_field(modes, L);
            const auto p = to_points(x);
            auto v = nufft::type2(nufft::make_plan(f.N, L, eps), f, p);
            return Complex(static_cast<py::ssize_t>(v.size()), v.data());
        },
        py::arg("modes"), py::arg("points"), py::arg("L"), py::arg("eps") = 1e-7);
    m.def(
        "direct_type1",
        [](const Points& x, const Complex& c, int N, double L) {
            const auto p = to_points(x);
            return modes_array(nufft::direct_type1(N, L, p, strengths(c, p.size())));
        },
        py::arg("points"), py::arg("strengths"), py::arg("N"), py::arg("L"));
    m.def(
        "direct_type2",
        [](const Complex& modes, const Points& x, double L) {
            auto v = nufft::direct_type2(modes_field(modes, L), to_points(x));
            return Complex(static_cast<py::ssize_t>(v.size()), v.data());
        },
        py::arg("modes"), py::arg("points"), py::arg("L"));

    m.def(
        "config_json",
        [](const py::dict& settings) { return cli::to_json(cli::make_config(settings_of(settings))); },
        py::arg("settings") = py::dict(), "Effective configuration as JSON text.");

    m.def(
        "simulate",
        [](const py::dict& settings) {
            const auto req = cli::to_request(cli::make_config(settings_of(settings)));
            SimulationResult res;
            {
                py::gil_scoped_release nogil;
                res = simulate(req);
            }
            py::dict out;
            out["initial"] = record_dict(res.initial);
            py::list recs;
            for (const auto& r : res.records) recs.append(record_dict(r));
            out["records"] = recs;
            out["iterations_per_block"] = res.iterations_per_block;
            out["residuals_per_block"] = res.residuals_per_block;
            out["max_count_imbalance"] = res.max_count_imbalance;
            out["wall_seconds"] = res.wall_seconds;
            return out;
        },
        py::arg("settings") = py::dict(), "Runs a simulation in process; no files are written.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release nogil;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line driver; returns (exit_code, stdout, stderr).");
}
