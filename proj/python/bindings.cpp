#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "cavsim/cli.hpp"
#include "cavsim/config.hpp"
#include "cavsim/error.hpp"
#include "cavsim/protocols.hpp"

namespace py = pybind11;
using namespace cavsim;

PYBIND11_MODULE(_cavsim, m) {
  m.doc() = "Cavity-enhanced single-emitter simulator";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_RuntimeError);
  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);

  py::class_<MirrorSet>(m, "MirrorSet")
      .def(py::init<>())
      .def(py::init([](double t_out, double t_back, double loss) { return MirrorSet{t_out, t_back, loss}; }),
           py::arg("t_out"), py::arg("t_back"), py::arg("loss"))
      .def_readwrite("t_out", &MirrorSet::t_out)
      .def_readwrite("t_back", &MirrorSet::t_back)
      .def_readwrite("loss", &MirrorSet::loss);

  py::class_<CavityDerived>(m, "CavityDerived")
      .def_readonly("finesse", &CavityDerived::finesse)
      .def_readonly("fwhm_linewidth_hz", &CavityDerived::fwhm_linewidth_hz)
      .def_readonly("fsr_hz", &CavityDerived::fsr_hz)
      .def_readonly("quality_factor", &CavityDerived::quality_factor)
      .def_readonly("waist_m", &CavityDerived::waist_m)
      .def_readonly("mode_volume_m3", &CavityDerived::mode_volume_m3)
      .def_readonly("p_tl", &CavityDerived::p_tl)
      .def_readonly("p_tl_model", &CavityDerived::p_tl_model)
      .def_readonly("p_branched", &CavityDerived::p_branched)
      .def_readonly("eta_out", &CavityDerived::eta_out);

  m.def("compute_finesse", &compute_finesse, py::arg("mirrors"));
  m.def("compute_linewidth", &compute_linewidth, py::arg("finesse"), py::arg("l_opt_m"));
  m.def("outcoupling_efficiency", &outcoupling_efficiency, py::arg("mirrors"));
  m.def("apply_branching", &apply_branching, py::arg("p_tl"), py::arg("beta"));
  m.def("purcell_lifetime", &purcell_lifetime, py::arg("p"), py::arg("tau0_s"));
  m.def("radiative_fwhm", &radiative_fwhm, py::arg("lifetime_s"));
  m.def("rescale_g2", &rescale_g2, py::arg("raw"), py::arg("background_fraction"));
  m.def("background_fraction_for", &background_fraction_for, py::arg("raw"), py::arg("corrected"));
  m.def("derive_default_cavity", [] { return default_config().setup().cavity; });

  py::class_<Emitter>(m, "Emitter")
      .def_readonly("id", &Emitter::id)
      .def_readonly("freq0_hz", &Emitter::freq0_hz)
      .def_readonly("purcell", &Emitter::purcell)
      .def_readonly("lifetime_s", &Emitter::lifetime_s)
      .def_readonly("t2_s", &Emitter::t2_s);

  m.def(
      "sample_ensemble",
      [](std::uint64_t seed) {
        const RunConfig c = default_config();
        const Setup s = c.setup();
        return sample_ensemble(c.line, c.window, s.geometry, s.emitter_model, seed);
      },
      py::arg("seed"), "Default ensemble in the 5-9 GHz window");

  m.def(
      "excitation_probability",
      [](double bandwidth_hz, double area_rad, double detuning_hz) {
        return excitation_probability(gaussian_pulse(bandwidth_hz, area_rad), detuning_hz);
      },
      py::arg("bandwidth_hz"), py::arg("area_rad"), py::arg("detuning_hz"));

  m.def(
      "g2_experiment",
      [](std::size_t pulses, double bandwidth_hz, std::uint64_t seed) {
        const RunConfig c = default_config();
        G2Plan p = c.g2;
        p.pulses = pulses;
        p.bandwidth_hz = bandwidth_hz;
        const G2Run r = run_g2_experiment(c.target_emitter(), p, c.setup(), seed);
        return py::dict(py::arg("raw_g2_zero") = r.raw_g2_zero, py::arg("rescaled_g2_zero") = r.rescaled_g2_zero,
                        py::arg("dark_fraction") = r.dark_fraction, py::arg("clicks") = r.clicks,
                        py::arg("lags") = r.histogram.lags, py::arg("g2") = r.histogram.values);
      },
      py::arg("pulses") = 100'000, py::arg("bandwidth_hz") = 0.55e6, py::arg("seed") = 0);

  m.def(
      "fit_line",
      [](const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma,
         const std::string& model) {
        if (x.size() != y.size() || x.size() != sigma.size()) throw InvalidArgument("x, y and sigma differ in length");
        std::vector<Sample> s;
        for (std::size_t i = 0; i < x.size(); ++i) s.push_back({x[i], y[i], sigma[i]});
        const LineModel lm = model == "lorentzian" ? LineModel::kLorentzian : LineModel::kGaussian;
        py::dict out;
        for (const auto& p : fit_line(s, lm).params) out[py::str(p.name)] = py::make_tuple(p.value, p.error);
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("sigma"), py::arg("model") = "gaussian");

  m.def("default_config_text", [] { return write_config(default_config()); });
  m.def("config_hash", &content_hash, py::arg("text"));

  m.def(
      "run_command",
      [](const std::string& command, const std::string& config_path, const std::string& out_dir,
         std::optional<std::uint64_t> seed, double shots_scale) {
        CliOptions o;
        o.command = command;
        o.config_path = config_path;
        o.out_dir = out_dir;
        o.seed = seed;
        o.shots_scale = shots_scale;
        std::ostringstream so, se;
        const int rc = run_command(o, so, se);
        return py::make_tuple(rc, so.str(), se.str());
      },
      py::arg("command"), py::arg("config_path") = "", py::arg("out_dir") = "", py::arg("seed") = py::none(),
      py::arg("shots_scale") = 1.0);
}
