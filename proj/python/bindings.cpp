#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "aimc/calibration.hpp"
#include "aimc/config.hpp"
#include "aimc/cost.hpp"
#include "aimc/train.hpp"

namespace py = pybind11;
using namespace aimc;

namespace {

MatF mat_from_numpy(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2) throw ContractViolation("expected a 2-d float array");
    MatF m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::memcpy(m.v.data(), arr.data(), sizeof(float) * m.size());
    return m;
}

// one tile-level multiply-accumulate on the given core
py::array_t<int> run_mac(const AnalogCore& core,
                         py::array_t<int, py::array::c_style | py::array::forcecast> weights,
                         py::array_t<int, py::array::c_style | py::array::forcecast> inputs,
                         const std::string& mode, int resends, bool skip_zeros,
                         std::uint64_t noise_seed) {
    if (weights.ndim() != 2 || inputs.ndim() != 1)
        throw ContractViolation("run_mac: weights must be 2-d, inputs 1-d");
    TileWeights w;
    w.rows = static_cast<int>(weights.shape(0));
    w.cols = static_cast<int>(weights.shape(1));
    w.col_offset = 0;
    w.w.resize(static_cast<std::size_t>(w.rows) * w.cols);
    for (int r = 0; r < w.rows; ++r)
        for (int c = 0; c < w.cols; ++c)
            w.w[static_cast<std::size_t>(r) * w.cols + c] =
                static_cast<std::int8_t>(weights.at(r, c));

    std::vector<std::uint8_t> x(static_cast<std::size_t>(inputs.shape(0)));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<std::uint8_t>(inputs.at(i));

    MacOptions opts;
    opts.mode = mode == "relu" ? AdcMode::relu : AdcMode::signed_centered;
    opts.resends = resends;
    opts.skip_zeros = skip_zeros;

    Rng rng(noise_seed);
    const auto out = execute_mac(core, w, build_schedule(x, opts), opts, rng);
    py::array_t<int> res(static_cast<py::ssize_t>(out.values.size()));
    for (std::size_t i = 0; i < out.values.size(); ++i) res.mutable_at(static_cast<py::ssize_t>(i)) = out.values[i];
    return res;
}

} // namespace

PYBIND11_MODULE(_aimcsim, m) {
    m.doc() = "analog in-memory MAC accelerator simulator";

    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IngestError>(m, "IngestError", PyExc_IOError);
    py::register_exception<CalibrationFailure>(m, "CalibrationFailure", PyExc_RuntimeError);

    py::class_<VariationSpec>(m, "VariationSpec")
        .def(py::init<>())
        .def_readwrite("gain_sigma_ln", &VariationSpec::gain_sigma_ln)
        .def_readwrite("leak_sigma_ln", &VariationSpec::leak_sigma_ln)
        .def_readwrite("capacitance_sigma_ln", &VariationSpec::capacitance_sigma_ln)
        .def_readwrite("rest_offset_sigma_lsb", &VariationSpec::rest_offset_sigma_lsb)
        .def_readwrite("pulse_offset_sigma_ns", &VariationSpec::pulse_offset_sigma_ns);

    py::class_<PhysicsSpec>(m, "PhysicsSpec")
        .def(py::init<>())
        .def_readwrite("tau_syn_us", &PhysicsSpec::tau_syn_us)
        .def_readwrite("tau_mem_target_us", &PhysicsSpec::tau_mem_target_us)
        .def_readwrite("pulse_unit_ns", &PhysicsSpec::pulse_unit_ns)
        .def_readwrite("charge_to_lsb", &PhysicsSpec::charge_to_lsb)
        .def_readwrite("saturation_knee_lsb", &PhysicsSpec::saturation_knee_lsb)
        .def_readwrite("trial_noise_sigma_lsb", &PhysicsSpec::trial_noise_sigma_lsb)
        .def_readwrite("ideal_mode", &PhysicsSpec::ideal_mode);

    py::class_<AnalogCore>(m, "AnalogCore")
        .def_static(
            "make",
            [](std::uint64_t seed, const VariationSpec& v, const PhysicsSpec& p) {
                return AnalogCore::make(seed, v, p);
            },
            py::arg("seed"), py::arg("variation") = VariationSpec{},
            py::arg("physics") = PhysicsSpec{})
        .def_property_readonly("neurons", [](const AnalogCore& c) { return c.geometry().cols(); })
        .def_property_readonly("rows", [](const AnalogCore& c) { return c.geometry().rows(); })
        .def("gain_pos", &AnalogCore::gain_pos)
        .def("gain_neg", &AnalogCore::gain_neg)
        .def("save_calibration",
             [](const AnalogCore& c, const std::string& path) { c.calibration().save(path); })
        .def("load_calibration", [](AnalogCore& c, const std::string& path) {
            c.set_calibration(CalibrationState::load(path));
        });

    m.def(
        "calibrate",
        [](AnalogCore& core, double target, double tolerance_cv, double driver_tolerance_ns,
           std::uint64_t seed) {
            Rng rng = Rng(seed).fork(1);
            calibrate_drivers(core, driver_tolerance_ns, rng);
            calibrate_neurons(core, target, tolerance_cv, rng);
        },
        py::arg("core"),
        py::arg("target_amplitude_lsb") = CalibrationOptions{}.target_amplitude_lsb,
        py::arg("tolerance_cv") = 0.07, py::arg("driver_tolerance_ns") = 0.3, py::arg("seed") = 1,
        "trim drivers and neurons in place");

    m.def(
        "decalibrate",
        [](AnalogCore& core, double factor) {
            core.set_calibration(blend_decalibration(core.calibration(), factor));
        },
        py::arg("core"), py::arg("factor"),
        "blend the current calibration toward the all-median state");

    m.def(
        "stimulus_response_cv",
        [](const AnalogCore& core, int reads, std::uint64_t seed) {
            Rng rng(seed);
            return response_cv(measure_stimulus_response(core, {}, +1, reads, rng));
        },
        py::arg("core"), py::arg("reads") = 30, py::arg("seed") = 1,
        "coefficient of variation of the standard-stimulus response");

    m.def("run_mac", &run_mac, py::arg("core"), py::arg("weights"), py::arg("inputs"),
          py::arg("mode") = "signed", py::arg("resends") = 1, py::arg("skip_zeros") = true,
          py::arg("noise_seed") = 1,
          "execute one tile-level multiply-accumulate, returns activations per column");

    m.def(
        "quantize_weights",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> w, int limit) {
            const auto q = quantize_weights(mat_from_numpy(w), limit);
            py::array_t<int> arr({q.rows, q.cols});
            for (int r = 0; r < q.rows; ++r)
                for (int c = 0; c < q.cols; ++c) arr.mutable_at(r, c) = q.at(r, c);
            return py::make_tuple(arr, q.scale);
        },
        py::arg("weights"), py::arg("limit") = 63, "-> (int weights, scale), 6-bit by default");

    m.def(
        "partition_summary",
        [](int rows, int cols, bool signed_rows) {
            const auto plan = partition(rows, cols, {}, signed_rows);
            py::dict d;
            d["row_tiles"] = plan.row_tiles;
            d["col_tiles"] = plan.col_tiles;
            d["tiles"] = plan.tiles.size();
            d["runs"] = plan.runs();
            return d;
        },
        py::arg("rows"), py::arg("cols"), py::arg("signed_rows") = true);

    m.def(
        "model_cost",
        [](const std::string& model_name, int batch) {
            const auto spec =
                model_name == "conv" ? ModelSpec::mnist_conv() : ModelSpec::mnist_dense();
            MatF warmup(1, spec.input_dim());
            for (auto& x : warmup.v) x = 0.5f;
            const auto model = compile_model(spec, init_weights(spec, 1), warmup);
            const auto rep = estimate_cost(model, TimingSpec{}, batch);
            py::dict d;
            d["tile_execs"] = rep.tile_execs;
            d["runs"] = rep.runs;
            d["runtime_ms"] = rep.runtime_ms;
            d["energy_mj"] = rep.energy_mj;
            return d;
        },
        py::arg("model") = "dense", py::arg("batch") = 1,
        "per-image timing/energy of a benchmark model");

    m.def(
        "characterize",
        [](AnalogCore& core, int repeats, int resends, std::uint64_t seed) {
            CharacterizationSweep sweep;
            sweep.repeats = repeats;
            sweep.resends = resends;
            Rng rng(seed);
            const auto rep = characterize(core, sweep, rng);
            py::dict d;
            d["levels"] = rep.levels;
            const std::size_t nl = rep.levels.size();
            py::array_t<double> mean({nl, static_cast<std::size_t>(rep.columns)});
            py::array_t<double> stdd({nl, static_cast<std::size_t>(rep.columns)});
            for (std::size_t li = 0; li < nl; ++li)
                for (int c = 0; c < rep.columns; ++c) {
                    mean.mutable_at(li, c) = rep.mean[li][c];
                    stdd.mutable_at(li, c) = rep.stddev[li][c];
                }
            d["mean"] = mean;
            d["std"] = stdd;
            d["weight_sum"] = rep.weight_sum;
            return d;
        },
        py::arg("core"), py::arg("repeats") = 30, py::arg("resends") = 1, py::arg("seed") = 1,
        "ramp/random weight sweep: mean and std per column per input level");
}
