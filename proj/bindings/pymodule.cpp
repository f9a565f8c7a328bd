#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cimsim/bitslice.hpp"
#include "cimsim/block.hpp"
#include "cimsim/config.hpp"
#include "cimsim/device.hpp"
#include "cimsim/energy.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/mnist.hpp"
#include "cimsim/network.hpp"
#include "cimsim/similarity.hpp"

namespace py = pybind11;
using namespace cimsim;

namespace {

// Host-side conveniences over the block primitives.

std::int64_t py_cim_multiply(int x, int w) {
    CimBlock block(DeviceParams::with_levels(4), TimingParams{}, Rng(1));
    block.form_all();
    store_weight(block, 0, 0, SlicedWeight::encode(w));
    return cim_multiply(x, block, 0, 0).value();
}

std::int64_t py_cim_dot(const std::vector<int>& x, const std::vector<int>& w) {
    if (x.size() != w.size()) raise(Errc::ShapeMismatch, "cim_dot: length mismatch");
    CimBlock block(DeviceParams::with_levels(4), TimingParams{}, Rng(1), 512, 32);
    block.form_all();
    for (std::size_t i = 0; i < w.size(); ++i) {
        store_weight(block, static_cast<int>(i), 0, SlicedWeight::encode(w[i]));
    }
    return cim_dot(x, block, 0).value();
}

std::int64_t py_euclid_sq(int x, int y) {
    CimBlock block(DeviceParams::with_levels(2), TimingParams{}, Rng(1));
    block.form_all();
    return euclid_sq_int8_cim(x, y, block);
}

std::int64_t py_hamming(const std::vector<std::uint8_t>& a,
                        const std::vector<std::uint8_t>& b) {
    CimBlock block(DeviceParams::with_levels(2), TimingParams{}, Rng(1));
    block.form_all();
    return kernel_distance(KernelVector::binary(a), KernelVector::binary(b), block);
}

std::vector<std::vector<std::int64_t>> py_similarity_matrix(
    const std::vector<std::vector<std::uint8_t>>& kernels) {
    CimBlock block(DeviceParams::with_levels(2), TimingParams{}, Rng(1));
    block.form_all();
    std::vector<KernelVector> ks;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        ks.push_back(KernelVector::binary(kernels[i], 0, static_cast<int>(i)));
    }
    const SimilarityMatrix sm = similarity_matrix(ks, block);
    std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(sm.n));
    for (int i = 0; i < sm.n; ++i) {
        out[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(sm.n));
        for (int j = 0; j < sm.n; ++j) {
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = sm.at(i, j);
        }
    }
    return out;
}

py::dict py_device_monte_carlo(int cells, int levels, std::uint64_t seed) {
    DeviceParams params = DeviceParams::with_levels(levels);
    Rng rng(seed);
    int ok = 0, one_cycle = 0;
    double form_sum = 0.0, form_sq = 0.0;
    for (int i = 0; i < cells; ++i) {
        RramCell cell;
        Rng sub = rng.substream(static_cast<std::uint64_t>(i));
        const double v = form(cell, params, sub);
        form_sum += v;
        form_sq += v * v;
        const ProgramResult res = program_verify(cell, i % levels, params, sub);
        if (res.ok()) {
            ++ok;
            if (res.cycles_used == 1) ++one_cycle;
        }
    }
    py::dict out;
    const double n = static_cast<double>(cells);
    out["yield"] = ok / n;
    out["single_cycle_fraction"] = one_cycle / n;
    out["forming_mean_v"] = form_sum / n;
    out["forming_std_v"] = std::sqrt(form_sq / n - (form_sum / n) * (form_sum / n));
    return out;
}

} // namespace

PYBIND11_MODULE(_cimsim, m) {
    m.doc() = "Functional simulator of a digital RRAM compute-in-memory chip";

    py::register_exception<SimError>(m, "SimError");

    py::enum_<LogicOp>(m, "LogicOp")
        .value("NAND", LogicOp::NAND)
        .value("AND", LogicOp::AND)
        .value("XOR", LogicOp::XOR)
        .value("OR", LogicOp::OR);

    m.def("compute_gate", &compute_gate, py::arg("x"), py::arg("w"), py::arg("k"),
          py::arg("op"), "OUT = X AND (W op K) through the reconfigurable unit");
    m.def("logic_op", &logic_op, py::arg("op"), py::arg("w"), py::arg("k"));

    py::class_<TimingParams>(m, "TimingParams")
        .def(py::init<>())
        .def_readwrite("cycle_ns", &TimingParams::cycle_ns)
        .def_readwrite("leak_critical_us", &TimingParams::leak_critical_us)
        .def_readwrite("leak_slope_per_us", &TimingParams::leak_slope_per_us)
        .def("ber", &TimingParams::ber, py::arg("delay_us"));

    py::class_<SlicedWeight>(m, "SlicedWeight")
        .def_static("encode", &SlicedWeight::encode, py::arg("value"))
        .def("decode", &SlicedWeight::decode)
        .def("pattern", &SlicedWeight::pattern)
        .def_readonly("sign", &SlicedWeight::sign)
        .def_property_readonly("segments", [](const SlicedWeight& w) {
            return std::vector<int>{w.segments[3], w.segments[2], w.segments[1],
                                    w.segments[0]};
        });

    m.def("cim_multiply", &py_cim_multiply, py::arg("x"), py::arg("w"),
          "bit-serial INT8 multiply on a scratch array");
    m.def("cim_dot", &py_cim_dot, py::arg("x"), py::arg("w"));
    m.def("euclid_sq", &py_euclid_sq, py::arg("x"), py::arg("y"));
    m.def("hamming", &py_hamming, py::arg("a"), py::arg("b"));
    m.def("similarity_matrix", &py_similarity_matrix, py::arg("kernels"));

    m.def("ops_conv", &ops_conv, py::arg("c_in"), py::arg("c_out"), py::arg("kh"),
          py::arg("kw"), py::arg("h_out"), py::arg("w_out"));
    m.def("ops_fc", &ops_fc, py::arg("w_h"), py::arg("w_w"));
    m.def("system_energy_per_op_pj",
          static_cast<double (*)()>(&system_energy_per_op_pj));
    m.def("table_energy_per_op_pj", static_cast<double (*)()>(&table_energy_per_op_pj));
    m.def(
        "scale_energy_pj",
        [](double e, double v, double f_hz) { return scale_energy_pj(e, v, f_hz); },
        py::arg("e_pj"), py::arg("v"), py::arg("f_hz"));
    m.def("gpu_energy_per_op_pj", [] { return gpu_energy_per_op_pj(); });

    m.def("device_monte_carlo", &py_device_monte_carlo, py::arg("cells") = 10000,
          py::arg("levels") = 4, py::arg("seed") = 1,
          "program-and-verify statistics over independent cells");
}
