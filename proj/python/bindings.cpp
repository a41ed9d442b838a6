#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "fast/attribution.hpp"
#include "fast/metrics.hpp"
#include "fast/model.hpp"
#include "fast/optim.hpp"
#include "fast/preprocess.hpp"
#include "fast/synthdata.hpp"

namespace py = pybind11;
using namespace fast;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

pre::EEGTrial trial_from_array(const FloatArray& arr, double rate, int label) {
    if (arr.ndim() != 2) throw ShapeError("trial array must be 2-D (channels x samples)");
    pre::EEGTrial t;
    t.data = TensorF({static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1))});
    std::copy(arr.data(), arr.data() + arr.size(), t.data.v.begin());
    t.sample_rate = rate;
    t.label = label;
    t.cue_onset = 0;
    return t;
}

// A model bound to a layout and partition, ready for per-trial calls.
struct PyModel {
    model::ParamStore store;
    model::FastConfig cfg;
    montage::ChannelLayout layout;
    montage::RegionPartition partition;

    static PyModel desk(const std::string& partition_id, std::uint64_t seed) {
        PyModel m{{}, {}, montage::standard62(), {}};
        m.partition =
            montage::build_partition(m.layout, montage::parse_partition_config(partition_id));
        m.cfg = model::desk_config();
        m.cfg.n_regions = m.partition.region_count();
        m.cfg.region_channels = m.partition.channel_counts();
        m.cfg.validate();
        m.store = model::init_params(m.cfg, seed);
        return m;
    }

    static PyModel from_checkpoint(const std::string& path, const std::string& partition_id) {
        PyModel m{{}, {}, montage::standard62(), {}};
        auto ck = model::load_checkpoint(path);
        m.partition =
            montage::build_partition(m.layout, montage::parse_partition_config(partition_id));
        if (m.partition.channel_counts() != ck.cfg.region_channels)
            throw ConfigError("checkpoint region channels do not match the partition");
        m.cfg = std::move(ck.cfg);
        m.store = std::move(ck.store);
        return m;
    }

    py::array_t<float> logits(const FloatArray& arr, double rate, double window_s, double stride_s,
                              bool no_te) {
        pre::EEGTrial t = trial_from_array(arr, rate, 0);
        auto out = model::eval_logits(store, cfg, t, partition, layout,
                                      pre::SegmentPlan{window_s, stride_s}, no_te);
        return py::array_t<float>(static_cast<py::ssize_t>(out.size()), out.data());
    }

    py::array_t<double> integrated_gradients(const FloatArray& arr, double rate, int target,
                                             int steps, double window_s, double stride_s) {
        pre::EEGTrial t = trial_from_array(arr, rate, 0);
        auto map = attrib::integrated_gradients_class(store, cfg, t, target, steps, partition,
                                                      layout, pre::SegmentPlan{window_s, stride_s});
        py::array_t<double> out({map.values.extent(0), map.values.extent(1)});
        std::copy(map.values.v.begin(), map.values.v.end(), out.mutable_data());
        return out;
    }

    void save(const std::string& path) const { model::save_checkpoint(store, cfg, path); }
    std::int64_t param_count() const { return store.total_values(); }
    std::string config_json() const { return model::config_to_json(cfg); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "functional-area spatio-temporal EEG decoder (native core)";

    py::register_exception<fast::Error>(m, "FastError");

    m.def(
        "gelu",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            py::array_t<double> out(std::vector<py::ssize_t>(x.shape(), x.shape() + x.ndim()));
            const double* in = x.data();
            double* o = out.mutable_data();
            for (py::ssize_t i = 0; i < x.size(); ++i)
                o[i] = in[i] * 0.5 * (1.0 + std::erf(in[i] * M_SQRT1_2));
            return out;
        },
        "elementwise x * Phi(x) with the exact Gaussian CDF", py::arg("x"));

    m.def(
        "chance_interval",
        [](double p, std::int64_t n, double z) { return metrics::chance_interval(p, n, z); },
        py::arg("p"), py::arg("n"), py::arg("z") = 1.96);

    m.def(
        "schedule_lr",
        [](double base_lr, int warmup, int total, double floor_fraction, int epoch) {
            return num::schedule_lr(num::Schedule{base_lr, warmup, total, floor_fraction}, epoch);
        },
        py::arg("base_lr"), py::arg("warmup_epochs"), py::arg("total_epochs"),
        py::arg("floor_fraction"), py::arg("epoch"));

    m.def(
        "design_fir",
        [](const std::string& kind, double lo, double hi, int taps, double fs) {
            pre::FilterSpec spec;
            spec.kind = kind == "bandstop" ? pre::FilterKind::bandstop : pre::FilterKind::bandpass;
            spec.lo_hz = lo;
            spec.hi_hz = hi;
            spec.taps = taps;
            return pre::design_fir(spec, fs);
        },
        py::arg("kind"), py::arg("lo_hz"), py::arg("hi_hz"), py::arg("taps"), py::arg("fs"));

    m.def(
        "accuracy",
        [](const std::vector<int>& t, const std::vector<int>& p, int c) {
            return metrics::accuracy(metrics::confusion(t, p, c));
        },
        py::arg("truth"), py::arg("predicted"), py::arg("classes"));
    m.def(
        "macro_f1",
        [](const std::vector<int>& t, const std::vector<int>& p, int c) {
            return metrics::macro_f1(metrics::confusion(t, p, c));
        },
        py::arg("truth"), py::arg("predicted"), py::arg("classes"));
    m.def(
        "cohen_kappa",
        [](const std::vector<int>& t, const std::vector<int>& p, int c) {
            return metrics::cohen_kappa(metrics::confusion(t, p, c));
        },
        py::arg("truth"), py::arg("predicted"), py::arg("classes"));
    m.def(
        "auc_ovr",
        [](const std::vector<int>& t, const std::vector<std::vector<double>>& s, int c) {
            return metrics::auc_ovr(t, s, c).value;
        },
        py::arg("truth"), py::arg("scores"), py::arg("classes"));
    m.def(
        "wilcoxon_signed_rank",
        [](const std::vector<double>& d) {
            auto r = metrics::wilcoxon_signed_rank(d);
            return py::make_tuple(r.statistic, r.p_value, r.exact);
        },
        py::arg("differences"));

    m.def(
        "generate_synthetic",
        [](const std::string& spec_json, const std::string& out_dir) {
            auto manifest = synth::generate(synth::spec_from_json(spec_json), out_dir);
            return manifest.trials.size();
        },
        py::arg("spec_json"), py::arg("out_dir"));
    m.def("default_synth_spec", [] { return synth::spec_to_json(synth::default_spec()); });
    m.def(
        "separability_probe",
        [](const std::string& dir) {
            auto manifest = synth::read_manifest(dir);
            auto trials = synth::read_all(dir, manifest);
            return synth::separability_probe(trials, manifest.layout);
        },
        py::arg("container_dir"));

    py::class_<PyModel>(m, "Model")
        .def_static("desk", &PyModel::desk, py::arg("partition") = "M8", py::arg("seed") = 1)
        .def_static("from_checkpoint", &PyModel::from_checkpoint, py::arg("path"),
                    py::arg("partition") = "M8")
        .def("logits", &PyModel::logits, py::arg("trial"), py::arg("rate") = 200.0,
             py::arg("window_s") = 1.0, py::arg("stride_s") = 0.5, py::arg("no_te") = false)
        .def("integrated_gradients", &PyModel::integrated_gradients, py::arg("trial"),
             py::arg("rate") = 200.0, py::arg("target") = 0, py::arg("steps") = 64,
             py::arg("window_s") = 1.0, py::arg("stride_s") = 0.5)
        .def("save", &PyModel::save, py::arg("path"))
        .def_property_readonly("param_count", &PyModel::param_count)
        .def_property_readonly("config_json", &PyModel::config_json);
}
