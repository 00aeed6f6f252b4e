#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "har/checkpoint.hpp"
#include "har/datasets.hpp"
#include "har/error.hpp"
#include "har/eval.hpp"
#include "har/layers.hpp"
#include "har/model.hpp"
#include "har/report.hpp"
#include "har/run_config.hpp"
#include "har/transfer.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

har::Tensor to_tensor(const Array& a) {
    har::Shape shape(a.shape(), a.shape() + a.ndim());
    std::vector<double> values(a.data(), a.data() + a.size());
    return har::Tensor(std::move(shape), std::move(values));
}

Array to_array(const har::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

json parse(const std::string& text) {
    try {
        return text.empty() ? json::object() : json::parse(text);
    } catch (const json::exception& e) {
        throw har::ConfigError(std::string("invalid JSON: ") + e.what());
    }
}

har::SynthConfig synth_config(const std::string& text) {
    har::SynthConfig c;
    har::merge_synth_config(parse(text), c);
    return c;
}

har::NetworkConfig network_config(const std::string& text) {
    har::NetworkConfig c;
    har::merge_network_config(parse(text), c);
    return c;
}

py::dict row_dict(const har::FoldResult& r) {
    py::dict d;
    d["fold"] = r.fold;
    d["subject"] = r.subject;
    d["variant"] = r.variant;
    d["seed"] = r.seed;
    d["accuracy"] = r.accuracy;
    d["macro_f1"] = r.macro_f1;
    d["confusion"] = r.confusion;
    d["n_train"] = r.n_train;
    d["n_transfer"] = r.n_transfer;
    d["n_test"] = r.n_test;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Discretize-embed-convolve activity recognition with classifier-only transfer";

    auto base = py::register_exception<har::Error>(m, "HarError", PyExc_RuntimeError);
    py::register_exception<har::DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<har::IndexError>(m, "IndexError", base.ptr());
    py::register_exception<har::ParameterError>(m, "ParameterError", base.ptr());
    py::register_exception<har::ContractError>(m, "ContractError", base.ptr());
    py::register_exception<har::DataError>(m, "DataError", base.ptr());
    py::register_exception<har::FormatError>(m, "FormatError", base.ptr());
    py::register_exception<har::ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<har::ProtocolError>(m, "ProtocolError", base.ptr());
    py::register_exception<har::IoError>(m, "IoError", base.ptr());

    // --- layer operations ---
    m.def("conv1d", [](const Array& x, const Array& k, const Array& b) {
        return to_array(har::conv1d_forward(to_tensor(x), to_tensor(k), to_tensor(b)));
    }, py::arg("input"), py::arg("kernels"), py::arg("bias"));
    m.def("conv1d_backward", [](const Array& x, const Array& k, const Array& up) {
        auto g = har::conv1d_backward(to_tensor(x), to_tensor(k), to_tensor(up));
        return py::make_tuple(to_array(g.input), to_array(g.kernels), to_array(g.bias));
    }, py::arg("input"), py::arg("kernels"), py::arg("upstream"),
          "Returns (input_grad, kernel_grad, bias_grad).");
    m.def("relu", [](const Array& x) { return to_array(har::relu_forward(to_tensor(x))); });
    m.def("maxpool1d", [](const Array& x, std::size_t pool) {
        return to_array(har::maxpool1d_forward(to_tensor(x), pool));
    }, py::arg("x"), py::arg("pool"));
    m.def("softmax", [](const std::vector<double>& logits) { return har::softmax(logits); });
    m.def("softmax_cross_entropy", [](const Array& logits, int label) {
        auto r = har::softmax_cross_entropy(to_tensor(logits), label);
        return py::make_tuple(r.loss, to_array(r.logit_grad));
    }, py::arg("logits"), py::arg("label"), "Returns (loss, d loss / d logits).");
    m.def("smooth", [](const std::vector<double>& x, std::size_t width) { return har::smooth(x, width); },
          py::arg("channel"), py::arg("width") = 3);
    m.def("segment_count", &har::segment_count, py::arg("n"), py::arg("window"), py::arg("stride"));
    m.def("discretize_value", &har::discretize_value, py::arg("v"), py::arg("lo"), py::arg("hi"), py::arg("bins"));

    // --- data ---
    py::class_<har::SegmentTensor>(m, "Segment")
        .def(py::init([](const Array& channels, int label, std::string subject, std::uint64_t uid) {
                 har::SegmentTensor s;
                 s.channels = to_tensor(channels);
                 if (s.channels.rank() != 2) throw har::DimensionError("segment channels must be 2-D [C x w]");
                 s.label = label;
                 s.subject_id = std::move(subject);
                 s.uid = uid;
                 return s;
             }),
             py::arg("channels"), py::arg("label"), py::arg("subject") = "", py::arg("uid") = 0)
        .def_property_readonly("channels", [](const har::SegmentTensor& s) { return to_array(s.channels); })
        .def_readonly("label", &har::SegmentTensor::label)
        .def_readonly("subject", &har::SegmentTensor::subject_id)
        .def_readonly("origin_index", &har::SegmentTensor::origin_index)
        .def_readonly("uid", &har::SegmentTensor::uid)
        .def("__repr__", [](const har::SegmentTensor& s) {
            return "<Segment subject=" + s.subject_id + " label=" + std::to_string(s.label) +
                   " uid=" + std::to_string(s.uid) + ">";
        });

    py::class_<har::Dataset>(m, "Dataset")
        .def_readonly("name", &har::Dataset::name)
        .def_readonly("subjects", &har::Dataset::subjects)
        .def_readonly("segments", &har::Dataset::segments)
        .def_readonly("sample_rate_hz", &har::Dataset::sample_rate_hz)
        .def_property_readonly("label_names", &har::Dataset::label_names)
        .def_property_readonly("classes", &har::Dataset::classes)
        .def_property_readonly("channels", &har::Dataset::channels)
        .def_property_readonly("window", &har::Dataset::window)
        .def("segments_of", &har::Dataset::segments_of, py::arg("subject"))
        .def("__len__", [](const har::Dataset& d) { return d.segments.size(); });

    m.def("_synth_generate", [](const std::string& config) { return har::synth_generate(synth_config(config)); });
    m.def("_synth_config", [](const std::string& config) { return har::to_json(synth_config(config)).dump(); });
    m.def("load_csv_dataset", &har::load_csv_dataset, py::arg("directory"));
    m.def("write_csv_dataset", [](const har::Dataset& d, const std::filesystem::path& dir) {
        har::write_csv_dataset(d, dir, json::object());
    }, py::arg("dataset"), py::arg("directory"));
    m.def("load_wisdm", [](const std::filesystem::path& path, std::size_t window, std::size_t stride) {
        har::WisdmOptions o;
        o.window = window;
        o.stride = stride;
        return har::load_wisdm(path, o);
    }, py::arg("path"), py::arg("window") = 200, py::arg("stride") = 100);
    m.def("load_sda", [](const std::filesystem::path& root) { return har::load_sda(root); }, py::arg("root"));

    // --- model ---
    py::class_<har::TrainedModel>(m, "Model")
        .def_property_readonly("config", [](const har::TrainedModel& mo) { return har::to_json(mo.config).dump(); })
        .def_property_readonly("label_names", [](const har::TrainedModel& mo) {
            std::vector<std::string> names;
            for (const auto& l : mo.labels) names.push_back(l.name);
            return names;
        })
        .def_property_readonly("parameter_names", [](const har::TrainedModel& mo) {
            std::vector<std::string> names;
            for (const auto& p : mo.parameters) names.push_back(p.name);
            return names;
        })
        .def("parameter", [](const har::TrainedModel& mo, const std::string& name) {
            return to_array(mo.param(name).tensor);
        }, py::arg("name"))
        .def("is_frozen", [](const har::TrainedModel& mo, const std::string& name) { return mo.param(name).frozen; },
             py::arg("name"))
        .def("forward", [](const har::TrainedModel& mo, const har::SegmentTensor& s) {
            return to_array(har::forward(mo, s));
        }, py::arg("segment"), "Eval-mode class scores.")
        .def("predict", [](const har::TrainedModel& mo, const har::SegmentTensor& s) { return har::predict(mo, s); },
             py::arg("segment"))
        .def("train", [](har::TrainedModel& mo, const std::vector<har::SegmentTensor>& segs, std::optional<int> epochs) {
            auto opts = har::train_options(mo.config);
            if (epochs) opts.epochs = *epochs;
            har::TrainHistory h;
            {
                py::gil_scoped_release release;
                h = har::train(mo, segs, opts);
            }
            return py::make_tuple(h.initial_loss, h.epoch_loss);
        }, py::arg("segments"), py::arg("epochs") = py::none(),
             "Trains in place; returns (initial_loss, per-epoch losses).")
        .def("freeze_all_but_classifier", [](har::TrainedModel& mo) { har::freeze_all_but_classifier(mo); })
        .def("save", [](const har::TrainedModel& mo, const std::filesystem::path& p) { har::save_model(mo, p); })
        .def("to_bytes", [](const har::TrainedModel& mo) {
            const auto b = har::serialize_model(mo);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def("copy", [](const har::TrainedModel& mo) { return mo; });

    m.def("_build_network", [](const std::string& config, const std::vector<std::string>& labels) {
        auto c = network_config(config);
        har::Rng rng(c.seed);
        return har::build_network(c, rng, labels);
    });
    m.def("_network_config", [](const std::string& config) { return har::to_json(network_config(config)).dump(); });
    m.def("internal_lengths", [](const std::string& config) { return har::internal_lengths(network_config(config)); },
          py::arg("config") = "");
    m.def("load_model", [](const std::filesystem::path& p) { return har::load_model(p); }, py::arg("path"));
    m.def("model_from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return har::deserialize_model(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    });

    // --- transfer ---
    m.def("sample_transfer_instances", [](const std::vector<har::SegmentTensor>& target, int classes, int k,
                                          std::uint64_t seed) {
        auto split = har::sample_transfer_instances(target, classes, k, seed);
        return py::make_tuple(split.transfer, split.holdout);
    }, py::arg("target"), py::arg("classes"), py::arg("k") = 3, py::arg("seed") = 0,
          "Returns (transfer, holdout).");
    m.def("fine_tune", [](const har::TrainedModel& source, const std::vector<har::SegmentTensor>& transfer,
                          int epochs, double learning_rate, std::uint64_t seed) {
        har::TransferSplit split;
        split.transfer = transfer;
        har::TransferSpec spec;
        spec.epochs = epochs;
        spec.learning_rate = learning_rate;
        spec.seed = seed;
        py::gil_scoped_release release;
        return har::fine_tune(source, split, spec);
    }, py::arg("source"), py::arg("transfer"), py::arg("epochs") = 30, py::arg("learning_rate") = 1e-3,
          py::arg("seed") = 7);

    // --- evaluation ---
    py::class_<har::EvalReport>(m, "Report")
        .def_readonly("dataset", &har::EvalReport::dataset)
        .def_readonly("config_digest", &har::EvalReport::config_digest)
        .def_property_readonly("rows", [](const har::EvalReport& r) {
            py::list rows;
            for (const auto& row : r.rows) rows.append(row_dict(row));
            return rows;
        })
        .def("aggregates", [](const har::EvalReport& r) {
            py::dict out;
            for (const auto& s : r.aggregates()) {
                py::dict d;
                d["rows"] = s.rows;
                d["mean_accuracy"] = s.mean_accuracy;
                d["std_accuracy"] = s.std_accuracy;
                d["mean_macro_f1"] = s.mean_macro_f1;
                d["std_macro_f1"] = s.std_macro_f1;
                out[py::str(s.variant)] = d;
            }
            return out;
        })
        .def("csv", [](const har::EvalReport& r) { return har::report_csv(r); })
        .def("markdown", [](const har::EvalReport& r) { return har::report_markdown(r); });

    m.def("_run_experiment", [](const har::Dataset& d, const std::string& config, unsigned parallel) {
        auto effective = parse(config);
        auto rc = har::run_config_from_json(effective);
        rc.network.channels = static_cast<int>(d.channels());
        rc.network.window = static_cast<int>(d.window());
        rc.network.classes = d.classes();
        har::ExperimentOptions opt;
        opt.network = rc.network;
        opt.transfer = rc.transfer;
        opt.variants = rc.variants;
        opt.seeds.clear();
        for (int s = 0; s < rc.seeds; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
        opt.lr_epochs = rc.lr_epochs;
        opt.lr_learning_rate = rc.lr_learning_rate;
        opt.parallel = parallel;
        opt.skip_deficient_subjects = rc.skip_deficient_subjects;
        opt.config_digest = har::config_digest(har::to_json(rc));
        py::gil_scoped_release release;
        return har::run_experiment(d, opt);
    });
    m.def("parse_report_csv", [](const std::string& text) { return har::parse_report_csv(text); });
}
