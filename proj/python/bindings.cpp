#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fednorm/experiment.hpp"

namespace py = pybind11;
using namespace fednorm;

namespace {

py::array_t<double> tensor_to_array(const Tensor& t) {
    py::array_t<double> out(t.shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

Tensor array_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "FedAvg simulator with swappable normalization layers";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::enum_<NormAlgo>(m, "NormAlgo")
        .value("BatchNorm", NormAlgo::BatchNorm)
        .value("GroupNorm", NormAlgo::GroupNorm)
        .value("InstanceNorm", NormAlgo::InstanceNorm)
        .value("LayerNorm", NormAlgo::LayerNorm)
        .value("BatchRenorm", NormAlgo::BatchRenorm);

    py::class_<NormKind>(m, "NormKind")
        .def(py::init<>())
        .def_readwrite("algo", &NormKind::algo)
        .def_readwrite("groups", &NormKind::groups)
        .def_readwrite("r_max", &NormKind::r_max)
        .def_readwrite("d_max", &NormKind::d_max)
        .def_static("batch_norm", &NormKind::batch_norm)
        .def_static("group_norm", &NormKind::group_norm, py::arg("groups"))
        .def_static("instance_norm", &NormKind::instance_norm)
        .def_static("layer_norm", &NormKind::layer_norm)
        .def_static("batch_renorm", &NormKind::batch_renorm, py::arg("r_max") = 3.0,
                    py::arg("d_max") = 5.0)
        .def("__repr__", [](const NormKind& k) {
            return std::string("NormKind(") + norm_algo_name(k.algo) + ")";
        });

    py::class_<RngStream>(m, "RngStream")
        .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
        .def("next_uniform", &RngStream::next_uniform)
        .def("next_normal", &RngStream::next_normal)
        .def("next_below", &RngStream::next_below, py::arg("n"));

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_property(
            "images", [](const Dataset& d) { return tensor_to_array(d.images); },
            [](Dataset& d, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
                d.images = array_to_tensor(a);
            })
        .def_readwrite("labels", &Dataset::labels)
        .def_readonly("channel_mean", &Dataset::channel_mean)
        .def_readonly("channel_std", &Dataset::channel_std)
        .def("__len__", &Dataset::size)
        .def("num_classes", &Dataset::num_classes)
        .def("subset", &Dataset::subset, py::arg("indices"))
        .def("take", &Dataset::take, py::arg("n"));

    m.def("load_mnist", &load_mnist, py::arg("dir"));
    m.def("load_cifar10", &load_cifar10, py::arg("dir"));
    m.def("normalize_dataset", &normalize_dataset, py::arg("dataset"),
          py::arg("mean") = std::vector<double>{}, py::arg("std") = std::vector<double>{});

    py::class_<SyntheticSpec>(m, "SyntheticSpec")
        .def(py::init<>())
        .def_readwrite("classes", &SyntheticSpec::classes)
        .def_readwrite("samples_per_class", &SyntheticSpec::samples_per_class)
        .def_readwrite("channels", &SyntheticSpec::channels)
        .def_readwrite("height", &SyntheticSpec::height)
        .def_readwrite("width", &SyntheticSpec::width)
        .def_readwrite("separation", &SyntheticSpec::separation)
        .def_readwrite("noise", &SyntheticSpec::noise)
        .def_readwrite("seed", &SyntheticSpec::seed);

    m.def("synthetic_dataset", &synthetic_dataset, py::arg("spec"));
    m.def("synthetic_train_test", &synthetic_train_test, py::arg("spec"), py::arg("test_per_class"));

    py::class_<ClientShard>(m, "ClientShard")
        .def_readonly("client_id", &ClientShard::client_id)
        .def_readonly("indices", &ClientShard::indices)
        .def_readonly("label_histogram", &ClientShard::label_histogram);

    m.def("partition_uniform", &partition_uniform, py::arg("labels"), py::arg("num_clients"),
          py::arg("rng"));
    m.def("partition_labels_skew", &partition_labels_skew, py::arg("labels"), py::arg("num_clients"),
          py::arg("classes_per_client"), py::arg("rng"));
    m.def(
        "partition_covariate_shift",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& images,
           const std::vector<int>& labels, std::size_t num_clients, RngStream& rng) {
            return partition_covariate_shift(array_to_tensor(images), labels, num_clients, rng);
        },
        py::arg("images"), py::arg("labels"), py::arg("num_clients"), py::arg("rng"));

    py::class_<ConvBlockConfig>(m, "ConvBlockConfig")
        .def(py::init<>())
        .def_readwrite("filters", &ConvBlockConfig::filters)
        .def_readwrite("kernel", &ConvBlockConfig::kernel)
        .def_readwrite("stride", &ConvBlockConfig::stride);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("in_channels", &ModelConfig::in_channels)
        .def_readwrite("height", &ModelConfig::height)
        .def_readwrite("width", &ModelConfig::width)
        .def_readwrite("blocks", &ModelConfig::blocks)
        .def_readwrite("max_pools", &ModelConfig::max_pools)
        .def_readwrite("norm", &ModelConfig::norm)
        .def_readwrite("classifier_width", &ModelConfig::classifier_width)
        .def_readwrite("num_classes", &ModelConfig::num_classes)
        .def_readwrite("momentum", &ModelConfig::momentum)
        .def_readwrite("epsilon", &ModelConfig::epsilon)
        .def_readwrite("seed", &ModelConfig::seed);

    py::enum_<Weighting>(m, "Weighting")
        .value("Plain", Weighting::Plain)
        .value("SampleWeighted", Weighting::SampleWeighted);

    py::class_<FedConfig>(m, "FedConfig")
        .def(py::init<>())
        .def_readwrite("num_clients", &FedConfig::num_clients)
        .def_readwrite("rounds", &FedConfig::rounds)
        .def_readwrite("epochs_per_round", &FedConfig::epochs_per_round)
        .def_readwrite("batch_size", &FedConfig::batch_size)
        .def_readwrite("learning_rate", &FedConfig::learning_rate)
        .def_readwrite("weighting", &FedConfig::weighting)
        .def_readwrite("seed", &FedConfig::seed)
        .def_readwrite("parallelism", &FedConfig::parallelism);

    py::class_<RoundReport>(m, "RoundReport")
        .def_readonly("round", &RoundReport::round)
        .def_readonly("client_losses", &RoundReport::client_losses)
        .def_readonly("test_accuracy", &RoundReport::test_accuracy)
        .def_readonly("wall_seconds", &RoundReport::wall_seconds);

    py::class_<FederationResult>(m, "FederationResult")
        .def_readonly("best_accuracy", &FederationResult::best_accuracy)
        .def_readonly("best_round", &FederationResult::best_round)
        .def_readonly("reports", &FederationResult::reports);

    m.def("run_federation", &run_federation, py::arg("fed"), py::arg("model_config"),
          py::arg("train"), py::arg("shards"), py::arg("test"), py::arg("augment") = false,
          py::call_guard<py::gil_scoped_release>());

    py::enum_<DatasetKind>(m, "DatasetKind")
        .value("Synthetic", DatasetKind::Synthetic)
        .value("Mnist", DatasetKind::Mnist)
        .value("Cifar10", DatasetKind::Cifar10);

    py::enum_<PartitionKind>(m, "PartitionKind")
        .value("Uniform", PartitionKind::Uniform)
        .value("LabelsSkew", PartitionKind::LabelsSkew)
        .value("CovariateShift", PartitionKind::CovariateShift);

    py::class_<ExperimentSpec>(m, "ExperimentSpec")
        .def(py::init<>())
        .def_readwrite("name", &ExperimentSpec::name)
        .def_readwrite("dataset", &ExperimentSpec::dataset)
        .def_readwrite("data_dir", &ExperimentSpec::data_dir)
        .def_readwrite("partition", &ExperimentSpec::partition)
        .def_readwrite("classes_per_client", &ExperimentSpec::classes_per_client)
        .def_readwrite("norm", &ExperimentSpec::norm)
        .def_readwrite("fed", &ExperimentSpec::fed)
        .def_readwrite("repetitions", &ExperimentSpec::repetitions)
        .def_readwrite("train_subset", &ExperimentSpec::train_subset)
        .def_readwrite("test_subset", &ExperimentSpec::test_subset)
        .def_readwrite("augment", &ExperimentSpec::augment)
        .def_readwrite("blocks", &ExperimentSpec::blocks)
        .def_readwrite("synthetic", &ExperimentSpec::synthetic)
        .def_readwrite("synthetic_test_per_class", &ExperimentSpec::synthetic_test_per_class);

    py::class_<ExperimentSummary>(m, "ExperimentSummary")
        .def_readonly("best_accuracies", &ExperimentSummary::best_accuracies)
        .def_readonly("best_acc_mean", &ExperimentSummary::best_acc_mean)
        .def_readonly("best_acc_sd", &ExperimentSummary::best_acc_sd)
        .def_readonly("wall_seconds", &ExperimentSummary::wall_seconds);

    py::class_<SweepSpec>(m, "SweepSpec");
    py::class_<ParsedConfig>(m, "ParsedConfig")
        .def_readonly("base", &ParsedConfig::base)
        .def_property_readonly("has_sweep",
                               [](const ParsedConfig& c) { return c.sweep.has_value(); });

    m.def("parse_config", &parse_config, py::arg("text"));
    m.def("parse_config_file", &parse_config_file, py::arg("path"));
    m.def("run_experiment", &run_experiment, py::arg("spec"), py::arg("out_dir"),
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "run_sweep",
        [](const ParsedConfig& cfg, const std::string& out_dir) {
            if (!cfg.sweep) throw ValueError("config has no [sweep] section");
            return run_sweep(*cfg.sweep, out_dir);
        },
        py::arg("config"), py::arg("out_dir"), py::call_guard<py::gil_scoped_release>());
}
