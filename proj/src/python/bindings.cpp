// Python bindings for the core pipeline operations. Images cross the
// boundary as numpy uint8 arrays (H x W x C), matrices as float64 arrays via
// the Eigen caster, and reports as JSON strings the caller parses.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "gridpv/classify.hpp"
#include "gridpv/config.hpp"
#include "gridpv/dataset.hpp"
#include "gridpv/encoding.hpp"
#include "gridpv/eval.hpp"
#include "gridpv/features.hpp"
#include "gridpv/phases.hpp"
#include "gridpv/synthcity.hpp"
#include "gridpv/tiler.hpp"

namespace py = pybind11;
using namespace gridpv;

namespace {

ImageU8 image_from_array(const py::array_t<std::uint8_t, py::array::c_style>& array) {
    if (array.ndim() != 3 && array.ndim() != 2)
        throw py::value_error("expected a (H, W, C) or (H, W) uint8 array");
    ImageU8 image;
    image.height = int(array.shape(0));
    image.width = int(array.shape(1));
    image.channels = array.ndim() == 3 ? int(array.shape(2)) : 1;
    image.pixels.assign(array.data(), array.data() + array.size());
    return image;
}

py::array_t<std::uint8_t> array_from_image(const ImageU8& image) {
    py::array_t<std::uint8_t> array({image.height, image.width, image.channels});
    std::copy(image.pixels.begin(), image.pixels.end(), array.mutable_data());
    return array;
}

LocalFeatureSet set_from_matrix(const Matrix& local) {
    LocalFeatureSet set;
    set.rooftop_id = "py";
    for (Eigen::Index i = 0; i < local.rows(); ++i) {
        FeatureVector v(std::size_t(local.cols()));
        for (Eigen::Index j = 0; j < local.cols(); ++j) v[std::size_t(j)] = float(local(i, j));
        set.vectors.push_back(std::move(v));
    }
    return set;
}

Dataset2D dataset_from(const Matrix& x, const std::vector<int>& y) {
    Dataset2D data;
    data.x = x;
    data.y = y;
    for (std::size_t i = 0; i < y.size(); ++i) {
        data.ids.push_back("row" + std::to_string(i));
        data.cities.push_back("py");
    }
    data.check_consistent("python");
    return data;
}

EncodeOptions options_from(bool signed_sqrt, bool l2) {
    EncodeOptions options;
    options.signed_sqrt = signed_sqrt;
    options.l2_normalize = l2;
    return options;
}

}  // namespace

PYBIND11_MODULE(_gridpv, m) {
    m.doc() = "Rooftop photovoltaic classification pipeline (C++ core)";

    py::register_exception<gridpv::Error>(m, "GridpvError");

    // --- images and features ------------------------------------------------
    m.def(
        "resize_bilinear",
        [](const py::array_t<std::uint8_t, py::array::c_style>& image, int out_w, int out_h) {
            return array_from_image(resize_bilinear(image_from_array(image), out_w, out_h));
        },
        py::arg("image"), py::arg("out_w"), py::arg("out_h"));

    m.def(
        "extract_baseline",
        [](const py::array_t<std::uint8_t, py::array::c_style>& image) {
            FeatureVector v = extract_baseline(image_from_array(image));
            return std::vector<float>(v.begin(), v.end());
        },
        py::arg("tile"), "22-dim color/gradient/intensity descriptor of one tile");

    m.def(
        "tile_grid",
        [](const py::array_t<std::uint8_t, py::array::c_style>& image,
           const py::array_t<std::uint8_t, py::array::c_style>& mask, int g,
           double min_coverage) {
            RooftopImage roof;
            roof.rooftop_id = "py";
            roof.pixels = image_from_array(image);
            if (mask.ndim() != 2) throw py::value_error("mask must be a (H, W) uint8 array");
            roof.valid_mask.assign(mask.data(), mask.data() + mask.size());
            for (auto& b : roof.valid_mask) b = b ? 1 : 0;
            py::list out;
            for (const GridTile& t : tile(roof, g, min_coverage))
                out.append(py::make_tuple(t.row, t.col, t.coverage,
                                          array_from_image(t.pixels)));
            return out;
        },
        py::arg("image"), py::arg("mask"), py::arg("g"), py::arg("min_coverage") = 0.5,
        "Grid tiles as (row, col, coverage, pixels) tuples");

    // --- encodings -----------------------------------------------------------
    py::class_<Codebook>(m, "Codebook")
        .def_readonly("centroids", &Codebook::centroids)
        .def_readonly("seed", &Codebook::seed)
        .def_readonly("inertia", &Codebook::inertia)
        .def_readonly("inertia_history", &Codebook::inertia_history)
        .def_property_readonly("k", &Codebook::k)
        .def_property_readonly("dim", &Codebook::dim);

    py::class_<GmmModel>(m, "GmmModel")
        .def_readonly("weights", &GmmModel::weights)
        .def_readonly("means", &GmmModel::means)
        .def_readonly("variances", &GmmModel::variances)
        .def_readonly("loglik_history", &GmmModel::loglik_history);

    m.def(
        "kmeans_fit",
        [](const Matrix& vectors, int k, std::uint64_t seed, int max_iter, double tol) {
            return kmeans_fit(vectors, k, seed, max_iter, tol);
        },
        py::arg("vectors"), py::arg("k"), py::arg("seed"), py::arg("max_iter") = 100,
        py::arg("tol") = 1e-6);

    m.def(
        "gmm_fit",
        [](const Matrix& vectors, int k, std::uint64_t seed, int max_iter, double tol) {
            return gmm_fit(vectors, k, seed, max_iter, tol);
        },
        py::arg("vectors"), py::arg("k"), py::arg("seed"), py::arg("max_iter") = 100,
        py::arg("tol") = 1e-8);

    m.def(
        "vlad_encode",
        [](const Codebook& codebook, const Matrix& local, bool signed_sqrt, bool l2) {
            return vlad_encode(codebook, set_from_matrix(local), options_from(signed_sqrt, l2))
                .values;
        },
        py::arg("codebook"), py::arg("local"), py::arg("signed_sqrt") = true,
        py::arg("l2") = true);

    m.def(
        "fv_encode",
        [](const GmmModel& gmm, const Matrix& local, bool signed_sqrt, bool l2) {
            return fv_encode(gmm, set_from_matrix(local), options_from(signed_sqrt, l2)).values;
        },
        py::arg("gmm"), py::arg("local"), py::arg("signed_sqrt") = true, py::arg("l2") = true);

    m.def(
        "avg_encode",
        [](const Matrix& local) { return avg_encode(set_from_matrix(local)).values; },
        py::arg("local"));

    // --- classifiers ----------------------------------------------------------
    py::class_<TrainedModel>(m, "TrainedModel")
        .def_property_readonly("family",
                               [](const TrainedModel& model) {
                                   return std::string(family_name(model.family));
                               })
        .def_property_readonly("key",
                               [](const TrainedModel& model) { return model.combo.key(); });

    m.def(
        "lr_fit",
        [](const Matrix& x, const std::vector<int>& y, double c, const std::string& solver,
           std::uint64_t seed) {
            return lr_fit(dataset_from(x, y), c, solver_from_label(solver, 0), seed);
        },
        py::arg("x"), py::arg("y"), py::arg("c") = 1.0, py::arg("solver") = "lbfgs",
        py::arg("seed") = 0);

    m.def(
        "rf_fit",
        [](const Matrix& x, const std::vector<int>& y, int n_estimators, int max_depth,
           std::uint64_t seed) {
            return rf_fit(dataset_from(x, y), n_estimators,
                          max_depth > 0 ? std::optional<int>(max_depth) : std::nullopt, seed);
        },
        py::arg("x"), py::arg("y"), py::arg("n_estimators") = 100, py::arg("max_depth") = 0,
        py::arg("seed") = 0);

    m.def(
        "svm_fit",
        [](const Matrix& x, const std::vector<int>& y, double c, const std::string& kernel,
           std::uint64_t seed) { return svm_fit(dataset_from(x, y), c, kernel, seed); },
        py::arg("x"), py::arg("y"), py::arg("c") = 1.0, py::arg("kernel") = "linear",
        py::arg("seed") = 0);

    m.def(
        "predict",
        [](const TrainedModel& model, const Matrix& x) {
            Predictions p = predict(model, x);
            return py::make_tuple(p.labels, p.scores);
        },
        py::arg("model"), py::arg("x"), "(labels, scores) for each row");

    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &load_model, py::arg("path"));

    // --- scoring ---------------------------------------------------------------
    m.def("weighted_f1", &weighted_f1, py::arg("city_f1"), py::arg("global_f1"),
          py::arg("weight") = 0.5);
    m.def("round2", &round2, py::arg("x"));

    m.def(
        "score",
        [](const std::vector<int>& truth, const std::vector<int>& predicted,
           const std::vector<std::string>& cities, double weight) {
            return render_json(score(truth, predicted, cities, 0, weight)).dump();
        },
        py::arg("truth"), py::arg("predicted"), py::arg("cities"), py::arg("weight") = 0.5,
        "Per-city / global / weighted F1 report as a JSON string");

    // --- synthetic data ----------------------------------------------------------
    py::class_<CitySpec>(m, "CitySpec")
        .def(py::init<>())
        .def_readwrite("name", &CitySpec::name)
        .def_readwrite("n_with_pv", &CitySpec::n_with_pv)
        .def_readwrite("n_no_pv", &CitySpec::n_no_pv)
        .def_readwrite("hue_min", &CitySpec::hue_min)
        .def_readwrite("hue_max", &CitySpec::hue_max)
        .def_readwrite("texture_scale", &CitySpec::texture_scale)
        .def_readwrite("panel_count_min", &CitySpec::panel_count_min)
        .def_readwrite("panel_count_max", &CitySpec::panel_count_max)
        .def_readwrite("panel_cell", &CitySpec::panel_cell)
        .def_readwrite("noise_sigma", &CitySpec::noise_sigma)
        .def_readwrite("size_min", &CitySpec::size_min)
        .def_readwrite("size_max", &CitySpec::size_max)
        .def_readwrite("train_fraction", &CitySpec::train_fraction)
        .def_readwrite("seed", &CitySpec::seed);

    m.def(
        "render_rooftop",
        [](const CitySpec& spec, int index, bool with_pv) {
            RenderedRooftop r = render_rooftop(spec, index, with_pv);
            py::array_t<std::uint8_t> mask({r.image.height, r.image.width});
            std::copy(r.mask.begin(), r.mask.end(), mask.mutable_data());
            return py::make_tuple(array_from_image(r.image), mask);
        },
        py::arg("spec"), py::arg("index"), py::arg("with_pv"),
        "(pixels, mask) for one synthetic rooftop");

    m.def(
        "generate_city",
        [](const CitySpec& spec, const std::string& out_dir) {
            CityDataset city = generate_city(spec, out_dir);
            return py::make_tuple(city.train.size(), city.test.size());
        },
        py::arg("spec"), py::arg("out_dir"), "(train_count, test_count) after writing");

    // --- pipeline -----------------------------------------------------------------
    py::class_<Config>(m, "Config")
        .def(py::init<>())
        .def("load_file", &Config::load_file)
        .def("load_text", &Config::load_text, py::arg("text"), py::arg("origin") = "<inline>")
        .def("set", &Config::set)
        .def("has", &Config::has)
        .def("get_string", &Config::get_string)
        .def_static("help_text", &Config::help_text);

    m.def(
        "run_pipeline",
        [](const Config& config, const std::string& registry_dir) {
            PipelineConfig pc = PipelineConfig::from_config(config);
            std::vector<CityDataset> cities;
            for (const std::string& name : config.get_strings("cities"))
                cities.push_back(load_city(config.get_string("data"), name));
            PhaseRunner runner(pc);
            PipelineReport report = runner.run_pipeline(std::move(cities));
            if (!registry_dir.empty()) runner.registry().save(registry_dir);
            return report.to_json().dump();
        },
        py::arg("config"), py::arg("registry_dir") = "",
        "Multi-city three-phase run; returns the report as a JSON string");
}
