#include "neurodec/serialize.hpp"

#include <fstream>
#include <utility>

#include "neurodec/errors.hpp"

namespace neurodec {

namespace {

constexpr int kFormatVersion = 1;

[[noreturn]] void missing(const char* key) {
    throw SchemaError(std::string("missing or malformed field '") + key + "'");
}

double to_finite_double(const Json& j, const char* key) {
    if (!j.is_number()) missing(key);
    return j.get<double>();
}

}  // namespace

const Json& require_field(const Json& object, const char* key) {
    if (!object.is_object() || !object.contains(key)) missing(key);
    return object.at(key);
}

double require_double(const Json& object, const char* key) {
    return to_finite_double(require_field(object, key), key);
}

int require_int(const Json& object, const char* key) {
    const Json& j = require_field(object, key);
    if (!j.is_number_integer()) missing(key);
    return j.get<int>();
}

bool require_bool(const Json& object, const char* key) {
    const Json& j = require_field(object, key);
    if (!j.is_boolean()) missing(key);
    return j.get<bool>();
}

std::string require_string(const Json& object, const char* key) {
    const Json& j = require_field(object, key);
    if (!j.is_string()) missing(key);
    return j.get<std::string>();
}

Json json_matrix(const Matrix& m) {
    Json data = Json::array();
    for (Index i = 0; i < m.rows(); ++i)
        for (Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix parse_matrix(const Json& j) {
    const int rows = require_int(j, "rows");
    const int cols = require_int(j, "cols");
    const Json& data = require_field(j, "data");
    if (rows < 0 || cols < 0 || !data.is_array() ||
        data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw SchemaError("matrix payload does not match its declared shape");
    Matrix m(rows, cols);
    std::size_t flat = 0;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index k = 0; k < m.cols(); ++k) m(i, k) = to_finite_double(data[flat++], "data");
    return m;
}

Json json_vector(const Vector& v) {
    Json data = Json::array();
    for (Index i = 0; i < v.size(); ++i) data.push_back(v[i]);
    return data;
}

Vector parse_vector(const Json& j) {
    if (!j.is_array()) throw SchemaError("expected an array of numbers");
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v[i] = to_finite_double(j[static_cast<std::size_t>(i)], "vector");
    return v;
}

Json json_int_vector(const IntVector& v) {
    Json data = Json::array();
    for (Index i = 0; i < v.size(); ++i) data.push_back(v[i]);
    return data;
}

IntVector parse_int_vector(const Json& j) {
    if (!j.is_array()) throw SchemaError("expected an array of integers");
    IntVector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) {
        const Json& e = j[static_cast<std::size_t>(i)];
        if (!e.is_number_integer()) throw SchemaError("expected an array of integers");
        v[i] = e.get<int>();
    }
    return v;
}

std::string name_of(DistanceMetric metric) {
    switch (metric) {
        case DistanceMetric::l1: return "l1";
        case DistanceMetric::l2: return "l2";
        case DistanceMetric::cosine: return "cosine";
    }
    return "l2";
}

std::string name_of(Calibration calibration) {
    return calibration == Calibration::platt ? "platt" : "softmax";
}

std::string name_of(TreeKind kind) { return kind == TreeKind::oblique ? "oblique" : "axis"; }

std::string name_of(QuantizerKind kind) {
    return kind == QuantizerKind::quantile ? "quantile" : "uniform";
}

std::string name_of(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::logistic: return "logistic";
        case ClassifierKind::svm_platt: return "svm_platt";
        case ClassifierKind::centroid: return "centroid";
        case ClassifierKind::kmeans: return "kmeans";
        case ClassifierKind::window: return "window";
        case ClassifierKind::tree_axis: return "tree_axis";
        case ClassifierKind::tree_oblique: return "tree_oblique";
    }
    return "logistic";
}

std::string name_of(FeatureSource source) {
    switch (source) {
        case FeatureSource::spike_count: return "spike_count";
        case FeatureSource::threshold_crossing: return "threshold_crossing";
        case FeatureSource::band_power: return "band_power";
    }
    return "spike_count";
}

DistanceMetric metric_from_name(const std::string& name) {
    if (name == "l1") return DistanceMetric::l1;
    if (name == "l2") return DistanceMetric::l2;
    if (name == "cosine") return DistanceMetric::cosine;
    throw SchemaError("unknown distance metric '" + name + "'");
}

Calibration calibration_from_name(const std::string& name) {
    if (name == "softmax") return Calibration::softmax;
    if (name == "platt") return Calibration::platt;
    throw SchemaError("unknown calibration '" + name + "'");
}

TreeKind tree_kind_from_name(const std::string& name) {
    if (name == "axis") return TreeKind::axis;
    if (name == "oblique") return TreeKind::oblique;
    throw SchemaError("unknown tree kind '" + name + "'");
}

QuantizerKind quantizer_kind_from_name(const std::string& name) {
    if (name == "uniform") return QuantizerKind::uniform;
    if (name == "quantile") return QuantizerKind::quantile;
    throw SchemaError("unknown quantizer kind '" + name + "'");
}

ClassifierKind classifier_kind_from_name(const std::string& name) {
    if (name == "logistic") return ClassifierKind::logistic;
    if (name == "svm_platt") return ClassifierKind::svm_platt;
    if (name == "centroid") return ClassifierKind::centroid;
    if (name == "kmeans") return ClassifierKind::kmeans;
    if (name == "window") return ClassifierKind::window;
    if (name == "tree_axis") return ClassifierKind::tree_axis;
    if (name == "tree_oblique") return ClassifierKind::tree_oblique;
    throw SchemaError("unknown classifier kind '" + name + "'");
}

FeatureSource feature_source_from_name(const std::string& name) {
    if (name == "spike_count") return FeatureSource::spike_count;
    if (name == "threshold_crossing") return FeatureSource::threshold_crossing;
    if (name == "band_power") return FeatureSource::band_power;
    throw SchemaError("unknown feature source '" + name + "'");
}

namespace {

Json linear_to_json(const LinearProbModel& model) {
    return Json{{"kind", "linear"},
                {"weights", json_matrix(model.weights)},
                {"biases", json_vector(model.biases)},
                {"c", model.c_regularization},
                {"calibration", name_of(model.calibration)},
                {"platt_slope", json_vector(model.platt_slope)},
                {"platt_offset", json_vector(model.platt_offset)}};
}

std::unique_ptr<LinearProbModel> linear_from_json(const Json& j) {
    auto model = std::make_unique<LinearProbModel>();
    model->weights = parse_matrix(require_field(j, "weights"));
    model->biases = parse_vector(require_field(j, "biases"));
    model->c_regularization = require_double(j, "c");
    model->calibration = calibration_from_name(require_string(j, "calibration"));
    model->platt_slope = parse_vector(require_field(j, "platt_slope"));
    model->platt_offset = parse_vector(require_field(j, "platt_offset"));
    return model;
}

Json centroid_to_json(const CentroidModel& model) {
    return Json{{"kind", "centroid"},
                {"centroids", json_matrix(model.centroids)},
                {"metric", name_of(model.metric)},
                {"temperature", model.temperature}};
}

std::unique_ptr<CentroidModel> centroid_from_json(const Json& j) {
    auto model = std::make_unique<CentroidModel>();
    model->centroids = parse_matrix(require_field(j, "centroids"));
    model->metric = metric_from_name(require_string(j, "metric"));
    model->temperature = require_double(j, "temperature");
    return model;
}

Json window_to_json(const WindowModel& model) {
    return Json{{"kind", "window"},
                {"low", json_matrix(model.low)},
                {"high", json_matrix(model.high)},
                {"fallback", centroid_to_json(model.fallback)}};
}

std::unique_ptr<WindowModel> window_from_json(const Json& j) {
    auto model = std::make_unique<WindowModel>();
    model->low = parse_matrix(require_field(j, "low"));
    model->high = parse_matrix(require_field(j, "high"));
    model->fallback = *centroid_from_json(require_field(j, "fallback"));
    return model;
}

Json tree_to_json(const TreeModel& model) {
    Json nodes = Json::array();
    for (const TreeModel::Node& node : model.nodes) {
        Json entry{{"leaf", node.leaf}, {"probs", json_vector(node.probs)}};
        if (!node.leaf) {
            entry["threshold"] = node.threshold;
            entry["left"] = node.left;
            entry["right"] = node.right;
            if (node.weights.size() > 0) {
                entry["weights"] = json_vector(node.weights);
            } else {
                entry["feature"] = node.feature;
            }
        }
        nodes.push_back(std::move(entry));
    }
    return Json{{"kind", "tree"},
                {"tree_kind", name_of(model.tree_kind)},
                {"max_depth", model.max_depth},
                {"min_leaf", model.min_leaf},
                {"classes", model.classes},
                {"features", model.features},
                {"nodes", std::move(nodes)}};
}

std::unique_ptr<TreeModel> tree_from_json(const Json& j) {
    auto model = std::make_unique<TreeModel>();
    model->tree_kind = tree_kind_from_name(require_string(j, "tree_kind"));
    model->max_depth = require_int(j, "max_depth");
    model->min_leaf = require_int(j, "min_leaf");
    model->classes = require_int(j, "classes");
    model->features = require_int(j, "features");
    const Json& nodes = require_field(j, "nodes");
    if (!nodes.is_array() || nodes.empty()) throw SchemaError("tree model has no nodes");
    for (const Json& entry : nodes) {
        TreeModel::Node node;
        node.leaf = require_bool(entry, "leaf");
        node.probs = parse_vector(require_field(entry, "probs"));
        if (!node.leaf) {
            node.threshold = require_double(entry, "threshold");
            node.left = require_int(entry, "left");
            node.right = require_int(entry, "right");
            if (entry.contains("weights")) {
                node.weights = parse_vector(entry.at("weights"));
            } else {
                node.feature = require_int(entry, "feature");
            }
            const auto n = static_cast<int>(nodes.size());
            if (node.left < 0 || node.left >= n || node.right < 0 || node.right >= n)
                throw SchemaError("tree node child index out of range");
        }
        model->nodes.push_back(std::move(node));
    }
    return model;
}

}  // namespace

Json classifier_to_json(const ProbClassifier& model) {
    if (const auto* linear = dynamic_cast<const LinearProbModel*>(&model)) return linear_to_json(*linear);
    if (const auto* centroid = dynamic_cast<const CentroidModel*>(&model))
        return centroid_to_json(*centroid);
    if (const auto* window = dynamic_cast<const WindowModel*>(&model)) return window_to_json(*window);
    if (const auto* tree = dynamic_cast<const TreeModel*>(&model)) return tree_to_json(*tree);
    throw SchemaError("classifier kind '" + model.kind() + "' has no serialization");
}

std::unique_ptr<ProbClassifier> classifier_from_json(const Json& j) {
    const std::string kind = require_string(j, "kind");
    if (kind == "linear") return linear_from_json(j);
    if (kind == "centroid") return centroid_from_json(j);
    if (kind == "window") return window_from_json(j);
    if (kind == "tree") return tree_from_json(j);
    throw SchemaError("unknown classifier kind '" + kind + "'");
}

Json standardizer_to_json(const Standardizer& model) {
    Json zero_variance = Json::array();
    for (bool flag : model.zero_variance) zero_variance.push_back(flag);
    return Json{{"mean", json_vector(model.mean)},
                {"std", json_vector(model.std)},
                {"zero_variance", std::move(zero_variance)}};
}

Standardizer standardizer_from_json(const Json& j) {
    Standardizer model;
    model.mean = parse_vector(require_field(j, "mean"));
    model.std = parse_vector(require_field(j, "std"));
    const Json& flags = require_field(j, "zero_variance");
    if (!flags.is_array() || flags.size() != static_cast<std::size_t>(model.mean.size()))
        throw SchemaError("zero_variance length does not match mean length");
    model.zero_variance.clear();
    for (const Json& f : flags) {
        if (!f.is_boolean()) throw SchemaError("zero_variance entries must be booleans");
        model.zero_variance.push_back(f.get<bool>());
    }
    return model;
}

Json pca_to_json(const PCAModel& model) {
    return Json{{"mean", json_vector(model.mean)},
                {"components", json_matrix(model.components)},
                {"explained_variance", json_vector(model.explained_variance)},
                {"total_variance", model.total_variance}};
}

PCAModel pca_from_json(const Json& j) {
    PCAModel model;
    model.mean = parse_vector(require_field(j, "mean"));
    model.components = parse_matrix(require_field(j, "components"));
    model.explained_variance = parse_vector(require_field(j, "explained_variance"));
    model.total_variance = require_double(j, "total_variance");
    return model;
}

Json pc_selector_to_json(const PcSelector& selector) {
    if (selector.kind == PcSelector::Kind::fixed)
        return Json{{"kind", "fixed"}, {"count", selector.fixed_count}};
    return Json{{"kind", "variance_fraction"}, {"fraction", selector.fraction}};
}

PcSelector pc_selector_from_json(const Json& j) {
    const std::string kind = require_string(j, "kind");
    if (kind == "fixed") return PcSelector::fixed(require_int(j, "count"));
    if (kind == "variance_fraction") return PcSelector::variance(require_double(j, "fraction"));
    throw SchemaError("unknown component selector kind '" + kind + "'");
}

Json quantizer_to_json(const QuantizerModel& model) {
    return Json{{"edges", json_vector(model.edges)},
                {"centers", json_vector(model.centers)},
                {"ql", model.ql},
                {"input_min", model.input_min},
                {"input_max", model.input_max},
                {"quantizer_kind", name_of(model.quantizer_kind)}};
}

QuantizerModel quantizer_from_json(const Json& j) {
    QuantizerModel model;
    model.edges = parse_vector(require_field(j, "edges"));
    model.centers = parse_vector(require_field(j, "centers"));
    model.ql = require_int(j, "ql");
    model.input_min = require_double(j, "input_min");
    model.input_max = require_double(j, "input_max");
    model.quantizer_kind = quantizer_kind_from_name(require_string(j, "quantizer_kind"));
    if (model.ql < 2 || model.centers.size() != model.ql || model.edges.size() != model.ql - 1)
        throw SchemaError("quantizer payload does not match its level count");
    return model;
}

Json ccbr_config_to_json(const CCBRConfig& config) {
    return Json{{"ql", config.ql},
                {"c", config.c},
                {"pc", pc_selector_to_json(config.pc)},
                {"max_stages", config.max_stages},
                {"min_gain", config.min_gain},
                {"classifier", name_of(config.classifier)},
                {"metric", name_of(config.metric)},
                {"window_coverage", config.window_coverage},
                {"tree_depth", config.tree_depth},
                {"tree_min_leaf", config.tree_min_leaf},
                {"seed", config.seed}};
}

CCBRConfig ccbr_config_from_json(const Json& j) {
    CCBRConfig config;
    config.ql = require_int(j, "ql");
    config.c = require_double(j, "c");
    config.pc = pc_selector_from_json(require_field(j, "pc"));
    config.max_stages = require_int(j, "max_stages");
    config.min_gain = require_double(j, "min_gain");
    config.classifier = classifier_kind_from_name(require_string(j, "classifier"));
    config.metric = metric_from_name(require_string(j, "metric"));
    config.window_coverage = require_double(j, "window_coverage");
    config.tree_depth = require_int(j, "tree_depth");
    config.tree_min_leaf = require_int(j, "tree_min_leaf");
    const Json& seed = require_field(j, "seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) missing("seed");
    config.seed = seed.get<std::uint64_t>();
    return config;
}

Json ccbr_model_to_json(const CCBRModel& model) {
    Json stages = Json::array();
    for (const CCBRStage& stage : model.stages)
        stages.push_back(Json{{"quantizer", quantizer_to_json(stage.quantizer)},
                              {"classifier", classifier_to_json(*stage.classifier)}});
    Json trace = Json::array();
    for (double r2 : model.validation_trace) trace.push_back(r2);
    return Json{{"standardizer", standardizer_to_json(model.standardizer)},
                {"pca", pca_to_json(model.pca)},
                {"stages", std::move(stages)},
                {"validation_trace", std::move(trace)},
                {"config", ccbr_config_to_json(model.config)}};
}

CCBRModel ccbr_model_from_json(const Json& j) {
    CCBRModel model;
    model.standardizer = standardizer_from_json(require_field(j, "standardizer"));
    model.pca = pca_from_json(require_field(j, "pca"));
    const Json& stages = require_field(j, "stages");
    if (!stages.is_array() || stages.empty()) throw SchemaError("cascade model has no stages");
    for (const Json& entry : stages) {
        CCBRStage stage;
        stage.quantizer = quantizer_from_json(require_field(entry, "quantizer"));
        stage.classifier = classifier_from_json(require_field(entry, "classifier"));
        model.stages.push_back(std::move(stage));
    }
    const Json& trace = require_field(j, "validation_trace");
    if (!trace.is_array()) throw SchemaError("validation_trace must be an array");
    for (const Json& r2 : trace) model.validation_trace.push_back(to_finite_double(r2, "validation_trace"));
    model.config = ccbr_config_from_json(require_field(j, "config"));
    return model;
}

Json wiener_to_json(const WienerModel& model) {
    return Json{{"weights", json_matrix(model.weights)},
                {"polynomial", json_matrix(model.polynomial)},
                {"ridge_fallback", model.ridge_fallback}};
}

WienerModel wiener_from_json(const Json& j) {
    WienerModel model;
    model.weights = parse_matrix(require_field(j, "weights"));
    model.polynomial = parse_matrix(require_field(j, "polynomial"));
    model.ridge_fallback = require_bool(j, "ridge_fallback");
    if (model.weights.rows() < 1) throw SchemaError("filter weights must include an intercept row");
    return model;
}

Json synth_config_to_json(const SynthConfig& config) {
    return Json{{"n_units", config.n_units},
                {"duration_s", config.duration_s},
                {"bin_hint_hz", config.bin_hint_hz},
                {"tuning",
                 Json{{"baseline_rate_hz", config.tuning.baseline_rate_hz},
                      {"modulation_depth_hz", config.tuning.modulation_depth_hz},
                      {"preferred_direction_step", config.tuning.preferred_direction_step},
                      {"speed_gain", config.tuning.speed_gain}}},
                {"velocity",
                 Json{{"smoothing_tau_s", config.velocity.smoothing_tau_s},
                      {"speed_scale", config.velocity.speed_scale}}},
                {"nonlinearity",
                 config.nonlinearity == RateNonlinearity::saturating ? "saturating" : "none"},
                {"noise_seed", config.noise_seed}};
}

SynthConfig synth_config_from_json(const Json& j) {
    SynthConfig config;
    config.n_units = require_int(j, "n_units");
    config.duration_s = require_double(j, "duration_s");
    config.bin_hint_hz = require_double(j, "bin_hint_hz");
    const Json& tuning = require_field(j, "tuning");
    config.tuning.baseline_rate_hz = require_double(tuning, "baseline_rate_hz");
    config.tuning.modulation_depth_hz = require_double(tuning, "modulation_depth_hz");
    config.tuning.preferred_direction_step = require_double(tuning, "preferred_direction_step");
    config.tuning.speed_gain = require_double(tuning, "speed_gain");
    const Json& velocity = require_field(j, "velocity");
    config.velocity.smoothing_tau_s = require_double(velocity, "smoothing_tau_s");
    config.velocity.speed_scale = require_double(velocity, "speed_scale");
    const std::string nonlinearity = require_string(j, "nonlinearity");
    if (nonlinearity == "none") {
        config.nonlinearity = RateNonlinearity::none;
    } else if (nonlinearity == "saturating") {
        config.nonlinearity = RateNonlinearity::saturating;
    } else {
        throw SchemaError("unknown nonlinearity '" + nonlinearity + "'");
    }
    const Json& seed = require_field(j, "noise_seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) missing("noise_seed");
    config.noise_seed = seed.get<std::uint64_t>();
    return config;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& error) {
        throw ParseError(path + ": " + error.what());
    }
}

void write_json_file(const std::string& path, const Json& document) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot open '" + path + "' for writing");
    out << document.dump(2) << '\n';
    if (!out) throw LoadError("write to '" + path + "' failed");
}

namespace {

Json versioned_document(const char* model_type, Json payload) {
    return Json{{"format_version", kFormatVersion},
                {"model_type", model_type},
                {"payload", std::move(payload)}};
}

Json open_versioned(const std::string& path, const char* model_type) {
    const Json document = read_json_file(path);
    if (require_int(document, "format_version") != kFormatVersion)
        throw SchemaError("unsupported format_version in '" + path + "'");
    if (require_string(document, "model_type") != model_type)
        throw SchemaError("'" + path + "' does not hold a " + model_type + " model");
    return require_field(document, "payload");
}

}  // namespace

void save_ccbr_models(const std::string& path, const std::vector<CCBRModel>& models) {
    Json payload = Json::array();
    for (const CCBRModel& model : models) payload.push_back(ccbr_model_to_json(model));
    write_json_file(path, versioned_document("ccbr", std::move(payload)));
}

std::vector<CCBRModel> load_ccbr_models(const std::string& path) {
    const Json payload = open_versioned(path, "ccbr");
    if (!payload.is_array() || payload.empty()) throw SchemaError("model file holds no cascades");
    std::vector<CCBRModel> models;
    for (const Json& entry : payload) models.push_back(ccbr_model_from_json(entry));
    return models;
}

void save_wiener_model(const std::string& path, const WienerModel& model) {
    write_json_file(path, versioned_document("wiener", wiener_to_json(model)));
}

WienerModel load_wiener_model(const std::string& path) {
    return wiener_from_json(open_versioned(path, "wiener"));
}

}  // namespace neurodec
