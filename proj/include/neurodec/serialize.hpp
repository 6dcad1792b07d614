#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurodec/classify.hpp"
#include "neurodec/dataset.hpp"
#include "neurodec/decode.hpp"
#include "neurodec/features.hpp"
#include "neurodec/pca.hpp"
#include "neurodec/types.hpp"

namespace neurodec {

using Json = nlohmann::json;

/// Field access that reports the missing key instead of throwing a bare
/// library exception.
const Json& require_field(const Json& object, const char* key);
double require_double(const Json& object, const char* key);
int require_int(const Json& object, const char* key);
bool require_bool(const Json& object, const char* key);
std::string require_string(const Json& object, const char* key);

Json json_matrix(const Matrix& m);
Matrix parse_matrix(const Json& j);
Json json_vector(const Vector& v);
Vector parse_vector(const Json& j);
Json json_int_vector(const IntVector& v);
IntVector parse_int_vector(const Json& j);

std::string name_of(DistanceMetric metric);
std::string name_of(Calibration calibration);
std::string name_of(TreeKind kind);
std::string name_of(QuantizerKind kind);
std::string name_of(ClassifierKind kind);
std::string name_of(FeatureSource source);
DistanceMetric metric_from_name(const std::string& name);
Calibration calibration_from_name(const std::string& name);
TreeKind tree_kind_from_name(const std::string& name);
QuantizerKind quantizer_kind_from_name(const std::string& name);
ClassifierKind classifier_kind_from_name(const std::string& name);
FeatureSource feature_source_from_name(const std::string& name);

Json classifier_to_json(const ProbClassifier& model);
std::unique_ptr<ProbClassifier> classifier_from_json(const Json& j);

Json standardizer_to_json(const Standardizer& model);
Standardizer standardizer_from_json(const Json& j);
Json pca_to_json(const PCAModel& model);
PCAModel pca_from_json(const Json& j);
Json pc_selector_to_json(const PcSelector& selector);
PcSelector pc_selector_from_json(const Json& j);
Json quantizer_to_json(const QuantizerModel& model);
QuantizerModel quantizer_from_json(const Json& j);

/// The stage factory is a runtime-only hook and is not serialized.
Json ccbr_config_to_json(const CCBRConfig& config);
CCBRConfig ccbr_config_from_json(const Json& j);
Json ccbr_model_to_json(const CCBRModel& model);
CCBRModel ccbr_model_from_json(const Json& j);
Json wiener_to_json(const WienerModel& model);
WienerModel wiener_from_json(const Json& j);

Json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const Json& j);

/// Versioned model documents (format_version 1).
void save_ccbr_models(const std::string& path, const std::vector<CCBRModel>& models);
std::vector<CCBRModel> load_ccbr_models(const std::string& path);
void save_wiener_model(const std::string& path, const WienerModel& model);
WienerModel load_wiener_model(const std::string& path);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& document);

}  // namespace neurodec
