#pragma once

#include "qlab/model.hpp"
#include "qlab/turnpike.hpp"
#include "qlab/utility.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>

namespace qlab {

using Json = nlohmann::ordered_json;

/// Malformed or inconsistent configuration. The message starts with a
/// location: "file:line:col" for syntax errors, "file: /json/pointer" otherwise.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parsed configuration document together with its source name.
struct ConfigDoc {
    std::string source;
    Json root;
};

ConfigDoc load_config(const std::string& path);
ConfigDoc parse_config(const std::string& text, const std::string& source = "<string>");

/// Builds the model from /model. Vectors may be given as scalars and
/// matrices as scalars or row-major nested arrays.
QtsmModel model_from_config(const ConfigDoc& doc);
QtsmCoefficients coefficients_from_config(const ConfigDoc& doc);

/// /y0, defaulting to zeros of the model's dimension.
Vec y0_from_config(const ConfigDoc& doc, int m);

/// Utility spec object: {"type": "power", "p": -1}, {"type": "log"},
/// {"type": "pareto", "weights": [...], "exponents": [...]},
/// {"type": "linear_sharing", "proportions": [...], "weights": [...], "exponents": [...]}
/// or {"type": "linear_sharing", "w": [...], "exponents": [...]}; optional "scale".
Utility utility_from_json(const Json& j, const std::string& where);

/// Looks up /utilities/<name>.
Utility named_utility(const ConfigDoc& doc, const std::string& name);

/// Assembles an experiment from /pairs/<pair> and /experiment. An empty pair
/// id selects /experiment/pair.
ExperimentConfig experiment_from_config(const ConfigDoc& doc, const std::string& pair = "");

/// Reads an optional value at a JSON pointer.
template <class T>
T value_or(const ConfigDoc& doc, const std::string& pointer, T fallback) {
    const Json::json_pointer p(pointer);
    if (!doc.root.contains(p)) return fallback;
    try {
        return doc.root.at(p).get<T>();
    } catch (const std::exception& e) {
        throw ConfigError(doc.source + ": " + pointer + ": " + e.what());
    }
}

}  // namespace qlab
