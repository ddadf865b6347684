#include "qlab/config.hpp"

#include <fstream>
#include <sstream>

namespace qlab {

namespace {

[[noreturn]] void fail(const ConfigDoc& doc, const std::string& where, const std::string& what) {
    throw ConfigError(doc.source + ": " + where + ": " + what);
}

std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return std::to_string(line) + ":" + std::to_string(col);
}

double number(const Json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    return j.get<double>();
}

std::vector<double> numbers(const Json& j, const std::string& where) {
    std::vector<double> v;
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) throw ConfigError(where + ": expected a number or an array of numbers");
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], where + "/" + std::to_string(i)));
    return v;
}

Vec to_vec(const std::vector<double>& v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

Mat to_mat(const Json& j, const std::string& where) {
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a number or a nested array");
    if (!j[0].is_array()) {
        // A flat array is a single row.
        const auto row = numbers(j, where);
        Mat M(1, static_cast<Eigen::Index>(row.size()));
        for (std::size_t k = 0; k < row.size(); ++k) M(0, static_cast<Eigen::Index>(k)) = row[k];
        return M;
    }
    const std::size_t rows = j.size(), cols = j[0].size();
    Mat M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const auto row = numbers(j[i], where + "/" + std::to_string(i));
        if (row.size() != cols) throw ConfigError(where + "/" + std::to_string(i) + ": ragged matrix row");
        for (std::size_t k = 0; k < cols; ++k) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
    return M;
}

const Json& require(const ConfigDoc& doc, const std::string& pointer) {
    const Json::json_pointer p(pointer);
    if (!doc.root.contains(p)) fail(doc, pointer, "missing");
    return doc.root.at(p);
}

std::string prefixed(const ConfigDoc& doc, const std::string& msg) { return doc.source + ": " + msg; }

}  // namespace

ConfigDoc parse_config(const std::string& text, const std::string& source) {
    ConfigDoc doc;
    doc.source = source;
    try {
        doc.root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::string msg = e.what();
        const auto pos = msg.find("]: ");
        if (pos != std::string::npos) msg = msg.substr(pos + 3);
        throw ConfigError(source + ":" + line_col(text, e.byte ? e.byte - 1 : 0) + ": " + msg);
    }
    if (!doc.root.is_object()) throw ConfigError(source + ":1:1: top level must be an object");
    return doc;
}

ConfigDoc load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ":0:0: cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

QtsmCoefficients coefficients_from_config(const ConfigDoc& doc) {
    try {
        QtsmCoefficients c;
        c.r0 = number(require(doc, "/model/r0"), "/model/r0");
        c.r1 = to_vec(numbers(require(doc, "/model/r1"), "/model/r1"));
        c.R2 = to_mat(require(doc, "/model/R2"), "/model/R2");
        c.a = to_vec(numbers(require(doc, "/model/a"), "/model/a"));
        c.A = to_mat(require(doc, "/model/A"), "/model/A");
        c.b = to_vec(numbers(require(doc, "/model/b"), "/model/b"));
        c.B = to_mat(require(doc, "/model/B"), "/model/B");
        c.Lambda = to_mat(require(doc, "/model/Lambda"), "/model/Lambda");
        c.Sigma = to_mat(require(doc, "/model/Sigma"), "/model/Sigma");
        return c;
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(doc.source, 0) == 0) throw;
        throw ConfigError(prefixed(doc, msg));
    }
}

QtsmModel model_from_config(const ConfigDoc& doc) {
    auto c = coefficients_from_config(doc);
    try {
        return QtsmModel::create(std::move(c));
    } catch (const ModelError& e) {
        throw ConfigError(prefixed(doc, std::string("/model/") + e.what()));
    }
}

Vec y0_from_config(const ConfigDoc& doc, int m) {
    const Json::json_pointer p("/y0");
    if (!doc.root.contains(p)) return Vec::Zero(m);
    try {
        const Vec y = to_vec(numbers(doc.root.at(p), "/y0"));
        if (y.size() != m) throw ConfigError("/y0: expected " + std::to_string(m) + " entries");
        return y;
    } catch (const ConfigError& e) {
        throw ConfigError(prefixed(doc, e.what()));
    }
}

Utility utility_from_json(const Json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw ConfigError(where + ": utility needs a string \"type\"");
    const std::string type = j["type"].get<std::string>();
    const auto field = [&](const char* k) -> const Json& {
        if (!j.contains(k)) throw ConfigError(where + "/" + k + ": missing");
        return j[k];
    };
    const auto vec = [&](const char* k) { return numbers(field(k), where + "/" + k); };
    try {
        Utility u = Utility::log();
        if (type == "power")
            u = Utility::power(number(field("p"), where + "/p"));
        else if (type == "log")
            u = Utility::log();
        else if (type == "pareto")
            u = Utility::pareto(vec("weights"), vec("exponents"));
        else if (type == "linear_sharing")
            u = j.contains("w") ? Utility::linear_sharing_from_weights(vec("w"), vec("exponents"))
                                : Utility::linear_sharing(vec("proportions"), vec("weights"), vec("exponents"));
        else
            throw ConfigError(where + "/type: unknown utility type '" + type + "'");
        if (j.contains("scale")) u = u.scaled(number(j["scale"], where + "/scale"));
        return u;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

Utility named_utility(const ConfigDoc& doc, const std::string& name) {
    const std::string ptr = "/utilities/" + name;
    const Json& j = require(doc, ptr);
    try {
        return utility_from_json(j, ptr);
    } catch (const ConfigError& e) {
        throw ConfigError(prefixed(doc, e.what()));
    }
}

ExperimentConfig experiment_from_config(const ConfigDoc& doc, const std::string& pair) {
    ExperimentConfig cfg;
    cfg.pair_id = pair.empty() ? value_or<std::string>(doc, "/experiment/pair", "") : pair;
    if (cfg.pair_id.empty()) fail(doc, "/experiment/pair", "no utility pair selected");
    const std::string pp = "/pairs/" + cfg.pair_id;
    const Json& pj = require(doc, pp);
    if (!pj.is_object() || !pj.contains("general") || !pj.contains("reference"))
        fail(doc, pp, "pair needs \"general\" and \"reference\" utility names");
    cfg.u1 = named_utility(doc, pj["general"].get<std::string>());
    cfg.u2 = named_utility(doc, pj["reference"].get<std::string>());
    if (pj.contains("alpha")) cfg.alpha = pj["alpha"].get<double>();

    const QtsmModel model = model_from_config(doc);
    cfg.y = y0_from_config(doc, model.m());
    cfg.x = value_or<double>(doc, "/experiment/x", 1.0);
    cfg.npaths = value_or<std::size_t>(doc, "/experiment/paths", cfg.npaths);
    cfg.steps_per_unit = value_or<double>(doc, "/experiment/steps_per_unit", cfg.steps_per_unit);
    cfg.seed = value_or<std::uint64_t>(doc, "/experiment/seed", cfg.seed);
    cfg.tolerance = value_or<double>(doc, "/experiment/tolerance", cfg.tolerance);
    cfg.threads = value_or<std::size_t>(doc, "/experiment/threads", cfg.threads);
    const Json& hz = require(doc, "/experiment/horizons");
    try {
        cfg.horizons = numbers(hz, "/experiment/horizons");
        if (doc.root.contains(Json::json_pointer("/experiment/xgrid")))
            cfg.xgrid = numbers(doc.root.at(Json::json_pointer("/experiment/xgrid")), "/experiment/xgrid");
    } catch (const ConfigError& e) {
        throw ConfigError(prefixed(doc, e.what()));
    }
    const Json::json_pointer cp("/experiment/components");
    if (doc.root.contains(cp)) {
        cfg.components.clear();
        for (const auto& c : doc.root.at(cp)) {
            try {
                cfg.components.push_back(parse_component(c.get<std::string>()));
            } catch (const std::exception& e) {
                fail(doc, "/experiment/components", e.what());
            }
        }
    }
    try {
        check_experiment(cfg);
    } catch (const std::invalid_argument& e) {
        fail(doc, "/experiment", e.what());
    }
    return cfg;
}

}  // namespace qlab
