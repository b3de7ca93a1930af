#include "arcmark/config.hpp"

#include "arcmark/error.hpp"

#include <fstream>

namespace arcmark {

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open config " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError("invalid JSON in " + path + ": " + e.what());
    }
}

void merge_json(nlohmann::json& base, const nlohmann::json& patch) {
    if (!base.is_object() || !patch.is_object()) {
        base = patch;
        return;
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            merge_json(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

} // namespace arcmark
