#include "hwgen/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hwgen {

const std::map<std::string, std::string>& RunConfig::defaults() {
    static const std::map<std::string, std::string> kDefaults = {
        {"seed", "0"},

        {"model.d", "256"},
        {"model.d_model", "320"},
        {"model.d_text", "96"},
        {"model.backbone", "tiny_cnn"},
        {"model.style_widths", "16,32,64,128"},
        {"model.unet_widths", "64,128,256"},
        {"model.temb_dim", "128"},
        {"model.groups", "8"},

        {"style_train.epochs", "20"},
        {"style_train.batch", "32"},
        {"style_train.lr", "0.001"},
        {"style_train.lr_decay", "0.1"},
        {"style_train.lr_step_epochs", "3"},
        {"style_train.weight_decay", "0.0001"},
        {"style_train.margin", "1.0"},
        {"style_train.p", "2"},
        {"style_train.variant", "hybrid"},

        {"diffusion.T", "1000"},
        {"diffusion.beta_start", "0.0001"},
        {"diffusion.beta_end", "0.02"},
        {"diffusion.train_steps", "2000"},
        {"diffusion.batch", "8"},
        {"diffusion.lr", "0.0001"},
        {"diffusion.weight_decay", "0.2"},
        {"diffusion.codec", "stub"},

        {"sample.steps", "50"},
        {"sample.k", "5"},

        {"htr.epochs", "40"},
        {"htr.batch", "16"},
        {"htr.lr", "0.001"},
        {"htr.hidden", "64"},

        {"eval.fid_features", "pooled"},
        {"eval.htr_seeds", "3"},

        {"compose.gap", "12"},
        {"compose.line_width", "1100"},
    };
    return kDefaults;
}

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key: '" + key + "'");
    values_[key] = value;
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

int RunConfig::get_int(const std::string& key) const {
    const std::string s = get_str(key);
    try {
        size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return int(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + s + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string s = get_str(key);
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + s + "'");
    }
}

std::string RunConfig::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: '" + key + "'");
    return it->second;
}

std::vector<int> RunConfig::get_ints(const std::string& key) const {
    const std::string s = get_str(key);
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected comma-separated ints, got '" + s + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::string RunConfig::echo() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

std::string RunConfig::hash() const {
    const uint64_t h = fnv1a(echo());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace hwgen
