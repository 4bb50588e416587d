#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hwgen/common.hpp"

namespace hwgen {

// Flat dotted-key configuration ("model.d = 256"). Every key must be
// registered; unknown keys are rejected so typos cannot pass silently.
// Precedence: built-in default < config file < command-line flag.
class RunConfig {
public:
    RunConfig();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);  // flag override

    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::string get_str(const std::string& key) const;
    std::vector<int> get_ints(const std::string& key) const;  // comma separated
    uint64_t get_seed() const { return uint64_t(get_int("seed")); }

    // effective configuration, sorted; embedded into checkpoints and reports
    std::string echo() const;
    nlohmann::json to_json() const;
    std::string hash() const;  // hex fnv1a of echo()

    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace hwgen
