#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hwgen/nn.hpp"

namespace hwgen {

// Single-file container: magic + json header (format tag, version, meta,
// tensor manifest) followed by raw float32 blobs. Loaders reject version or
// format mismatches explicitly.
struct Checkpoint {
    static constexpr int kVersion = 1;

    std::string format;
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(const std::string& name, const Tensor& t) { tensors.push_back({name, t}); }
    void add_params(const NamedParams& params);
    const Tensor& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;

    // copies stored tensors into matching named parameters; shape-checked
    void load_params(const NamedParams& params) const;

    void save(const std::string& path) const;  // atomic: temp + rename
    static Checkpoint load(const std::string& path, const std::string& expect_format = "");
};

}  // namespace hwgen
