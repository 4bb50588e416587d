#include "hwgen/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace hwgen {

namespace {
constexpr char kMagic[6] = {'H', 'W', 'C', 'K', '1', '\n'};
}

void Checkpoint::add_params(const NamedParams& params) {
    for (const auto& [name, p] : params) add(name, p->val);
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw CheckpointError("checkpoint missing tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void Checkpoint::load_params(const NamedParams& params) const {
    for (const auto& [name, p] : params) {
        const Tensor& stored = tensor(name);
        if (stored.shape != p->val.shape)
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                                  stored.shape_str() + ", model expects " + p->val.shape_str());
        p->val = stored;
    }
}

void Checkpoint::save(const std::string& path) const {
    nlohmann::json header;
    header["format"] = format;
    header["version"] = kVersion;
    header["meta"] = meta;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : tensors) manifest.push_back({{"name", name}, {"shape", t.shape}});
    header["tensors"] = manifest;
    const std::string hs = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("cannot write checkpoint: " + tmp);
        f.write(kMagic, sizeof kMagic);
        const uint64_t len = hs.size();
        f.write(reinterpret_cast<const char*>(&len), sizeof len);
        f.write(hs.data(), std::streamsize(hs.size()));
        for (const auto& [name, t] : tensors)
            f.write(reinterpret_cast<const char*>(t.v.data()),
                    std::streamsize(t.v.size() * sizeof(float)));
        if (!f) throw CheckpointError("short write: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw CheckpointError("cannot rename checkpoint to: " + path);
}

Checkpoint Checkpoint::load(const std::string& path, const std::string& expect_format) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[sizeof kMagic];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string hs(len, '\0');
    f.read(hs.data(), std::streamsize(len));
    if (!f) throw CheckpointError("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const std::exception& e) {
        throw CheckpointError("corrupt checkpoint header: " + std::string(e.what()));
    }
    if (header.value("version", -1) != kVersion)
        throw CheckpointError("checkpoint version " + std::to_string(header.value("version", -1)) +
                              " unsupported (expected " + std::to_string(kVersion) + ")");
    Checkpoint ck;
    ck.format = header.value("format", "");
    if (!expect_format.empty() && ck.format != expect_format)
        throw CheckpointError("checkpoint format '" + ck.format + "' does not match expected '" +
                              expect_format + "'");
    ck.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header["tensors"]) {
        Tensor t(entry["shape"].get<std::vector<int>>());
        f.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.v.size() * sizeof(float)));
        if (!f) throw CheckpointError("truncated checkpoint tensors: " + path);
        ck.tensors.push_back({entry["name"].get<std::string>(), std::move(t)});
    }
    return ck;
}

}  // namespace hwgen
