#include "objswap/checkpoint.hpp"

#include "objswap/errors.hpp"

#include <cstring>
#include <fstream>

using json = nlohmann::json;

namespace objswap {

namespace {
constexpr char kMagic[4] = {'O', 'S', 'W', 'C'};
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name)
            return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const std::string& kind, const json& config,
                     const std::vector<nn::ParamRef>& params,
                     const std::vector<std::pair<std::string, Tensor>>& extra) {
    json header;
    header["kind"] = kind;
    header["config"] = config;
    json dir = json::array();
    std::vector<const Tensor*> order;
    auto add = [&](const std::string& name, const Tensor& t) {
        dir.push_back({{"name", name}, {"shape", t.shape}});
        order.push_back(&t);
    };
    for (const auto& p : params)
        add(p.name, *p.value);
    for (const auto& [n, t] : extra)
        add(n, t);
    header["tensors"] = dir;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw CheckpointError("cannot open for write: " + path);
    f.write(kMagic, 4);
    uint32_t ver = kCheckpointVersion;
    uint64_t hlen = hs.size();
    f.write((const char*)&ver, 4);
    f.write((const char*)&hlen, 8);
    f.write(hs.data(), (std::streamsize)hs.size());
    for (const Tensor* t : order)
        f.write((const char*)t->ptr(), (std::streamsize)(t->numel() * 8));
    if (!f)
        throw CheckpointError("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    uint32_t ver = 0;
    uint64_t hlen = 0;
    f.read((char*)&ver, 4);
    f.read((char*)&hlen, 8);
    if (ver != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(ver) + " != supported " +
                              std::to_string(kCheckpointVersion) + ": " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), (std::streamsize)hlen);
    json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    if (!expected_kind.empty() && ckpt.kind != expected_kind)
        throw CheckpointError("checkpoint kind '" + ckpt.kind + "' does not match expected '" +
                              expected_kind + "': " + path);
    ckpt.config = header.at("config");
    for (const auto& e : header.at("tensors")) {
        Tensor t(e.at("shape").get<std::vector<int>>());
        f.read((char*)t.ptr(), (std::streamsize)(t.numel() * 8));
        if (f.gcount() != (std::streamsize)(t.numel() * 8))
            throw CheckpointError("truncated tensor data: " + path);
        ckpt.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    return ckpt;
}

void restore_params(const Checkpoint& ckpt, const std::vector<nn::ParamRef>& params) {
    for (const auto& p : params) {
        const Tensor* src = ckpt.find(p.name);
        if (!src)
            throw CheckpointError("checkpoint missing tensor '" + p.name + "'");
        if (src->shape != p.value->shape)
            throw CheckpointError("shape mismatch for '" + p.name + "': " + src->shape_str() +
                                  " vs " + p.value->shape_str());
        *p.value = *src;
    }
}

}  // namespace objswap
