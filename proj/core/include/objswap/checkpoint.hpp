#pragma once

#include "objswap/nn.hpp"
#include "objswap/tensor.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace objswap {

inline constexpr uint32_t kCheckpointVersion = 1;

// Versioned checkpoint container: magic, format version, JSON header (kind +
// config echo + tensor directory), then raw little-endian doubles. Loading
// refuses a version mismatch or a kind mismatch.
struct Checkpoint {
    std::string kind;
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& config, const std::vector<nn::ParamRef>& params,
                     const std::vector<std::pair<std::string, Tensor>>& extra = {});

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind);

// Copy values into an existing parameter set by name; every param must be
// present with a matching shape.
void restore_params(const Checkpoint& ckpt, const std::vector<nn::ParamRef>& params);

}  // namespace objswap
