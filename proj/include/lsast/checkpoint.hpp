#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsast/autograd.hpp"
#include "lsast/tensor.hpp"

namespace lsast {

// File layout: 8-byte magic "LSPCKPT1", little-endian u64 header length, a
// JSON header {format_version, metadata, tensors: [{name, dtype, shape,
// offset, nbytes}]}, then the raw little-endian f64 payloads back to back.
inline constexpr int checkpoint_format_version = 1;

struct Checkpoint {
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    bool has(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
    // Inserts or replaces.
    void put(const std::string& name, Tensor value);

    void store(const std::vector<std::pair<std::string, Var>>& params);
    // Copies stored values into params; every name must be present with a matching shape.
    void restore(const std::vector<std::pair<std::string, Var>>& params) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lsast
