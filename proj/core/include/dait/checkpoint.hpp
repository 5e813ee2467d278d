// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint = opaque weight blob (<base>.ckpt) plus a JSON manifest sidecar
// (<base>.manifest.json) carrying the config snapshot, epoch, metrics, and a
// content digest of the blob.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dait/nn.hpp"
#include "dait/tensor.hpp"

namespace dait {

struct CheckpointManifest {
    std::int64_t epoch = -1;
    std::map<std::string, double> metrics;
    std::string config_snapshot;  // resolved run config as JSON text
    std::string digest;           // hex FNV-1a of the blob bytes
    std::vector<std::string> groups;
    std::string blob_file;
};

struct Checkpoint {
    CheckpointManifest manifest;
    std::map<std::string, std::vector<std::pair<std::string, Tensor>>> groups;
};

// Writes <base>.ckpt and <base>.manifest.json.
void save_checkpoint(const std::filesystem::path& base,
                     const std::map<std::string, NamedParams>& groups, std::int64_t epoch,
                     const std::map<std::string, double>& metrics, const std::string& config_snapshot);

// Accepts <base>, <base>.ckpt, or <base>.manifest.json; verifies the digest.
Checkpoint load_checkpoint(const std::filesystem::path& ref);

// Copies loaded tensors into live parameters by name; shapes must match.
void restore_group(const Checkpoint& ckpt, const std::string& group, const NamedParams& params);

}  // namespace dait
