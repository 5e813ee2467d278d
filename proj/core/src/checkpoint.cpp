// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dait/digest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dait {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'I', 'T', 'C', 'K', 'P', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i64(std::string& out, std::int64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int64_t i64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 8;
        return static_cast<std::int64_t>(v);
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles(std::size_t n) {
        need(n * sizeof(double));
        std::vector<double> out(n);
        std::memcpy(out.data(), data_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return out;
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    const std::string& raw() const { return data_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw IoError("truncated checkpoint blob " + path_);
    }
    std::string data_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

void save_checkpoint(const fs::path& base, const std::map<std::string, NamedParams>& groups,
                     std::int64_t epoch, const std::map<std::string, double>& metrics,
                     const std::string& config_snapshot) {
    std::string blob(kMagic, sizeof(kMagic));
    put_u32(blob, static_cast<std::uint32_t>(groups.size()));
    for (const auto& [gname, params] : groups) {
        put_string(blob, gname);
        put_u32(blob, static_cast<std::uint32_t>(params.size()));
        for (const auto& [pname, var] : params) {
            put_string(blob, pname);
            put_u32(blob, static_cast<std::uint32_t>(var->value.ndim()));
            for (auto d : var->value.shape()) put_i64(blob, d);
            const auto& vec = var->value.vec();
            const std::size_t old = blob.size();
            blob.resize(old + vec.size() * sizeof(double));
            std::memcpy(blob.data() + old, vec.data(), vec.size() * sizeof(double));
        }
    }
    const fs::path blob_path = base.string() + ".ckpt";
    const fs::path manifest_path = base.string() + ".manifest.json";
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    {
        std::ofstream f(blob_path, std::ios::binary);
        if (!f) throw IoError("cannot write checkpoint blob " + blob_path.string());
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!f) throw IoError("failed writing checkpoint blob " + blob_path.string());
    }
    json manifest;
    manifest["format"] = "dait-checkpoint";
    manifest["version"] = 1;
    manifest["epoch"] = epoch;
    manifest["metrics"] = metrics;
    manifest["digest"] = to_hex(fnv1a64(blob.data(), blob.size()));
    manifest["blob"] = blob_path.filename().string();
    std::vector<std::string> names;
    for (const auto& [gname, _] : groups) names.push_back(gname);
    manifest["groups"] = names;
    if (!config_snapshot.empty()) {
        manifest["config"] = json::parse(config_snapshot, nullptr, false);
        if (manifest["config"].is_discarded()) manifest["config"] = config_snapshot;
    }
    std::ofstream mf(manifest_path);
    if (!mf) throw IoError("cannot write checkpoint manifest " + manifest_path.string());
    mf << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& ref) {
    fs::path manifest_path = ref;
    const std::string s = ref.string();
    if (s.size() >= 5 && s.substr(s.size() - 5) == ".ckpt")
        manifest_path = s.substr(0, s.size() - 5) + ".manifest.json";
    else if (s.size() < 14 || s.substr(s.size() - 14) != ".manifest.json")
        manifest_path = s + ".manifest.json";
    if (!fs::exists(manifest_path)) throw ConfigError("checkpoint manifest not found: " + manifest_path.string());

    Checkpoint out;
    json manifest = json::parse(read_file(manifest_path), nullptr, false);
    if (manifest.is_discarded()) throw IoError("malformed checkpoint manifest " + manifest_path.string());
    out.manifest.epoch = manifest.value("epoch", -1);
    out.manifest.digest = manifest.value("digest", "");
    out.manifest.blob_file = manifest.value("blob", "");
    if (manifest.contains("metrics"))
        for (auto& [k, v] : manifest["metrics"].items()) out.manifest.metrics[k] = v.get<double>();
    if (manifest.contains("groups"))
        for (auto& g : manifest["groups"]) out.manifest.groups.push_back(g.get<std::string>());
    if (manifest.contains("config") && !manifest["config"].is_string())
        out.manifest.config_snapshot = manifest["config"].dump();
    else if (manifest.contains("config"))
        out.manifest.config_snapshot = manifest["config"].get<std::string>();

    const fs::path blob_path = manifest_path.parent_path() / out.manifest.blob_file;
    Reader r(read_file(blob_path), blob_path.string());
    const std::string digest = to_hex(fnv1a64(r.raw().data(), r.raw().size()));
    if (!out.manifest.digest.empty() && digest != out.manifest.digest)
        throw IoError("checkpoint digest mismatch for " + blob_path.string() + " (corrupted blob?)");

    if (r.raw().size() < sizeof(kMagic) || std::memcmp(r.raw().data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("bad checkpoint magic in " + blob_path.string());
    r.skip(sizeof(kMagic));
    const std::uint32_t group_count = r.u32();
    for (std::uint32_t g = 0; g < group_count; ++g) {
        const std::string gname = r.str();
        const std::uint32_t tensor_count = r.u32();
        auto& vec = out.groups[gname];
        for (std::uint32_t t = 0; t < tensor_count; ++t) {
            const std::string pname = r.str();
            const std::uint32_t ndim = r.u32();
            std::vector<std::int64_t> shape;
            std::int64_t numel = 1;
            for (std::uint32_t i = 0; i < ndim; ++i) {
                shape.push_back(r.i64());
                numel *= shape.back();
            }
            vec.emplace_back(pname, Tensor(shape, r.doubles(static_cast<std::size_t>(numel))));
        }
    }
    return out;
}

void restore_group(const Checkpoint& ckpt, const std::string& group, const NamedParams& params) {
    auto it = ckpt.groups.find(group);
    if (it == ckpt.groups.end()) throw ConfigError("checkpoint has no group '" + group + "'");
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, tensor] : it->second) by_name[name] = &tensor;
    for (const auto& [name, var] : params) {
        auto f = by_name.find(name);
        if (f == by_name.end()) throw ConfigError("checkpoint group '" + group + "' missing tensor '" + name + "'");
        if (!(f->second->shape() == var->value.shape()))
            throw ContractError("checkpoint tensor '" + name + "' shape " + f->second->shape_str() +
                                " != model shape " + var->value.shape_str());
        var->value = *f->second;
    }
}

}  // namespace dait
