#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bccn/tensor.hpp"

namespace bccn {

static_assert(std::endian::native == std::endian::little,
              "serialized tensors are little-endian; big-endian hosts are unsupported");

namespace detail {

inline void check_param_name(const std::string& name) {
    if (name.empty()) throw FormatError("parameter name must not be empty");
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
        if (!ok) throw FormatError("parameter name '" + name + "' has unsupported character '" +
                                   std::string(1, c) + "'");
    }
}

}  // namespace detail

/// Tensor file: one JSON header line {"name": ..., "shape": [...]} followed by
/// the values as raw little-endian 64-bit floats.
inline void write_tensor(const std::filesystem::path& path, const std::string& name,
                         const Tensor& t) {
    detail::check_param_name(name);
    nlohmann::ordered_json header;
    header["name"] = name;
    header["shape"] = t.shape();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw FormatError("short write to " + path.string());
}

inline std::pair<std::string, Tensor> read_tensor(const std::filesystem::path& path,
                                                  bool requires_grad = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing header line in " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad tensor header in " + path.string() + ": " + e.what());
    }
    if (!header.contains("name") || !header.contains("shape")) {
        throw FormatError("tensor header in " + path.string() + " lacks name/shape");
    }
    const std::string name = header["name"].get<std::string>();
    const auto shape = header["shape"].get<std::vector<std::size_t>>();
    std::vector<double> data(detail::shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != data.size() * sizeof(double)) {
        throw FormatError("tensor file " + path.string() + " truncated: expected " +
                          std::to_string(data.size() * sizeof(double)) + " payload bytes");
    }
    return {name, Tensor::from_data(shape, std::move(data), requires_grad)};
}

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Checkpoint: a directory of tensor files plus manifest.json carrying the
/// run config, the parameter table, and the training step.
struct Checkpoint {
    nlohmann::ordered_json config;
    std::uint64_t step = 0;
    std::vector<NamedParam> params;
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["config"] = ck.config;
    manifest["step"] = ck.step;
    auto table = nlohmann::ordered_json::array();
    for (const NamedParam& p : ck.params) {
        const std::string file = p.name + ".tensor";
        write_tensor(dir / file, p.name, p.tensor);
        nlohmann::ordered_json row;
        row["name"] = p.name;
        row["shape"] = p.tensor.shape();
        row["file"] = file;
        table.push_back(std::move(row));
    }
    manifest["parameters"] = std::move(table);
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + (dir / "manifest.json").string() + " for writing");
    out << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw FormatError("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
    }
    Checkpoint ck;
    ck.config = manifest.value("config", nlohmann::json::object());
    ck.step = manifest.value("step", std::uint64_t{0});
    for (const auto& row : manifest.at("parameters")) {
        const std::string file = row.at("file").get<std::string>();
        auto [name, tensor] = read_tensor(dir / file);
        if (name != row.at("name").get<std::string>()) {
            throw FormatError("checkpoint " + dir.string() + ": tensor file " + file +
                              " holds '" + name + "', manifest expects '" +
                              row.at("name").get<std::string>() + "'");
        }
        const auto shape = row.at("shape").get<std::vector<std::size_t>>();
        if (shape != tensor.shape()) {
            throw FormatError("checkpoint " + dir.string() + ": shape mismatch for " + name);
        }
        ck.params.push_back({std::move(name), std::move(tensor)});
    }
    return ck;
}

/// Copies checkpoint values into live model parameters, matched by name.
inline void restore_parameters(std::vector<NamedParam>& model_params, const Checkpoint& ck) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const NamedParam& p : ck.params) by_name[p.name] = &p.tensor;
    for (NamedParam& p : model_params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint lacks parameter '" + p.name + "'");
        }
        if (it->second->shape() != p.tensor.shape()) {
            throw FormatError("checkpoint parameter '" + p.name + "' has shape " +
                              detail::shape_str(it->second->shape()) + ", model expects " +
                              detail::shape_str(p.tensor.shape()));
        }
        p.tensor.leaf_data() = it->second->data();
    }
    // Extra checkpoint entries are legal: a run may store auxiliary parameter
    // sets (e.g. a frozen keyframe selector) next to the model's own.
}

}  // namespace bccn
