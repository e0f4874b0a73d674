#pragma once

// Network and input-batch files: a JSON manifest plus a sidecar blob of
// little-endian float32 values. Offsets and counts in the manifest are in
// elements, not bytes. Conv weights are [out][in][kh][kw]; linear weights
// are row-major [out][in].

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memse/error.hpp"
#include "memse/netmodel.hpp"

namespace memse {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct InputBatch {
  Shape shape;  // per-sample (channels, height, width)
  std::vector<Vector> samples;
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return samples.size(); }
};

namespace detail {

inline std::vector<float> read_blob(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open blob " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0)
    throw ShapeError("blob " + path.string() + " has " + std::to_string(bytes.size()) +
                     " bytes, not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

inline void write_blob(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write blob " + path.string());
  for (float f : values) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    char b[4];
    std::memcpy(b, &u, 4);
    out.write(b, 4);
  }
  if (!out) throw FormatError("failed writing blob " + path.string());
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? field<T>(j, key) : fallback;
}

struct Region {
  std::size_t offset;
  std::size_t count;
};

inline Region region(const json& layer, const char* key) {
  const json& r = layer.at(key);
  return {field<std::size_t>(r, "offset"), field<std::size_t>(r, "count")};
}

inline std::vector<double> slice(const std::vector<float>& blob, Region r, std::size_t expected, const char* what) {
  if (r.count != expected)
    throw ShapeError(std::string(what) + " count " + std::to_string(r.count) + " != expected " +
                     std::to_string(expected));
  if (r.offset + r.count > blob.size())
    throw ShapeError(std::string(what) + " region exceeds blob (" + std::to_string(blob.size()) + " elements)");
  return {blob.begin() + static_cast<std::ptrdiff_t>(r.offset),
          blob.begin() + static_cast<std::ptrdiff_t>(r.offset + r.count)};
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline Shape shape3(const json& j) {
  auto dims = j.get<std::vector<Index>>();
  if (dims.size() != 3) throw FormatError("shape must have 3 entries (channels, height, width)");
  return {dims[0], dims[1], dims[2]};
}

}  // namespace detail

inline NetworkSpec parse_network(const fs::path& manifest_path) {
  using namespace detail;
  const json m = read_json(manifest_path);
  if (field_or<std::string>(m, "format", "memse-network") != "memse-network")
    throw FormatError("not a network manifest");
  NetworkSpec spec;
  try {
    spec.input_shape = shape3(m.at("input_shape"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("input_shape: ") + e.what());
  }
  const auto blob_path = manifest_path.parent_path() / field<std::string>(m, "blob");
  const auto blob = read_blob(blob_path);

  std::size_t used = 0;
  Shape cur = spec.input_shape;
  if (!m.contains("layers") || !m["layers"].is_array()) throw FormatError("missing 'layers' array");
  for (const json& l : m["layers"]) {
    const auto type = field<std::string>(l, "type");
    try {
      if (type == "conv") {
        ConvLayer c;
        c.in_channels = field_or<Index>(l, "in_channels", cur.channels);
        c.out_channels = field<Index>(l, "out_channels");
        c.kernel_size = field<Index>(l, "kernel_size");
        c.stride = field_or<Index>(l, "stride", 1);
        c.padding = field_or<Index>(l, "padding", c.kernel_size / 2);
        const auto n = static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel_size * c.kernel_size);
        c.weights = slice(blob, region(l, "weights"), n, "conv weights");
        used += n;
        if (l.contains("bias")) {
          c.bias = to_vector(slice(blob, region(l, "bias"), static_cast<std::size_t>(c.out_channels), "conv bias"));
          used += static_cast<std::size_t>(c.out_channels);
        }
        spec.layers.emplace_back(std::move(c));
      } else if (type == "linear") {
        const Index in_f = field_or<Index>(l, "in_features", cur.size());
        const Index out_f = field<Index>(l, "out_features");
        const auto w = slice(blob, region(l, "weights"), static_cast<std::size_t>(in_f * out_f), "linear weights");
        used += w.size();
        LinearLayer lin;
        lin.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.data(), out_f, in_f);
        if (l.contains("bias")) {
          lin.bias = to_vector(slice(blob, region(l, "bias"), static_cast<std::size_t>(out_f), "linear bias"));
          used += static_cast<std::size_t>(out_f);
        }
        spec.layers.emplace_back(std::move(lin));
      } else if (type == "activation") {
        spec.layers.emplace_back(ActivationLayer{parse_activation(field<std::string>(l, "kind"))});
      } else if (type == "avgpool") {
        spec.layers.emplace_back(AvgPoolLayer{field<Index>(l, "window")});
      } else {
        throw FormatError("unsupported layer type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError("layer '" + type + "': " + e.what());
    }
    cur = output_shape(spec.layers.back(), cur);
  }
  if (used != blob.size())
    throw ShapeError("blob holds " + std::to_string(blob.size()) + " values but layers declare " +
                     std::to_string(used));
  validate(spec);
  return spec;
}

// Writes manifest + blob; the blob is named after the manifest stem.
inline void write_network(const NetworkSpec& spec, const fs::path& manifest_path) {
  validate(spec);
  std::vector<float> blob;
  json layers = json::array();
  auto push = [&](auto begin, auto end) {
    json r{{"offset", blob.size()}};
    for (auto it = begin; it != end; ++it) blob.push_back(static_cast<float>(*it));
    r["count"] = blob.size() - r["offset"].template get<std::size_t>();
    return r;
  };
  for (const auto& layer : spec.layers) {
    json l;
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      l = {{"type", "conv"},          {"in_channels", c->in_channels}, {"out_channels", c->out_channels},
           {"kernel_size", c->kernel_size}, {"stride", c->stride},   {"padding", c->padding}};
      l["weights"] = push(c->weights.begin(), c->weights.end());
      if (c->bias) l["bias"] = push(c->bias->begin(), c->bias->end());
    } else if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
      l = {{"type", "linear"}, {"in_features", lin->weights.cols()}, {"out_features", lin->weights.rows()}};
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = lin->weights;
      l["weights"] = push(rm.data(), rm.data() + rm.size());
      if (lin->bias) l["bias"] = push(lin->bias->begin(), lin->bias->end());
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      l = {{"type", "activation"}, {"kind", std::string(to_string(a->kind))}};
    } else {
      l = {{"type", "avgpool"}, {"window", std::get<AvgPoolLayer>(layer).window}};
    }
    layers.push_back(std::move(l));
  }
  const std::string blob_name = manifest_path.stem().string() + ".bin";
  json m{{"format", "memse-network"},
         {"version", 1},
         {"input_shape", {spec.input_shape.channels, spec.input_shape.height, spec.input_shape.width}},
         {"blob", blob_name},
         {"layers", std::move(layers)}};
  detail::write_blob(manifest_path.parent_path() / blob_name, blob);
  detail::write_json(manifest_path, m);
}

inline InputBatch parse_inputs(const fs::path& manifest_path) {
  using namespace detail;
  const json m = read_json(manifest_path);
  if (field_or<std::string>(m, "format", "memse-inputs") != "memse-inputs")
    throw FormatError("not an input manifest");
  const auto dims = field<std::vector<Index>>(m, "shape");
  if (dims.size() != 4) throw FormatError("input shape must be (batch, channels, height, width)");
  InputBatch batch;
  batch.shape = {dims[1], dims[2], dims[3]};
  const auto blob = read_blob(manifest_path.parent_path() / field<std::string>(m, "blob"));
  const auto per = static_cast<std::size_t>(batch.shape.size());
  const auto n = static_cast<std::size_t>(dims[0]);
  if (blob.size() != per * n)
    throw ShapeError("input blob holds " + std::to_string(blob.size()) + " values, shape needs " +
                     std::to_string(per * n));
  batch.samples.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    Vector v(static_cast<Index>(per));
    for (std::size_t i = 0; i < per; ++i) v[static_cast<Index>(i)] = blob[b * per + i];
    batch.samples.push_back(std::move(v));
  }
  if (m.contains("labels")) {
    batch.labels = field<std::vector<int>>(m, "labels");
    if (batch.labels->size() != n) throw ShapeError("label count does not match batch size");
  }
  return batch;
}

inline void write_inputs(const InputBatch& batch, const fs::path& manifest_path) {
  std::vector<float> blob;
  blob.reserve(batch.size() * static_cast<std::size_t>(batch.shape.size()));
  for (const auto& s : batch.samples) {
    if (s.size() != batch.shape.size()) throw ShapeError("sample length does not match batch shape");
    for (Index i = 0; i < s.size(); ++i) blob.push_back(static_cast<float>(s[i]));
  }
  const std::string blob_name = manifest_path.stem().string() + ".bin";
  json m{{"format", "memse-inputs"},
         {"version", 1},
         {"shape", {static_cast<Index>(batch.size()), batch.shape.channels, batch.shape.height, batch.shape.width}},
         {"blob", blob_name}};
  if (batch.labels) m["labels"] = *batch.labels;
  detail::write_blob(manifest_path.parent_path() / blob_name, blob);
  detail::write_json(manifest_path, m);
}

}  // namespace memse
