// SPDX-FileCopyrightText: © 2026 The ttfs Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "ttfs/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ttfs/error.hpp"

namespace ttfs {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<Tensor> Dataset::inputs() const {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.input);
  return out;
}

bool Dataset::labeled() const {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.label.has_value(); });
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

class BlobWriter {
 public:
  json put(const Shape& shape, std::span<const double> values) {
    const std::size_t offset = bytes_.size();
    bytes_.resize(offset + values.size() * sizeof(double));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(values[i]);
      for (int b = 0; b < 8; ++b) {
        bytes_[offset + i * 8 + static_cast<std::size_t>(b)] =
            static_cast<std::uint8_t>(bits >> (8 * b));
      }
    }
    return json{{"shape", shape}, {"offset", offset}};
  }
  json put(const Tensor& t) { return put(t.shape(), t.data()); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  Tensor get(const json& ref, std::optional<std::size_t> layer, const std::string& field) {
    Shape shape;
    std::size_t offset = 0;
    try {
      shape = ref.at("shape").get<Shape>();
      offset = ref.at("offset").get<std::size_t>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Format, std::string("bad tensor reference: ") + e.what(), layer,
                  field);
    }
    const std::size_t count = shape_size(shape);
    if (offset % 8 != 0) throw Error(ErrorKind::Format, "offset is not 8-byte aligned", layer, field);
    if (offset > bytes_.size() || count > (bytes_.size() - offset) / 8) {
      throw Error(ErrorKind::Format, "tensor extends past the end of the blob", layer, field);
    }
    const std::size_t end = offset + count * 8;
    for (const auto& [lo, hi] : used_) {
      if (offset < hi && lo < end) {
        throw Error(ErrorKind::Format, "tensor overlaps another tensor in the blob", layer, field);
      }
    }
    if (count) used_.emplace_back(offset, end);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(bytes_[offset + i * 8 + static_cast<std::size_t>(b)])
                << (8 * b);
      }
      values[i] = std::bit_cast<double>(bits);
    }
    try {
      return Tensor(std::move(shape), std::move(values));
    } catch (const Error& e) {
      throw Error(e.kind(), e.what(), layer, field);
    }
  }

  std::vector<double> get_vector(const json& ref, std::optional<std::size_t> layer,
                                 const std::string& field) {
    return get(ref, layer, field).values();
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::vector<std::pair<std::size_t, std::size_t>> used_;
};

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

json read_manifest(const fs::path& path, const std::string& expected_format) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
  if (!m.is_object() || m.value("format", std::string{}) != expected_format) {
    throw Error(ErrorKind::Format, path.string() + " is not a " + expected_format + " manifest");
  }
  const int version = m.value("format_version", -1);
  if (version != kFormatVersion) {
    throw Error(ErrorKind::Format, "unsupported format_version " + std::to_string(version) +
                                       " (expected " + std::to_string(kFormatVersion) + ")");
  }
  return m;
}

BlobReader open_blob(const json& manifest, const fs::path& blob_path) {
  auto bytes = read_bytes(blob_path);
  std::uint64_t expected_size = 0;
  std::string expected_sum;
  try {
    expected_size = manifest.at("blob_bytes").get<std::uint64_t>();
    expected_sum = manifest.at("blob_checksum").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("manifest lacks blob description: ") + e.what());
  }
  const std::string actual_sum = hex64(fnv1a64(bytes));
  if (bytes.size() != expected_size || actual_sum != expected_sum) {
    throw Error(ErrorKind::Checksum, "blob " + blob_path.string() + " (" +
                                         std::to_string(bytes.size()) + " bytes, " + actual_sum +
                                         ") does not match manifest (" +
                                         std::to_string(expected_size) + " bytes, " +
                                         expected_sum + ")");
  }
  return BlobReader(std::move(bytes));
}

void write_files(json manifest, const std::string& format, const BlobWriter& blob,
                 const fs::path& manifest_path, const fs::path& blob_path) {
  manifest["format"] = format;
  manifest["format_version"] = kFormatVersion;
  manifest["blob_bytes"] = blob.bytes().size();
  manifest["blob_checksum"] = hex64(fnv1a64(blob.bytes()));
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  const fs::path blob_dir = blob_path.parent_path().empty() ? fs::path(".") : blob_path.parent_path();
  std::error_code ec;
  manifest["blob"] = fs::equivalent(dir, blob_dir, ec) ? blob_path.filename().string()
                                                       : fs::absolute(blob_path).string();
  {
    std::ofstream out(blob_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + blob_path.string());
    out.write(reinterpret_cast<const char*>(blob.bytes().data()),
              static_cast<std::streamsize>(blob.bytes().size()));
    if (!out) throw Error(ErrorKind::Io, "failed writing " + blob_path.string());
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing " + manifest_path.string());
}

std::string pool_modes_string(const std::vector<PoolMode>& modes) {
  std::string s;
  for (PoolMode m : modes) s += m == PoolMode::Max ? 'M' : 'm';
  return s;
}

std::vector<PoolMode> parse_pool_modes(const std::string& s, std::size_t layer) {
  std::vector<PoolMode> modes;
  for (char c : s) {
    if (c == 'M') modes.push_back(PoolMode::Max);
    else if (c == 'm') modes.push_back(PoolMode::Min);
    else throw Error(ErrorKind::Format, "pool modes must be 'M' or 'm'", layer, "modes");
  }
  return modes;
}

json encode_conv(const ConvMeta& m) {
  return json{{"kernel", {m.kernel_h, m.kernel_w}},
              {"stride", m.stride},
              {"padding", {m.pad_top, m.pad_bottom, m.pad_left, m.pad_right}}};
}

ConvMeta decode_conv(const json& j) {
  ConvMeta m;
  const auto kernel = j.at("kernel").get<std::vector<std::size_t>>();
  const auto pad = j.at("padding").get<std::vector<std::size_t>>();
  if (kernel.size() != 2 || pad.size() != 4) {
    throw Error(ErrorKind::Format, "conv kernel needs 2 entries and padding 4");
  }
  m.kernel_h = kernel[0];
  m.kernel_w = kernel[1];
  m.stride = j.at("stride").get<std::size_t>();
  m.pad_top = pad[0];
  m.pad_bottom = pad[1];
  m.pad_left = pad[2];
  m.pad_right = pad[3];
  return m;
}

json encode_network(const ReluNetwork& net, BlobWriter& blob) {
  json layers = json::array();
  for (const Layer& l : net.layers) {
    json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Conv2d:
        j["has_relu"] = l.has_relu;
        if (l.kind == LayerKind::Conv2d) j.update(encode_conv(l.conv));
        j["tensors"] = {{"weights", blob.put(l.weights)}, {"bias", blob.put(l.bias)}};
        break;
      case LayerKind::BatchNorm: {
        const std::size_t c = l.bn.channels();
        j["position"] = to_string(l.bn_position);
        j["epsilon"] = l.bn.epsilon;
        j["tensors"] = {{"mean", blob.put({c}, l.bn.mean)},
                        {"var", blob.put({c}, l.bn.var)},
                        {"gamma", blob.put({c}, l.bn.gamma)},
                        {"beta", blob.put({c}, l.bn.beta)}};
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::MinPool:
        j["window"] = l.pool.window;
        j["stride"] = l.pool.stride;
        j["modes"] = pool_modes_string(l.pool.modes);
        break;
      case LayerKind::Flatten:
        break;
    }
    layers.push_back(std::move(j));
  }
  return json{{"input_shape", net.input_shape},
              {"input_range", {net.range_low, net.range_high}},
              {"layers", std::move(layers)}};
}

LayerKind parse_kind(const std::string& s, std::size_t k) {
  for (LayerKind kind : {LayerKind::Dense, LayerKind::Conv2d, LayerKind::BatchNorm,
                         LayerKind::MaxPool, LayerKind::MinPool, LayerKind::Flatten}) {
    if (s == to_string(kind)) return kind;
  }
  throw Error(ErrorKind::Format, "unknown layer kind '" + s + "'", k, "kind");
}

ReluNetwork decode_network(const json& j, BlobReader& blob) {
  ReluNetwork net;
  try {
    net.input_shape = j.at("input_shape").get<Shape>();
    const auto range = j.at("input_range").get<std::vector<double>>();
    if (range.size() != 2) throw Error(ErrorKind::Format, "input_range must have two entries");
    net.range_low = range[0];
    net.range_high = range[1];
    const json& layers = j.at("layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const json& lj = layers[k];
      Layer l;
      l.kind = parse_kind(lj.at("kind").get<std::string>(), k);
      switch (l.kind) {
        case LayerKind::Dense:
        case LayerKind::Conv2d: {
          l.has_relu = lj.at("has_relu").get<bool>();
          if (l.kind == LayerKind::Conv2d) l.conv = decode_conv(lj);
          const json& t = lj.at("tensors");
          l.weights = blob.get(t.at("weights"), k, "weights");
          if (t.contains("bias")) {
            l.bias = blob.get(t.at("bias"), k, "bias");
          } else if (l.weights.rank() >= 1) {
            l.bias = Tensor({l.weights.dim(0)});
          }
          break;
        }
        case LayerKind::BatchNorm: {
          const std::string pos = lj.at("position").get<std::string>();
          if (pos == "before_relu") l.bn_position = BnPosition::BeforeRelu;
          else if (pos == "after_relu") l.bn_position = BnPosition::AfterRelu;
          else throw Error(ErrorKind::Format, "unknown bn position '" + pos + "'", k, "position");
          l.bn.epsilon = lj.at("epsilon").get<double>();
          const json& t = lj.at("tensors");
          l.bn.mean = blob.get_vector(t.at("mean"), k, "mean");
          l.bn.var = blob.get_vector(t.at("var"), k, "sigma_sq");
          l.bn.gamma = blob.get_vector(t.at("gamma"), k, "gamma");
          l.bn.beta = blob.get_vector(t.at("beta"), k, "beta");
          break;
        }
        case LayerKind::MaxPool:
        case LayerKind::MinPool:
          l.pool.window = lj.at("window").get<std::size_t>();
          l.pool.stride = lj.at("stride").get<std::size_t>();
          l.pool.modes = parse_pool_modes(lj.at("modes").get<std::string>(), k);
          break;
        case LayerKind::Flatten:
          break;
      }
      net.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed network manifest: ") + e.what());
  }
  validate(net);
  return net;
}

}  // namespace

fs::path blob_path_for(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + manifest_path.string());
  json m;
  try {
    in >> m;
    const fs::path blob = m.at("blob").get<std::string>();
    return blob.is_absolute() ? blob : manifest_path.parent_path() / blob;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, manifest_path.string() + ": " + e.what());
  }
}

void save_model(const ReluNetwork& net, const fs::path& manifest_path, const fs::path& blob_path) {
  validate(net);
  BlobWriter blob;
  json m = encode_network(net, blob);
  write_files(std::move(m), "ttfs.model", blob, manifest_path, blob_path);
}

ReluNetwork load_model(const fs::path& manifest_path, const fs::path& blob_path) {
  const json m = read_manifest(manifest_path, "ttfs.model");
  BlobReader blob = open_blob(m, blob_path);
  return decode_network(m, blob);
}

ReluNetwork load_model(const fs::path& manifest_path) {
  return load_model(manifest_path, blob_path_for(manifest_path));
}

void save_dataset(const Dataset& data, const fs::path& manifest_path, const fs::path& blob_path) {
  BlobWriter blob;
  json records = json::array();
  const bool labeled = data.labeled();
  for (const Sample& s : data.samples) {
    json r = blob.put(s.input);
    r["label"] = s.label ? json(*s.label) : json(nullptr);
    records.push_back(std::move(r));
  }
  json m{{"input_shape", data.input_shape}, {"labeled", labeled}, {"records", std::move(records)}};
  write_files(std::move(m), "ttfs.dataset", blob, manifest_path, blob_path);
}

Dataset load_dataset(const fs::path& manifest_path, const fs::path& blob_path) {
  const json m = read_manifest(manifest_path, "ttfs.dataset");
  BlobReader blob = open_blob(m, blob_path);
  Dataset data;
  try {
    data.input_shape = m.at("input_shape").get<Shape>();
    const bool labeled = m.at("labeled").get<bool>();
    const json& records = m.at("records");
    data.samples.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const json& r = records[i];
      Sample s;
      try {
        s.input = blob.get(r, std::nullopt, "record " + std::to_string(i));
      } catch (const Error& e) {
        throw Error(ErrorKind::Data, "record " + std::to_string(i) + ": " + e.what());
      }
      if (s.input.shape() != data.input_shape) {
        throw Error(ErrorKind::Data, "record " + std::to_string(i) + " has shape " +
                                         shape_to_string(s.input.shape()) + ", expected " +
                                         shape_to_string(data.input_shape));
      }
      if (r.contains("label") && !r.at("label").is_null()) {
        s.label = r.at("label").get<std::size_t>();
      } else if (labeled) {
        throw Error(ErrorKind::Data, "record " + std::to_string(i) + " of a labeled dataset has no label");
      }
      data.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed dataset manifest: ") + e.what());
  }
  return data;
}

Dataset load_dataset(const fs::path& manifest_path) {
  return load_dataset(manifest_path, blob_path_for(manifest_path));
}

void save_scaled(const ScaledNetwork& scaled, const fs::path& manifest_path,
                 const fs::path& blob_path) {
  BlobWriter blob;
  json factors = json::array();
  for (const auto& f : scaled.scale_factors) {
    factors.push_back(f.empty() ? json(nullptr) : blob.put({f.size()}, f));
  }
  const auto& h = scaled.hyper;
  json m{{"network", encode_network(scaled.net, blob)},
         {"source_range", {scaled.source_low, scaled.source_high}},
         {"scale_factors", std::move(factors)},
         {"layer_max", scaled.layer_max},
         {"calibrated", scaled.calibrated},
         {"hyper",
          {{"delta", h.delta},
           {"b_low", h.b_low},
           {"zeta", h.zeta},
           {"b_floor", h.b_floor},
           {"bound_positive_sum", h.bound_positive_sum}}}};
  write_files(std::move(m), "ttfs.scaled", blob, manifest_path, blob_path);
}

ScaledNetwork load_scaled(const fs::path& manifest_path) {
  const json m = read_manifest(manifest_path, "ttfs.scaled");
  BlobReader blob = open_blob(m, blob_path_for(manifest_path));
  ScaledNetwork s;
  s.net = decode_network(m.at("network"), blob);
  try {
    const auto range = m.at("source_range").get<std::vector<double>>();
    s.source_low = range.at(0);
    s.source_high = range.at(1);
    const json& factors = m.at("scale_factors");
    for (std::size_t k = 0; k < factors.size(); ++k) {
      s.scale_factors.push_back(factors[k].is_null() ? std::vector<double>{}
                                                     : blob.get_vector(factors[k], k, "scale_factors"));
    }
    s.layer_max = m.at("layer_max").get<std::vector<double>>();
    s.calibrated = m.at("calibrated").get<bool>();
    const json& h = m.at("hyper");
    s.hyper.delta = h.at("delta").get<double>();
    s.hyper.b_low = h.at("b_low").get<double>();
    s.hyper.zeta = h.at("zeta").get<double>();
    s.hyper.b_floor = h.at("b_floor").get<double>();
    s.hyper.bound_positive_sum = h.at("bound_positive_sum").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed scaled-network manifest: ") + e.what());
  }
  if (s.scale_factors.size() != s.net.layers.size() || s.layer_max.size() != s.net.layers.size()) {
    throw Error(ErrorKind::Format, "per-layer arrays do not match the layer count");
  }
  return s;
}

namespace {

const char* to_string(SnnLayerKind k) {
  switch (k) {
    case SnnLayerKind::Neuron: return "neuron";
    case SnnLayerKind::Pool: return "pool";
    case SnnLayerKind::Flatten: return "flatten";
    case SnnLayerKind::Readout: return "readout";
  }
  return "unknown";
}

SnnLayerKind parse_snn_kind(const std::string& s, std::size_t k) {
  for (SnnLayerKind kind : {SnnLayerKind::Neuron, SnnLayerKind::Pool, SnnLayerKind::Flatten,
                            SnnLayerKind::Readout}) {
    if (s == to_string(kind)) return kind;
  }
  throw Error(ErrorKind::Format, "unknown spiking layer kind '" + s + "'", k, "kind");
}

}  // namespace

void save_snn(const SnnNetwork& snn, const fs::path& manifest_path, const fs::path& blob_path) {
  BlobWriter blob;
  json layers = json::array();
  for (const SnnLayer& l : snn.layers) {
    json j{{"kind", to_string(l.kind)},
           {"in_shape", l.in_shape},
           {"out_shape", l.out_shape},
           {"t_min_prev", l.t_min_prev},
           {"t_min", l.t_min},
           {"t_max", l.t_max}};
    switch (l.kind) {
      case SnnLayerKind::Neuron:
      case SnnLayerKind::Readout:
        j["geometry"] = to_string(l.geometry);
        if (l.geometry == LayerKind::Conv2d) j["conv"] = encode_conv(l.conv);
        j["tensors"] = {{"weights", blob.put(l.weights)}, {"alpha", blob.put(l.alpha)}};
        if (l.kind == SnnLayerKind::Neuron) j["tensors"]["threshold"] = blob.put(l.threshold);
        break;
      case SnnLayerKind::Pool:
        j["window"] = l.pool.window;
        j["stride"] = l.pool.stride;
        j["modes"] = pool_modes_string(l.pool.modes);
        j["inputs"] = l.pool_inputs;
        j["theta"] = l.pool_theta;
        j["k_max"] = l.pool_k_max;
        j["k_min"] = l.pool_k_min;
        break;
      case SnnLayerKind::Flatten:
        break;
    }
    layers.push_back(std::move(j));
  }
  json m{{"input_shape", snn.input_shape},
         {"variant", to_string(snn.variant)},
         {"zeta", snn.zeta},
         {"layers", std::move(layers)}};
  write_files(std::move(m), "ttfs.snn", blob, manifest_path, blob_path);
}

SnnNetwork load_snn(const fs::path& manifest_path) {
  const json m = read_manifest(manifest_path, "ttfs.snn");
  BlobReader blob = open_blob(m, blob_path_for(manifest_path));
  SnnNetwork snn;
  try {
    snn.input_shape = m.at("input_shape").get<Shape>();
    snn.variant = variant_from_string(m.at("variant").get<std::string>());
    snn.zeta = m.at("zeta").get<double>();
    const json& layers = m.at("layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const json& j = layers[k];
      SnnLayer l;
      l.kind = parse_snn_kind(j.at("kind").get<std::string>(), k);
      l.in_shape = j.at("in_shape").get<Shape>();
      l.out_shape = j.at("out_shape").get<Shape>();
      l.t_min_prev = j.at("t_min_prev").get<double>();
      l.t_min = j.at("t_min").get<double>();
      l.t_max = j.at("t_max").get<double>();
      switch (l.kind) {
        case SnnLayerKind::Neuron:
        case SnnLayerKind::Readout: {
          l.geometry = parse_kind(j.at("geometry").get<std::string>(), k);
          if (l.geometry == LayerKind::Conv2d) l.conv = decode_conv(j.at("conv"));
          const json& t = j.at("tensors");
          l.weights = blob.get(t.at("weights"), k, "weights");
          l.alpha = blob.get(t.at("alpha"), k, "alpha");
          if (l.kind == SnnLayerKind::Neuron) l.threshold = blob.get(t.at("threshold"), k, "threshold");
          break;
        }
        case SnnLayerKind::Pool:
          l.pool.window = j.at("window").get<std::size_t>();
          l.pool.stride = j.at("stride").get<std::size_t>();
          l.pool.modes = parse_pool_modes(j.at("modes").get<std::string>(), k);
          l.pool_inputs = j.at("inputs").get<std::size_t>();
          l.pool_theta = j.at("theta").get<double>();
          l.pool_k_max = j.at("k_max").get<double>();
          l.pool_k_min = j.at("k_min").get<double>();
          break;
        case SnnLayerKind::Flatten:
          break;
      }
      snn.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed spiking-network manifest: ") + e.what());
  }
  validate(snn);
  return snn;
}

}  // namespace ttfs
