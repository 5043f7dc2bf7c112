#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tzsl/dataspace.hpp"
#include "tzsl/errors.hpp"
#include "tzsl/matrix.hpp"
#include "tzsl/net.hpp"

namespace tzsl {

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; big-endian hosts are unsupported");

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- raw little-endian blobs ----------------------------------------------

inline void write_bytes(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

inline std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("missing file '" + path.string() + "'");
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(n));
  in.read(buf.data(), n);
  if (!in) throw DataError("short read from '" + path.string() + "'");
  return buf;
}

template <class T>
void write_blob_f32(const fs::path& path, const Mat<T>& m) {
  std::vector<float> payload(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) payload[i] = static_cast<float>(m.data[i]);
  write_bytes(path, payload.data(), payload.size() * sizeof(float));
}

inline void write_blob_i32(const fs::path& path, const std::vector<int>& v) {
  std::vector<std::int32_t> payload(v.begin(), v.end());
  write_bytes(path, payload.data(), payload.size() * sizeof(std::int32_t));
}

template <class T>
Mat<T> read_blob_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
  const std::vector<char> buf = read_bytes(path);
  if (buf.size() != rows * cols * sizeof(float))
    throw DataError("shape mismatch: '" + path.string() + "' holds " +
                    std::to_string(buf.size() / sizeof(float)) + " f32 values, manifest declares " +
                    std::to_string(rows * cols));
  Mat<T> m(rows, cols);
  const float* p = reinterpret_cast<const float*>(buf.data());
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = static_cast<T>(p[i]);
  return m;
}

inline std::vector<int> read_blob_i32(const fs::path& path, std::size_t count) {
  const std::vector<char> buf = read_bytes(path);
  if (buf.size() != count * sizeof(std::int32_t))
    throw DataError("shape mismatch: '" + path.string() + "' holds " +
                    std::to_string(buf.size() / sizeof(std::int32_t)) +
                    " i32 values, manifest declares " + std::to_string(count));
  std::vector<int> v(count);
  const std::int32_t* p = reinterpret_cast<const std::int32_t*>(buf.data());
  for (std::size_t i = 0; i < count; ++i) v[i] = p[i];
  return v;
}

// ---- dataset directory ------------------------------------------------------
//
// manifest.json maps entry names to { "file": <relative>, "dtype": "f32"|"i32",
// "shape": [rows, cols] } (1-D entries use shape [rows]). Blobs are raw
// little-endian row-major values with no header.

struct DatasetLoadOptions {
  FeatureNorm feature_norm = FeatureNorm::kL2;
  double radius = 1.0;
  bool prepare = true;  // false: return raw payloads (tooling)
};

namespace detail {

inline json manifest_entry(const std::string& file, const char* dtype,
                           std::vector<std::size_t> shape) {
  json e;
  e["file"] = file;
  e["dtype"] = dtype;
  e["shape"] = shape;
  return e;
}

inline const json& require_entry(const json& manifest, const std::string& key) {
  if (!manifest.contains(key))
    throw DataError("dataset manifest: missing required entry '" + key + "'");
  return manifest.at(key);
}

struct EntrySpec {
  fs::path file;
  std::string dtype;
  std::vector<std::size_t> shape;
};

inline EntrySpec parse_entry(const json& e, const fs::path& dir, const std::string& key) {
  if (!e.is_object() || !e.contains("file") || !e.contains("dtype") || !e.contains("shape"))
    throw DataError("dataset manifest: malformed entry '" + key + "'");
  EntrySpec spec;
  spec.file = dir / e.at("file").get<std::string>();
  spec.dtype = e.at("dtype").get<std::string>();
  spec.shape = e.at("shape").get<std::vector<std::size_t>>();
  return spec;
}

template <class T>
Mat<T> load_matrix_entry(const json& manifest, const fs::path& dir, const std::string& key) {
  EntrySpec spec = parse_entry(require_entry(manifest, key), dir, key);
  if (spec.dtype != "f32") throw DataError("dataset manifest: entry '" + key + "' must be f32");
  if (spec.shape.size() != 2)
    throw DataError("dataset manifest: entry '" + key + "' must be 2-D");
  Mat<T> m = read_blob_f32<T>(spec.file, spec.shape[0], spec.shape[1]);
  if (!m.all_finite())
    throw DataError("non-finite value in blob for entry '" + key + "'");
  return m;
}

inline std::vector<int> load_label_entry(const json& manifest, const fs::path& dir,
                                         const std::string& key) {
  EntrySpec spec = parse_entry(require_entry(manifest, key), dir, key);
  if (spec.dtype != "i32") throw DataError("dataset manifest: entry '" + key + "' must be i32");
  if (spec.shape.size() != 1)
    throw DataError("dataset manifest: entry '" + key + "' must be 1-D");
  return read_blob_i32(spec.file, spec.shape[0]);
}

}  // namespace detail

template <class T>
void save_dataset(const fs::path& dir, const SplitDataset<T>& ds) {
  fs::create_directories(dir);
  json manifest;
  auto put_mat = [&](const char* key, const Mat<T>& m) {
    const std::string file = std::string(key) + ".bin";
    write_blob_f32(dir / file, m);
    manifest[key] = detail::manifest_entry(file, "f32", {m.rows, m.cols});
  };
  auto put_labels = [&](const char* key, const std::vector<int>& v) {
    const std::string file = std::string(key) + ".bin";
    write_blob_i32(dir / file, v);
    manifest[key] = detail::manifest_entry(file, "i32", {v.size()});
  };
  put_mat("seen_features", ds.seen_features);
  put_labels("seen_labels", ds.seen_labels);
  put_mat("unseen_features", ds.unseen_features);
  put_mat("seen_attributes", ds.seen_attributes);
  put_mat("unseen_attributes", ds.unseen_attributes);
  if (ds.has_eval_labels()) put_labels("unseen_labels_eval", ds.unseen_labels_eval);
  if (ds.has_seen_test()) {
    put_mat("seen_test_features", ds.seen_test_features);
    put_labels("seen_test_labels", ds.seen_test_labels);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write dataset manifest in '" + dir.string() + "'");
}

template <class T>
SplitDataset<T> load_dataset(const fs::path& dir, const DatasetLoadOptions& opts = {}) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing file '" + manifest_path.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("dataset manifest is not valid JSON: " + std::string(e.what()));
  }

  SplitDataset<T> ds;
  ds.seen_features = detail::load_matrix_entry<T>(manifest, dir, "seen_features");
  ds.seen_labels = detail::load_label_entry(manifest, dir, "seen_labels");
  ds.unseen_features = detail::load_matrix_entry<T>(manifest, dir, "unseen_features");
  ds.seen_attributes = detail::load_matrix_entry<T>(manifest, dir, "seen_attributes");
  ds.unseen_attributes = detail::load_matrix_entry<T>(manifest, dir, "unseen_attributes");
  if (manifest.contains("unseen_labels_eval"))
    ds.unseen_labels_eval = detail::load_label_entry(manifest, dir, "unseen_labels_eval");
  if (manifest.contains("seen_test_features")) {
    ds.seen_test_features = detail::load_matrix_entry<T>(manifest, dir, "seen_test_features");
    ds.seen_test_labels = detail::load_label_entry(manifest, dir, "seen_test_labels");
  }
  validate_dataset(ds);
  if (opts.prepare) ds = prepare_dataset(std::move(ds), opts.feature_norm,
                                         static_cast<T>(opts.radius));
  return ds;
}

// ---- checkpoints -------------------------------------------------------------
//
// manifest.json names each net; parameters are per-layer little-endian f32
// blobs with the same conventions as the dataset format.

namespace detail {

inline json head_to_json(const Head& h) {
  json j;
  switch (h.kind) {
    case HeadKind::kLinear: j["kind"] = "linear"; break;
    case HeadKind::kL2Norm: j["kind"] = "l2"; j["radius"] = h.radius; break;
    case HeadKind::kSigmoid: j["kind"] = "sigmoid"; break;
    case HeadKind::kGaussian: j["kind"] = "gaussian"; j["k"] = h.gaussian_dim; break;
  }
  return j;
}

inline Head head_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") return Head::linear();
  if (kind == "l2") return Head::l2(j.at("radius").get<double>());
  if (kind == "sigmoid") return Head::sigmoid();
  if (kind == "gaussian") return Head::gaussian(j.at("k").get<int>());
  throw DataError("checkpoint: unknown head kind '" + kind + "'");
}

template <class T>
json save_net(const fs::path& dir, const std::string& name, const DenseNet<T>& net) {
  json j;
  j["head"] = head_to_json(net.head);
  j["leaky_slope"] = static_cast<double>(net.leaky_slope);
  json layers = json::array();
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const std::string wf = name + "_l" + std::to_string(l) + "_w.bin";
    const std::string bf = name + "_l" + std::to_string(l) + "_b.bin";
    write_blob_f32(dir / wf, net.layers[l].weight);
    write_blob_f32(dir / bf, net.layers[l].bias);
    json layer;
    layer["weight"] = manifest_entry(wf, "f32", {net.layers[l].weight.rows,
                                                 net.layers[l].weight.cols});
    layer["bias"] = manifest_entry(bf, "f32", {net.layers[l].bias.rows, net.layers[l].bias.cols});
    layers.push_back(layer);
  }
  j["layers"] = layers;
  return j;
}

template <class T>
DenseNet<T> load_net(const fs::path& dir, const json& j) {
  DenseNet<T> net;
  net.head = head_from_json(j.at("head"));
  net.leaky_slope = static_cast<T>(j.at("leaky_slope").get<double>());
  for (const json& layer : j.at("layers")) {
    EntrySpec ws = parse_entry(layer.at("weight"), dir, "weight");
    EntrySpec bs = parse_entry(layer.at("bias"), dir, "bias");
    typename DenseNet<T>::Layer l;
    l.weight = read_blob_f32<T>(ws.file, ws.shape[0], ws.shape[1]);
    l.bias = read_blob_f32<T>(bs.file, bs.shape[0], bs.shape[1]);
    net.layers.push_back(std::move(l));
  }
  validate_layer_chain(net);
  return net;
}

}  // namespace detail

template <class T>
void save_checkpoint(const fs::path& dir, const ModelSet<T>& models, const ClassPrior& prior,
                     const json& config_echo = json::object()) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "tzsl-checkpoint-v1";
  manifest["d_v"] = models.d_v;
  manifest["d_a"] = models.d_a;
  manifest["latent_dim"] = models.latent_dim;
  json nets;
  nets["encoder"] = detail::save_net(dir, "encoder", models.encoder);
  nets["generator"] = detail::save_net(dir, "generator", models.generator);
  nets["regressor"] = detail::save_net(dir, "regressor", models.regressor);
  nets["critic_seen"] = detail::save_net(dir, "critic_seen", models.critic_seen);
  nets["critic_unseen"] = detail::save_net(dir, "critic_unseen", models.critic_unseen);
  nets["critic_attr"] = detail::save_net(dir, "critic_attr", models.critic_attr);
  manifest["nets"] = nets;
  manifest["prior"] = prior.probs;
  manifest["config"] = config_echo;
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write checkpoint manifest in '" + dir.string() + "'");
}

template <class T>
struct Checkpoint {
  ModelSet<T> models;
  ClassPrior prior;
  json config_echo;
};

template <class T>
Checkpoint<T> load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing file '" + manifest_path.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "tzsl-checkpoint-v1")
    throw DataError("checkpoint: unrecognized format tag");
  Checkpoint<T> ck;
  const json& nets = manifest.at("nets");
  ck.models.encoder = detail::load_net<T>(dir, nets.at("encoder"));
  ck.models.generator = detail::load_net<T>(dir, nets.at("generator"));
  ck.models.regressor = detail::load_net<T>(dir, nets.at("regressor"));
  ck.models.critic_seen = detail::load_net<T>(dir, nets.at("critic_seen"));
  ck.models.critic_unseen = detail::load_net<T>(dir, nets.at("critic_unseen"));
  ck.models.critic_attr = detail::load_net<T>(dir, nets.at("critic_attr"));
  ck.models.d_v = manifest.at("d_v").get<std::size_t>();
  ck.models.d_a = manifest.at("d_a").get<std::size_t>();
  ck.models.latent_dim = manifest.at("latent_dim").get<std::size_t>();
  ck.prior.probs = manifest.at("prior").get<std::vector<double>>();
  ck.config_echo = manifest.value("config", json::object());
  return ck;
}

}  // namespace tzsl
