#ifndef ATTDICNN_MODEL_IO_HPP
#define ATTDICNN_MODEL_IO_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attdicnn/model.hpp"

// Checkpoint container: magic, length-prefixed JSON metadata (config, tensor
// shapes, seed, epoch, metric, parameter count), then the raw tensor payloads
// as little-endian IEEE-754 in registry order.
namespace attdicnn::model {

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'C', 'N', 'C', 'K', 'P', 'T'};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_classes", c.n_classes},
                     {"input_side", c.input_side},
                     {"conv_channels", c.conv_channels},
                     {"conv_dilations", c.conv_dilations},
                     {"lsfe_fc", c.lsfe_fc},
                     {"dropout", c.dropout},
                     {"heads", c.heads},
                     {"g2a_fc", c.g2a_fc},
                     {"batch_size", c.batch_size}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig defaults;
  c.n_classes = j.value("n_classes", defaults.n_classes);
  c.input_side = j.value("input_side", defaults.input_side);
  c.conv_channels = j.value("conv_channels", defaults.conv_channels);
  c.conv_dilations = j.value("conv_dilations", defaults.conv_dilations);
  c.lsfe_fc = j.value("lsfe_fc", defaults.lsfe_fc);
  c.dropout = j.value("dropout", defaults.dropout);
  c.heads = j.value("heads", defaults.heads);
  c.g2a_fc = j.value("g2a_fc", defaults.g2a_fc);
  c.batch_size = j.value("batch_size", defaults.batch_size);
}

namespace detail {

inline void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <typename T>
void append_scalar_le(std::string& out, T value) {
  if constexpr (sizeof(T) == 4) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  } else {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    append_u64_le(out, bits);
  }
}

template <typename T>
T read_scalar_le(const unsigned char* p) {
  if constexpr (sizeof(T) == 4) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<T>(bits);
  } else {
    return std::bit_cast<T>(read_u64_le(p));
  }
}

}  // namespace detail

struct CheckpointMeta {
  ModelConfig config;
  std::string dtype;  // "f32" | "f64"
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_accuracy = 0.0;
  std::size_t parameter_count = 0;
  std::vector<std::string> class_names;
};

template <typename T>
std::string serialize_checkpoint(const ModelState<T>& state, int epoch,
                                 double val_accuracy,
                                 const std::vector<std::string>& class_names = {}) {
  nlohmann::json meta;
  meta["format"] = "attdicnn-checkpoint";
  meta["version"] = 1;
  meta["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  meta["config"] = state.config;
  meta["seed"] = state.init_seed;
  meta["epoch"] = epoch;
  meta["val_accuracy"] = val_accuracy;
  meta["parameter_count"] = parameter_count(state.config);
  meta["class_names"] = class_names;
  nlohmann::json tensors = nlohmann::json::array();
  for (const TensorSpec& spec : tensor_specs(state.config))
    tensors.push_back({{"name", spec.name},
                       {"shape", spec.shape},
                       {"module", spec.module_tag},
                       {"weight", spec.is_weight}});
  meta["tensors"] = tensors;

  std::string json_text = meta.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::append_u64_le(out, json_text.size());
  out += json_text;
  for (const Tensor<T>* t : parameters(state))
    for (T v : t->data) detail::append_scalar_le(out, v);
  return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelState<T>& state, int epoch,
                     double val_accuracy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  std::string bytes = serialize_checkpoint(state, epoch, val_accuracy);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline CheckpointMeta peek_checkpoint_meta(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file");
  std::uint64_t json_len =
      detail::read_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 8);
  if (bytes.size() < 16 + json_len) throw std::runtime_error("truncated checkpoint metadata");
  nlohmann::json meta = nlohmann::json::parse(bytes.substr(16, json_len));
  CheckpointMeta out;
  out.config = meta.at("config").get<ModelConfig>();
  out.dtype = meta.at("dtype").get<std::string>();
  out.seed = meta.value("seed", std::uint64_t(0));
  out.epoch = meta.value("epoch", 0);
  out.val_accuracy = meta.value("val_accuracy", 0.0);
  out.parameter_count = meta.value("parameter_count", std::size_t(0));
  out.class_names = meta.value("class_names", std::vector<std::string>{});
  return out;
}

template <typename T>
ModelState<T> deserialize_checkpoint(const std::string& bytes,
                                     CheckpointMeta* meta_out = nullptr) {
  CheckpointMeta meta = peek_checkpoint_meta(bytes);
  if (meta_out) *meta_out = meta;

  std::uint64_t json_len =
      detail::read_u64_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 8);
  std::size_t offset = 16 + json_len;
  std::size_t scalar = meta.dtype == "f32" ? 4 : 8;
  std::size_t count = parameter_count(meta.config);
  if (bytes.size() - offset < count * scalar)
    throw std::runtime_error("truncated checkpoint payload: expected " +
                             std::to_string(count * scalar) + " bytes, found " +
                             std::to_string(bytes.size() - offset));

  ModelState<T> state = init_model<T>(meta.config, meta.seed);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  auto specs = tensor_specs(meta.config);
  std::size_t spec_idx = 0;
  for (Tensor<T>* t : parameters(state)) {
    for (T& v : t->data) {
      if (meta.dtype == "f32")
        v = static_cast<T>(detail::read_scalar_le<float>(p));
      else
        v = static_cast<T>(detail::read_scalar_le<double>(p));
      p += scalar;
      if (!std::isfinite(static_cast<double>(v)))
        throw std::runtime_error("non-finite value in checkpoint tensor " +
                                 specs[spec_idx].name);
    }
    ++spec_idx;
  }
  state.adam = AdamState<T>{};  // a frozen checkpoint carries no optimizer state
  return state;
}

template <typename T>
ModelState<T> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes, meta_out);
}

inline std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[160];
  for (const HistoryRow& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss,
                  r.train_acc, r.val_loss, r.val_acc);
    out += buf;
  }
  return out;
}

}  // namespace attdicnn::model

#endif
