#ifndef ATTDICNN_MODEL_HPP
#define ATTDICNN_MODEL_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "attdicnn/nn.hpp"
#include "attdicnn/rng.hpp"
#include "attdicnn/tensor.hpp"

// Network assembly: a local feature extractor (stacked plain and dilated
// convolutions), a double self-attention block over the resulting token, an
// averaging head, and the training loop that drives them.
namespace attdicnn::model {

struct ModelConfig {
  int n_classes = 5;
  int input_side = 128;
  std::vector<int> conv_channels = {16, 32, 64, 128};
  std::vector<int> conv_dilations = {1, 1, 2, 2};
  std::vector<int> lsfe_fc = {256, 128};
  double dropout = 0.5;
  int heads = 3;
  std::vector<int> g2a_fc = {512, 128, 64, 32};
  int batch_size = 32;

  int d_model() const { return lsfe_fc.back(); }
  int head_dim() const { return d_model() / heads; }

  void validate() const {
    if (n_classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (input_side < 3) throw std::invalid_argument("input side too small");
    if (conv_channels.empty() || conv_channels.size() != conv_dilations.size())
      throw std::invalid_argument("conv channel/dilation lists must match");
    if (lsfe_fc.empty() || g2a_fc.empty())
      throw std::invalid_argument("fully connected stacks must be non-empty");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("dropout rate must lie in [0, 1)");
    if (heads < 1 || d_model() / heads < 1)
      throw std::invalid_argument("head count incompatible with model width");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  }
};

// Spatial dims through the conv/pool ladder; throws when the input is too
// small for the configured stack.
struct LsfeDims {
  std::vector<std::pair<std::size_t, std::size_t>> conv_out;  // after each conv
  std::vector<std::pair<std::size_t, std::size_t>> pool_out;  // after each pool
  std::size_t flatten = 0;
};

inline LsfeDims lsfe_dims(const ModelConfig& cfg) {
  LsfeDims d;
  std::size_t h = static_cast<std::size_t>(cfg.input_side), w = h;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    auto [oh, ow] =
        nn::conv2d_output_dims(h, w, 2, 2, static_cast<std::size_t>(cfg.conv_dilations[i]));
    d.conv_out.emplace_back(oh, ow);
    if (oh < 2 || ow < 2)
      throw std::invalid_argument("conv stage " + std::to_string(i) +
                                  " output too small to pool: " + std::to_string(oh) +
                                  "x" + std::to_string(ow));
    h = oh / 2;
    w = ow / 2;
    d.pool_out.emplace_back(h, w);
    if (h < 1 || w < 1)
      throw std::invalid_argument("pool stage " + std::to_string(i) + " collapsed");
  }
  d.flatten = static_cast<std::size_t>(cfg.conv_channels.back()) * h * w;
  return d;
}

// --------------------------------------------------------- tensor registry --

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::string module_tag;  // "lsfe" | "s2tlr" | "g2a"
  bool is_weight = true;   // false for biases (weight-distribution export)
};

inline std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg) {
  cfg.validate();
  LsfeDims dims = lsfe_dims(cfg);
  std::vector<TensorSpec> specs;

  std::size_t c_in = 1;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    std::size_t c_out = static_cast<std::size_t>(cfg.conv_channels[i]);
    specs.push_back({"conv" + std::to_string(i) + "_w", {c_out, c_in, 2, 2}, "lsfe", true});
    specs.push_back({"conv" + std::to_string(i) + "_b", {c_out}, "lsfe", false});
    c_in = c_out;
  }
  std::size_t in = dims.flatten;
  for (std::size_t i = 0; i < cfg.lsfe_fc.size(); ++i) {
    std::size_t out = static_cast<std::size_t>(cfg.lsfe_fc[i]);
    specs.push_back({"lsfe_fc" + std::to_string(i) + "_w", {in, out}, "lsfe", true});
    specs.push_back({"lsfe_fc" + std::to_string(i) + "_b", {out}, "lsfe", false});
    in = out;
  }

  std::size_t dm = static_cast<std::size_t>(cfg.d_model());
  std::size_t dk = static_cast<std::size_t>(cfg.head_dim());
  for (int block = 1; block <= 2; ++block) {
    std::string prefix = "mha" + std::to_string(block) + "_";
    for (int h = 0; h < cfg.heads; ++h) {
      std::string hp = prefix + "h" + std::to_string(h) + "_";
      specs.push_back({hp + "wq", {dm, dk}, "s2tlr", true});
      specs.push_back({hp + "bq", {dk}, "s2tlr", false});
      specs.push_back({hp + "wk", {dm, dk}, "s2tlr", true});
      specs.push_back({hp + "bk", {dk}, "s2tlr", false});
      specs.push_back({hp + "wv", {dm, dk}, "s2tlr", true});
      specs.push_back({hp + "bv", {dk}, "s2tlr", false});
    }
    specs.push_back({prefix + "wo", {static_cast<std::size_t>(cfg.heads) * dk, dm},
                     "s2tlr", true});
    specs.push_back({prefix + "bo", {dm}, "s2tlr", false});
  }

  in = dm;
  for (std::size_t i = 0; i < cfg.g2a_fc.size(); ++i) {
    std::size_t out = static_cast<std::size_t>(cfg.g2a_fc[i]);
    specs.push_back({"g2a_fc" + std::to_string(i) + "_w", {in, out}, "g2a", true});
    specs.push_back({"g2a_fc" + std::to_string(i) + "_b", {out}, "g2a", false});
    in = out;
  }
  specs.push_back({"logits_w", {in, static_cast<std::size_t>(cfg.n_classes)}, "g2a", true});
  specs.push_back({"logits_b", {static_cast<std::size_t>(cfg.n_classes)}, "g2a", false});
  return specs;
}

inline std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t total = 0;
  for (const TensorSpec& s : tensor_specs(cfg)) total += Tensor<float>::numel(s.shape);
  return total;
}

// ------------------------------------------------------------- model state --

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  long step = 0;
};

template <typename T>
struct ModelState {
  ModelConfig config;
  std::uint64_t init_seed = 13;

  std::vector<Tensor<T>> conv_w, conv_b;
  std::vector<Tensor<T>> fc_w, fc_b;
  nn::AttentionParams<T> mha1, mha2;
  std::vector<Tensor<T>> head_w, head_b;  // g2a stack + final logits layer

  AdamState<T> adam;
};

template <typename T>
std::vector<Tensor<T>*> parameters(ModelState<T>& s) {
  std::vector<Tensor<T>*> out;
  for (std::size_t i = 0; i < s.conv_w.size(); ++i) {
    out.push_back(&s.conv_w[i]);
    out.push_back(&s.conv_b[i]);
  }
  for (std::size_t i = 0; i < s.fc_w.size(); ++i) {
    out.push_back(&s.fc_w[i]);
    out.push_back(&s.fc_b[i]);
  }
  for (nn::AttentionParams<T>* mha : {&s.mha1, &s.mha2}) {
    for (std::size_t h = 0; h < mha->heads; ++h) {
      out.push_back(&mha->w_q[h]);
      out.push_back(&mha->b_q[h]);
      out.push_back(&mha->w_k[h]);
      out.push_back(&mha->b_k[h]);
      out.push_back(&mha->w_v[h]);
      out.push_back(&mha->b_v[h]);
    }
    out.push_back(&mha->w_o);
    out.push_back(&mha->b_o);
  }
  for (std::size_t i = 0; i < s.head_w.size(); ++i) {
    out.push_back(&s.head_w[i]);
    out.push_back(&s.head_b[i]);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> parameters(const ModelState<T>& s) {
  auto mut = parameters(const_cast<ModelState<T>&>(s));
  return {mut.begin(), mut.end()};
}

// Seeded Glorot-uniform weights, zero biases, in registry order.
template <typename T>
ModelState<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelState<T> s;
  s.config = cfg;
  s.init_seed = seed;

  auto specs = tensor_specs(cfg);
  std::size_t dm = static_cast<std::size_t>(cfg.d_model());
  std::size_t dk = static_cast<std::size_t>(cfg.head_dim());
  for (nn::AttentionParams<T>* mha : {&s.mha1, &s.mha2}) {
    mha->heads = static_cast<std::size_t>(cfg.heads);
    mha->d_model = dm;
    mha->d_k = mha->d_v = dk;
  }

  // Materialize tensors in spec order, then hand out storage per component.
  std::vector<Tensor<T>> made;
  Rng rng(seed);
  for (const TensorSpec& spec : specs) {
    Tensor<T> t(spec.shape);
    if (spec.is_weight) {
      double fan_in, fan_out;
      if (spec.shape.size() == 4) {  // conv kernels
        fan_in = static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]);
        fan_out = static_cast<double>(spec.shape[0] * spec.shape[2] * spec.shape[3]);
      } else {
        fan_in = static_cast<double>(spec.shape[0]);
        fan_out = static_cast<double>(spec.shape[1]);
      }
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (T& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    made.push_back(std::move(t));
  }

  std::size_t idx = 0;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    s.conv_w.push_back(std::move(made[idx++]));
    s.conv_b.push_back(std::move(made[idx++]));
  }
  for (std::size_t i = 0; i < cfg.lsfe_fc.size(); ++i) {
    s.fc_w.push_back(std::move(made[idx++]));
    s.fc_b.push_back(std::move(made[idx++]));
  }
  for (nn::AttentionParams<T>* mha : {&s.mha1, &s.mha2}) {
    for (int h = 0; h < cfg.heads; ++h) {
      (void)h;
      mha->w_q.push_back(std::move(made[idx++]));
      mha->b_q.push_back(std::move(made[idx++]));
      mha->w_k.push_back(std::move(made[idx++]));
      mha->b_k.push_back(std::move(made[idx++]));
      mha->w_v.push_back(std::move(made[idx++]));
      mha->b_v.push_back(std::move(made[idx++]));
    }
    mha->w_o = std::move(made[idx++]);
    mha->b_o = std::move(made[idx++]);
  }
  std::size_t n_head_layers = cfg.g2a_fc.size() + 1;  // stack plus logits layer
  for (std::size_t i = 0; i < n_head_layers; ++i) {
    s.head_w.push_back(std::move(made[idx++]));
    s.head_b.push_back(std::move(made[idx++]));
  }
  return s;
}

template <typename T>
using Gradients = std::vector<Tensor<T>>;  // parallel to parameters()

template <typename T>
Gradients<T> zero_gradients(const ModelState<T>& s) {
  Gradients<T> g;
  for (const Tensor<T>* p : parameters(s)) g.push_back(Tensor<T>(p->shape));
  return g;
}

// ----------------------------------------------------------------- forward --

template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> conv_in;      // input to each conv
  std::vector<Tensor<T>> conv_preact;  // conv output before relu
  std::vector<Tensor<T>> relu_out;
  std::vector<nn::PoolResult<T>> pool;
  Tensor<T> flat;
  std::vector<Tensor<T>> fc_in, fc_preact;
  Tensor<T> lsfe_out;          // after dropout
  nn::DropoutMask mask;        // empty keep == no dropout
  Tensor<T> token;             // [1, d_model]
  nn::MhaCache<T> mha1_cache, mha2_cache;
  Tensor<T> a_st, a_tt, averaged;
  std::vector<Tensor<T>> head_in, head_preact;
  Tensor<T> logits;
};

// image [side, side] or [1, side, side]; returns logits [n_classes].
// In train mode a dropout mask must be supplied when the rate is nonzero.
template <typename T>
Tensor<T> attdicnn_forward(const Tensor<T>& image, const ModelState<T>& s, nn::Mode mode,
                           const nn::DropoutMask* mask = nullptr,
                           ForwardCache<T>* cache = nullptr) {
  const ModelConfig& cfg = s.config;
  std::size_t side = static_cast<std::size_t>(cfg.input_side);

  Tensor<T> x;
  if (image.shape.size() == 2 && image.shape[0] == side && image.shape[1] == side) {
    x = image;
    x.shape = {1, side, side};
  } else if (image.shape.size() == 3 && image.shape[0] == 1 && image.shape[1] == side &&
             image.shape[2] == side) {
    x = image;
  } else {
    throw std::invalid_argument("expected a " + std::to_string(side) + "x" +
                                std::to_string(side) + " single-channel image, got " +
                                shape_string(image.shape));
  }

  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.conv_in.clear();
  c.conv_preact.clear();
  c.relu_out.clear();
  c.pool.clear();
  c.fc_in.clear();
  c.fc_preact.clear();
  c.head_in.clear();
  c.head_preact.clear();

  for (std::size_t i = 0; i < s.conv_w.size(); ++i) {
    c.conv_in.push_back(x);
    Tensor<T> z = nn::conv2d(x, s.conv_w[i], s.conv_b[i],
                             static_cast<std::size_t>(cfg.conv_dilations[i]));
    c.conv_preact.push_back(z);
    Tensor<T> a = nn::relu(z);
    c.relu_out.push_back(a);
    auto pooled = nn::maxpool2d(a);
    x = pooled.output;
    c.pool.push_back(std::move(pooled));
  }

  x.shape = {x.data.size()};  // row-major flatten
  c.flat = x;

  for (std::size_t i = 0; i < s.fc_w.size(); ++i) {
    c.fc_in.push_back(x);
    Tensor<T> z = nn::dense(x, s.fc_w[i], s.fc_b[i]);
    c.fc_preact.push_back(z);
    x = nn::relu(z);
  }

  if (mode == nn::Mode::train && cfg.dropout > 0.0) {
    if (!mask || mask->keep.size() != x.data.size())
      throw std::invalid_argument("train mode needs a dropout mask of width " +
                                  std::to_string(x.data.size()));
    c.mask = *mask;
    x = nn::dropout_apply(x, c.mask);
  } else {
    c.mask = nn::DropoutMask{};
  }
  c.lsfe_out = x;

  Tensor<T> token = x;
  token.shape = {1, x.data.size()};
  c.token = token;

  c.a_st = nn::multi_head_attention(token, token, s.mha1, &c.mha1_cache);
  c.a_tt = nn::multi_head_attention(c.a_st, c.a_st, s.mha2, &c.mha2_cache);

  Tensor<T> avg({c.a_st.data.size()});
  for (std::size_t i = 0; i < avg.data.size(); ++i)
    avg.data[i] = (c.a_st.data[i] + c.a_tt.data[i]) / T(2);
  c.averaged = avg;

  x = avg;
  for (std::size_t i = 0; i < s.head_w.size(); ++i) {
    c.head_in.push_back(x);
    Tensor<T> z = nn::dense(x, s.head_w[i], s.head_b[i]);
    bool last = (i + 1 == s.head_w.size());
    c.head_preact.push_back(z);
    x = last ? z : nn::relu(z);
  }
  c.logits = x;
  return x;
}

// Backward of the full assembly for one sample; adds parameter gradients into
// grads (registry order) and returns nothing else.
template <typename T>
void attdicnn_backward(const ModelState<T>& s, const ForwardCache<T>& c,
                       const Tensor<T>& grad_logits, Gradients<T>& grads) {
  const ModelConfig& cfg = s.config;

  // Registry offsets.
  std::size_t n_conv = s.conv_w.size(), n_fc = s.fc_w.size();
  std::size_t conv_base = 0;
  std::size_t fc_base = conv_base + 2 * n_conv;
  std::size_t mha_tensors = 6 * static_cast<std::size_t>(cfg.heads) + 2;
  std::size_t mha1_base = fc_base + 2 * n_fc;
  std::size_t mha2_base = mha1_base + mha_tensors;
  std::size_t head_base = mha2_base + mha_tensors;

  // Head stack.
  Tensor<T> g = grad_logits;
  for (std::size_t i = s.head_w.size(); i-- > 0;) {
    bool last = (i + 1 == s.head_w.size());
    if (!last) g = nn::relu_backward(c.head_preact[i], g);
    auto dg = nn::dense_backward(c.head_in[i], s.head_w[i], g);
    auto& gw = grads[head_base + 2 * i];
    auto& gb = grads[head_base + 2 * i + 1];
    for (std::size_t t = 0; t < gw.data.size(); ++t) gw.data[t] += dg.weights.data[t];
    for (std::size_t t = 0; t < gb.data.size(); ++t) gb.data[t] += dg.bias.data[t];
    g = dg.input;
  }

  // Averaging head: both attention outputs get half the gradient.
  Tensor<T> g_avg = g;
  Tensor<T> g_a_tt({1, g_avg.data.size()});
  Tensor<T> g_a_st({1, g_avg.data.size()});
  for (std::size_t i = 0; i < g_avg.data.size(); ++i) {
    g_a_tt.data[i] = g_avg.data[i] / T(2);
    g_a_st.data[i] = g_avg.data[i] / T(2);
  }

  auto add_mha_grads = [&grads](std::size_t base, const nn::MhaGrads<T>& mg) {
    std::size_t idx = base;
    for (std::size_t h = 0; h < mg.params.heads; ++h) {
      const Tensor<T>* parts[6] = {&mg.params.w_q[h], &mg.params.b_q[h],
                                   &mg.params.w_k[h], &mg.params.b_k[h],
                                   &mg.params.w_v[h], &mg.params.b_v[h]};
      for (const Tensor<T>* part : parts) {
        for (std::size_t t = 0; t < part->data.size(); ++t)
          grads[idx].data[t] += part->data[t];
        ++idx;
      }
    }
    for (std::size_t t = 0; t < mg.params.w_o.data.size(); ++t)
      grads[idx].data[t] += mg.params.w_o.data[t];
    ++idx;
    for (std::size_t t = 0; t < mg.params.b_o.data.size(); ++t)
      grads[idx].data[t] += mg.params.b_o.data[t];
  };

  // Second attention block: queries and key/values are both a_st.
  auto mha2_g = nn::multi_head_attention_backward(c.a_st, c.a_st, s.mha2, c.mha2_cache,
                                                  g_a_tt);
  add_mha_grads(mha2_base, mha2_g);
  for (std::size_t i = 0; i < g_a_st.data.size(); ++i)
    g_a_st.data[i] += mha2_g.x_q.data[i] + mha2_g.x_kv.data[i];

  auto mha1_g = nn::multi_head_attention_backward(c.token, c.token, s.mha1, c.mha1_cache,
                                                  g_a_st);
  add_mha_grads(mha1_base, mha1_g);

  Tensor<T> g_token({c.token.data.size()});
  for (std::size_t i = 0; i < g_token.data.size(); ++i)
    g_token.data[i] = mha1_g.x_q.data[i] + mha1_g.x_kv.data[i];

  if (!c.mask.keep.empty()) g_token = nn::dropout_backward(g_token, c.mask);

  // LSFE fully connected stack.
  g = g_token;
  for (std::size_t i = s.fc_w.size(); i-- > 0;) {
    g = nn::relu_backward(c.fc_preact[i], g);
    auto dg = nn::dense_backward(c.fc_in[i], s.fc_w[i], g);
    auto& gw = grads[fc_base + 2 * i];
    auto& gb = grads[fc_base + 2 * i + 1];
    for (std::size_t t = 0; t < gw.data.size(); ++t) gw.data[t] += dg.weights.data[t];
    for (std::size_t t = 0; t < gb.data.size(); ++t) gb.data[t] += dg.bias.data[t];
    g = dg.input;
  }

  // Conv ladder.
  g.shape = c.pool.back().output.shape;
  for (std::size_t i = s.conv_w.size(); i-- > 0;) {
    Tensor<T> g_pool_in =
        nn::maxpool2d_backward(c.pool[i].argmax, c.relu_out[i].shape, g);
    Tensor<T> g_relu_in = nn::relu_backward(c.conv_preact[i], g_pool_in);
    auto dg = nn::conv2d_backward(c.conv_in[i], s.conv_w[i],
                                  static_cast<std::size_t>(cfg.conv_dilations[i]),
                                  g_relu_in);
    auto& gw = grads[conv_base + 2 * i];
    auto& gb = grads[conv_base + 2 * i + 1];
    for (std::size_t t = 0; t < gw.data.size(); ++t) gw.data[t] += dg.kernels.data[t];
    for (std::size_t t = 0; t < gb.data.size(); ++t) gb.data[t] += dg.bias.data[t];
    g = dg.input;
  }
}

// ------------------------------------------------------------- batch loss --

// gradient of mean cross entropy at the logits of one sample: (p - onehot);
// the 1/batch factor is applied when contributions are merged.
template <typename T>
Tensor<T> softmax_ce_logit_grad(const Tensor<T>& logits, int label,
                                std::vector<T>* probs_out = nullptr) {
  auto probs = nn::softmax(logits.data);
  Tensor<T> g({probs.size()});
  for (std::size_t i = 0; i < probs.size(); ++i) g.data[i] = probs[i];
  g.data[static_cast<std::size_t>(label)] -= T(1);
  if (probs_out) *probs_out = std::move(probs);
  return g;
}

template <typename T>
struct BatchResult {
  double loss = 0.0;
  std::vector<int> predictions;
  Gradients<T> grads;
};

// Mean softmax cross entropy and full parameter gradients over a batch.
// Dropout masks are drawn sequentially up front so the result is a pure
// function of (state, batch, rng state); per-sample work may then fan out
// over jobs threads with a fixed chunk -> thread assignment.
template <typename T>
BatchResult<T> loss_and_grad(const ModelState<T>& state,
                             const std::vector<const Tensor<T>*>& images,
                             const std::vector<int>& labels, nn::Mode mode,
                             Rng& dropout_rng, int jobs = 1) {
  if (images.empty() || images.size() != labels.size())
    throw std::invalid_argument("batch images/labels mismatch");
  for (int label : labels)
    if (label < 0 || label >= state.config.n_classes)
      throw std::out_of_range("label " + std::to_string(label) + " out of range");

  std::size_t batch = images.size();
  std::size_t width = static_cast<std::size_t>(state.config.d_model());

  std::vector<nn::DropoutMask> masks(batch);
  if (mode == nn::Mode::train && state.config.dropout > 0.0)
    for (std::size_t i = 0; i < batch; ++i)
      masks[i] = nn::make_dropout_mask(dropout_rng, width, state.config.dropout);

  std::size_t n_jobs = std::max(1, jobs);
  n_jobs = std::min(n_jobs, batch);
  std::size_t chunk = (batch + n_jobs - 1) / n_jobs;

  std::vector<double> losses(batch, 0.0);
  std::vector<int> preds(batch, 0);
  std::vector<Gradients<T>> thread_grads(n_jobs);

  auto worker = [&](std::size_t t) {
    thread_grads[t] = zero_gradients(state);
    std::size_t lo = t * chunk, hi = std::min(batch, lo + chunk);
    ForwardCache<T> cache;
    for (std::size_t i = lo; i < hi; ++i) {
      const nn::DropoutMask* mask = masks[i].keep.empty() ? nullptr : &masks[i];
      Tensor<T> logits = attdicnn_forward(*images[i], state, mode, mask, &cache);
      std::vector<T> probs;
      Tensor<T> g_logits = softmax_ce_logit_grad(logits, labels[i], &probs);
      losses[i] = static_cast<double>(nn::cross_entropy(probs, labels[i]));
      preds[i] = static_cast<int>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
      attdicnn_backward(state, cache, g_logits, thread_grads[t]);
    }
  };

  if (n_jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_jobs; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  BatchResult<T> result;
  result.predictions = std::move(preds);
  double loss_acc = 0.0;
  for (double l : losses) loss_acc += l;
  result.loss = loss_acc / static_cast<double>(batch);
  if (!std::isfinite(result.loss)) {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < batch; ++i)
      if (!std::isfinite(losses[i])) {
        bad = i;
        break;
      }
    throw std::runtime_error("non-finite loss at batch index " + std::to_string(bad));
  }

  result.grads = std::move(thread_grads[0]);
  for (std::size_t t = 1; t < n_jobs; ++t)
    for (std::size_t p = 0; p < result.grads.size(); ++p)
      for (std::size_t i = 0; i < result.grads[p].data.size(); ++i)
        result.grads[p].data[i] += thread_grads[t][p].data[i];
  T inv_batch = static_cast<T>(1.0 / static_cast<double>(batch));
  for (auto& g : result.grads)
    for (T& v : g.data) v *= inv_batch;
  return result;
}

// ------------------------------------------------------------------- adam --

template <typename T>
void adam_step(ModelState<T>& state, const Gradients<T>& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-7) {
  auto params = parameters(state);
  if (grads.size() != params.size())
    throw std::invalid_argument("gradient/parameter registry mismatch");
  if (state.adam.m.empty()) {
    for (Tensor<T>* p : params) {
      state.adam.m.push_back(Tensor<T>(p->shape));
      state.adam.v.push_back(Tensor<T>(p->shape));
    }
  }
  ++state.adam.step;
  double t = static_cast<double>(state.adam.step);
  T correct1 = static_cast<T>(1.0 / (1.0 - std::pow(beta1, t)));
  T correct2 = static_cast<T>(1.0 / (1.0 - std::pow(beta2, t)));
  T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
  T eps = static_cast<T>(epsilon), alpha = static_cast<T>(lr);

  for (std::size_t p = 0; p < params.size(); ++p) {
    T* theta = params[p]->data.data();
    T* m = state.adam.m[p].data.data();
    T* v = state.adam.v[p].data.data();
    const T* g = grads[p].data.data();
    std::size_t n = params[p]->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      T m_hat = m[i] * correct1;
      T v_hat = v[i] * correct2;
      theta[i] -= alpha * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

// -------------------------------------------------------------- evaluation --

template <typename T>
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<double>> scores;  // softmax rows
  std::vector<int> predictions;
};

template <typename T>
EvalResult<T> evaluate(const ModelState<T>& state,
                       const std::vector<const Tensor<T>*>& images,
                       const std::vector<int>& labels) {
  EvalResult<T> r;
  if (images.empty()) return r;
  double loss_acc = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Tensor<T> logits = attdicnn_forward(*images[i], state, nn::Mode::infer);
    auto probs = nn::softmax(logits.data);
    int pred = static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                                probs.begin());
    r.predictions.push_back(pred);
    r.scores.emplace_back(probs.begin(), probs.end());
    loss_acc += static_cast<double>(nn::cross_entropy(probs, labels[i]));
    if (pred == labels[i]) ++correct;
  }
  r.loss = loss_acc / static_cast<double>(images.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
  return r;
}

// --------------------------------------------------------------- training --

struct TrainConfig {
  int epochs = 200;
  double lr = 0.001;
  int patience = 15;  // early stop on stalled validation accuracy (max mode)
  std::uint64_t seed = 13;
  int batch_size = 32;
  int jobs = 1;
};

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
};

// Max-mode early stopping: remembers the best metric epoch and fires once the
// metric has not strictly improved for `patience` consecutive epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // returns true when training should stop after this epoch
  bool update(int epoch, double metric) {
    if (metric > best_metric_) {
      best_metric_ = metric;
      best_epoch_ = epoch;
    }
    return epoch - best_epoch_ >= patience_;
  }

  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_metric_ = -std::numeric_limits<double>::infinity();
};

template <typename T>
struct TrainResult {
  ModelState<T> best_state;
  std::vector<HistoryRow> history;
  int best_epoch = 0;     // 1-based
  int stopped_epoch = 0;  // last epoch that ran
  bool early_stopped = false;
};

// Epoch loop with seeded shuffled mini-batches; keeps the weights of the best
// validation accuracy and stops once it has not improved for patience epochs.
template <typename T>
TrainResult<T> train(const std::vector<const Tensor<T>*>& train_images,
                     const std::vector<int>& train_labels,
                     const std::vector<const Tensor<T>*>& val_images,
                     const std::vector<int>& val_labels, const ModelConfig& model_cfg,
                     const TrainConfig& cfg,
                     const std::function<void(const HistoryRow&)>& on_epoch = {}) {
  if (train_images.empty() || val_images.empty())
    throw std::invalid_argument("train and validation sets must be non-empty");

  ModelState<T> state = init_model<T>(model_cfg, cfg.seed);
  Rng rng(cfg.seed);
  Rng shuffle_rng = rng.fork(1);
  Rng dropout_rng = rng.fork(2);

  TrainResult<T> result;
  EarlyStopper stopper(cfg.patience);

  std::vector<std::size_t> order(train_images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    double loss_acc = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Tensor<T>*> batch_images;
      std::vector<int> batch_labels;
      for (std::size_t i = start; i < end; ++i) {
        batch_images.push_back(train_images[order[i]]);
        batch_labels.push_back(train_labels[order[i]]);
      }
      auto batch = loss_and_grad(state, batch_images, batch_labels, nn::Mode::train,
                                 dropout_rng, cfg.jobs);
      adam_step(state, batch.grads, cfg.lr);
      loss_acc += batch.loss * static_cast<double>(batch_images.size());
      for (std::size_t i = 0; i < batch_labels.size(); ++i)
        if (batch.predictions[i] == batch_labels[i]) ++correct;
      seen += batch_images.size();
    }

    auto val = evaluate(state, val_images, val_labels);

    HistoryRow row;
    row.epoch = epoch;
    row.train_loss = loss_acc / static_cast<double>(seen);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    row.val_loss = val.loss;
    row.val_acc = val.accuracy;
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);

    bool should_stop = stopper.update(epoch, val.accuracy);
    if (stopper.best_epoch() == epoch) result.best_state = state;
    result.best_epoch = stopper.best_epoch();
    result.stopped_epoch = epoch;
    if (should_stop) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace attdicnn::model

#endif
