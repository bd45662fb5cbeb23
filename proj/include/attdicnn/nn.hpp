#ifndef ATTDICNN_NN_HPP
#define ATTDICNN_NN_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attdicnn/rng.hpp"
#include "attdicnn/tensor.hpp"

// From-scratch compute kernels. Every forward has an exact analytic backward;
// the finite-difference suites hold them to 1e-4 relative error in double.
namespace attdicnn::nn {

enum class Mode { train, infer };

// ---------------------------------------------------------------- conv2d --
// input [C_in, H, W], kernels [C_out, C_in, KH, KW], valid padding, stride 1.
// Dilation l spaces the kernel taps: out(p) = sum_{s + l*t = p} F(s) k(t) + b.

inline std::pair<std::size_t, std::size_t> conv2d_output_dims(std::size_t h,
                                                              std::size_t w,
                                                              std::size_t kh,
                                                              std::size_t kw,
                                                              std::size_t dilation) {
  std::size_t eff_h = (kh - 1) * dilation + 1;
  std::size_t eff_w = (kw - 1) * dilation + 1;
  if (h < eff_h || w < eff_w)
    throw std::invalid_argument("conv input " + std::to_string(h) + "x" +
                                std::to_string(w) + " smaller than dilated kernel " +
                                std::to_string(eff_h) + "x" + std::to_string(eff_w));
  return {h - eff_h + 1, w - eff_w + 1};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t dilation) {
  if (input.shape.size() != 3 || kernels.shape.size() != 4)
    throw std::invalid_argument("conv2d expects input (C,H,W) and kernels (O,C,KH,KW)");
  std::size_t c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
  std::size_t c_out = kernels.shape[0], kc = kernels.shape[1], kh = kernels.shape[2],
              kw = kernels.shape[3];
  if (kc != c_in)
    throw std::invalid_argument("conv2d channel mismatch: input " +
                                shape_string(input.shape) + " vs kernels " +
                                shape_string(kernels.shape));
  auto [oh, ow] = conv2d_output_dims(h, w, kh, kw, dilation);

  Tensor<T> out({c_out, oh, ow});
  for (std::size_t co = 0; co < c_out; ++co) {
    T b = bias.data[co];
    T* out_c = out.data.data() + co * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) out_c[i] = b;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* in_c = input.data.data() + ci * h * w;
      const T* k_c = kernels.data.data() + (co * c_in + ci) * kh * kw;
      for (std::size_t dy = 0; dy < kh; ++dy) {
        for (std::size_t dx = 0; dx < kw; ++dx) {
          T kv = k_c[dy * kw + dx];
          for (std::size_t y = 0; y < oh; ++y) {
            const T* in_row = in_c + (y + dy * dilation) * w + dx * dilation;
            T* out_row = out_c + y * ow;
            for (std::size_t x = 0; x < ow; ++x) out_row[x] += kv * in_row[x];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                               std::size_t dilation, const Tensor<T>& grad_out) {
  std::size_t c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
  std::size_t c_out = kernels.shape[0], kh = kernels.shape[2], kw = kernels.shape[3];
  std::size_t oh = grad_out.shape[1], ow = grad_out.shape[2];

  Conv2dGrads<T> g{Tensor<T>(input.shape), Tensor<T>(kernels.shape),
                   Tensor<T>({c_out})};

  for (std::size_t co = 0; co < c_out; ++co) {
    const T* go_c = grad_out.data.data() + co * oh * ow;
    T acc = T(0);
    for (std::size_t i = 0; i < oh * ow; ++i) acc += go_c[i];
    g.bias.data[co] = acc;

    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* in_c = input.data.data() + ci * h * w;
      T* gin_c = g.input.data.data() + ci * h * w;
      const T* k_c = kernels.data.data() + (co * c_in + ci) * kh * kw;
      T* gk_c = g.kernels.data.data() + (co * c_in + ci) * kh * kw;
      for (std::size_t dy = 0; dy < kh; ++dy) {
        for (std::size_t dx = 0; dx < kw; ++dx) {
          T kv = k_c[dy * kw + dx];
          T kacc = T(0);
          for (std::size_t y = 0; y < oh; ++y) {
            const T* go_row = go_c + y * ow;
            const T* in_row = in_c + (y + dy * dilation) * w + dx * dilation;
            T* gin_row = gin_c + (y + dy * dilation) * w + dx * dilation;
            for (std::size_t x = 0; x < ow; ++x) {
              kacc += go_row[x] * in_row[x];
              gin_row[x] += go_row[x] * kv;
            }
          }
          gk_c[dy * kw + dx] += kacc;
        }
      }
    }
  }
  return g;
}

// --------------------------------------------------------------- maxpool --
// 2x2 window, stride 2, floor division on odd dims. Gradient flows only to
// the argmax position; ties break to the first position in scan order.

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input) {
  std::size_t c = input.shape[0], h = input.shape[1], w = input.shape[2];
  if (h < 2 || w < 2) throw std::invalid_argument("maxpool input smaller than window");
  std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{Tensor<T>({c, oh, ow}), {}};
  r.argmax.resize(c * oh * ow);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* in_c = input.data.data() + ci * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t base = (2 * y) * w + 2 * x;
        T best = in_c[base];
        std::size_t best_idx = base;
        const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t k = 0; k < 3; ++k) {
          if (in_c[cand[k]] > best) {
            best = in_c[cand[k]];
            best_idx = cand[k];
          }
        }
        std::size_t out_idx = (ci * oh + y) * ow + x;
        r.output.data[out_idx] = best;
        r.argmax[out_idx] = static_cast<std::uint32_t>(ci * h * w + best_idx);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const std::vector<std::uint32_t>& argmax,
                             const std::vector<std::size_t>& input_shape,
                             const Tensor<T>& grad_out) {
  Tensor<T> gin(input_shape);
  for (std::size_t i = 0; i < grad_out.data.size(); ++i)
    gin.data[argmax[i]] += grad_out.data[i];
  return gin;
}

// ------------------------------------------------------------ relu/dense --

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

// mask comes from the forward input
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_y) {
  Tensor<T> gx(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    gx.data[i] = x.data[i] > T(0) ? grad_y.data[i] : T(0);
  return gx;
}

// x [in], weights [in, out] row-major, bias [out]
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  std::size_t in = weights.shape[0], out = weights.shape[1];
  if (x.data.size() != in)
    throw std::invalid_argument("dense input size " + std::to_string(x.data.size()) +
                                " vs weights " + shape_string(weights.shape));
  Tensor<T> y({out});
  for (std::size_t o = 0; o < out; ++o) y.data[o] = bias.data[o];
  for (std::size_t i = 0; i < in; ++i) {
    T xi = x.data[i];
    const T* w_row = weights.data.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) y.data[o] += xi * w_row[o];
  }
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights,
                             const Tensor<T>& grad_y) {
  std::size_t in = weights.shape[0], out = weights.shape[1];
  DenseGrads<T> g{Tensor<T>(x.shape), Tensor<T>(weights.shape), Tensor<T>({out})};
  g.bias.data = grad_y.data;
  for (std::size_t i = 0; i < in; ++i) {
    const T* w_row = weights.data.data() + i * out;
    T* gw_row = g.weights.data.data() + i * out;
    T xi = x.data[i];
    T acc = T(0);
    for (std::size_t o = 0; o < out; ++o) {
      gw_row[o] = xi * grad_y.data[o];
      acc += w_row[o] * grad_y.data[o];
    }
    g.input.data[i] = acc;
  }
  return g;
}

// ---------------------------------------------------------------- dropout --
// Inverted dropout: kept units are scaled by 1/(1-rate) at train time so
// inference is the identity.

struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double rate = 0.0;
};

inline DropoutMask make_dropout_mask(Rng& rng, std::size_t size, double rate) {
  DropoutMask m;
  m.rate = rate;
  m.keep.resize(size);
  for (std::size_t i = 0; i < size; ++i) m.keep[i] = rng.uniform() >= rate ? 1 : 0;
  return m;
}

template <typename T>
Tensor<T> dropout_apply(const Tensor<T>& x, const DropoutMask& mask) {
  Tensor<T> y(x.shape);
  T scale = static_cast<T>(1.0 / (1.0 - mask.rate));
  for (std::size_t i = 0; i < x.data.size(); ++i)
    y.data[i] = mask.keep[i] ? x.data[i] * scale : T(0);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_y, const DropoutMask& mask) {
  return dropout_apply(grad_y, mask);
}

// -------------------------------------------------------------- attention --
// Q [sq, dk], K [sk, dk], V [sk, dv]:  out = softmax(Q K^T / sqrt(dk)) V.

template <typename T>
struct AttentionResult {
  Tensor<T> output;  // [sq, dv]
  Tensor<T> probs;   // [sq, sk], rows sum to 1
};

template <typename T>
AttentionResult<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                                        const Tensor<T>& v) {
  if (q.shape.size() != 2 || k.shape.size() != 2 || v.shape.size() != 2 ||
      q.shape[1] != k.shape[1] || k.shape[0] != v.shape[0])
    throw std::invalid_argument("attention shape mismatch: Q" + shape_string(q.shape) +
                                " K" + shape_string(k.shape) + " V" +
                                shape_string(v.shape));
  std::size_t sq = q.shape[0], sk = k.shape[0], dk = q.shape[1], dv = v.shape[1];
  T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));

  AttentionResult<T> r{Tensor<T>({sq, dv}), Tensor<T>({sq, sk})};
  std::vector<T> row(sk);
  for (std::size_t i = 0; i < sq; ++i) {
    const T* qi = q.data.data() + i * dk;
    T max_score = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < sk; ++j) {
      const T* kj = k.data.data() + j * dk;
      T s = T(0);
      for (std::size_t d = 0; d < dk; ++d) s += qi[d] * kj[d];
      row[j] = s * inv_sqrt;
      max_score = std::max(max_score, row[j]);
    }
    T denom = T(0);
    for (std::size_t j = 0; j < sk; ++j) {
      row[j] = std::exp(row[j] - max_score);
      denom += row[j];
    }
    T* p_row = r.probs.data.data() + i * sk;
    for (std::size_t j = 0; j < sk; ++j) p_row[j] = row[j] / denom;

    T* out_row = r.output.data.data() + i * dv;
    for (std::size_t j = 0; j < sk; ++j) {
      const T* vj = v.data.data() + j * dv;
      T p = p_row[j];
      for (std::size_t d = 0; d < dv; ++d) out_row[d] += p * vj[d];
    }
  }
  return r;
}

template <typename T>
struct AttentionGrads {
  Tensor<T> q;
  Tensor<T> k;
  Tensor<T> v;
};

template <typename T>
AttentionGrads<T> scaled_dot_attention_backward(const Tensor<T>& q, const Tensor<T>& k,
                                                const Tensor<T>& v, const Tensor<T>& probs,
                                                const Tensor<T>& grad_out) {
  std::size_t sq = q.shape[0], sk = k.shape[0], dk = q.shape[1], dv = v.shape[1];
  T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));

  AttentionGrads<T> g{Tensor<T>(q.shape), Tensor<T>(k.shape), Tensor<T>(v.shape)};

  // dV = P^T dOut
  for (std::size_t j = 0; j < sk; ++j) {
    T* gv_row = g.v.data.data() + j * dv;
    for (std::size_t i = 0; i < sq; ++i) {
      T p = probs.data[i * sk + j];
      const T* go_row = grad_out.data.data() + i * dv;
      for (std::size_t d = 0; d < dv; ++d) gv_row[d] += p * go_row[d];
    }
  }

  std::vector<T> grad_p(sk), grad_s(sk);
  for (std::size_t i = 0; i < sq; ++i) {
    const T* go_row = grad_out.data.data() + i * dv;
    const T* p_row = probs.data.data() + i * sk;
    // dP = dOut V^T, then the softmax Jacobian: dS_j = P_j (dP_j - sum_k dP_k P_k)
    T dot = T(0);
    for (std::size_t j = 0; j < sk; ++j) {
      const T* vj = v.data.data() + j * dv;
      T acc = T(0);
      for (std::size_t d = 0; d < dv; ++d) acc += go_row[d] * vj[d];
      grad_p[j] = acc;
      dot += acc * p_row[j];
    }
    for (std::size_t j = 0; j < sk; ++j) grad_s[j] = p_row[j] * (grad_p[j] - dot);

    // S = Q K^T * inv_sqrt
    T* gq_row = g.q.data.data() + i * dk;
    const T* q_row = q.data.data() + i * dk;
    for (std::size_t j = 0; j < sk; ++j) {
      T gs = grad_s[j] * inv_sqrt;
      const T* k_row = k.data.data() + j * dk;
      T* gk_row = g.k.data.data() + j * dk;
      for (std::size_t d = 0; d < dk; ++d) {
        gq_row[d] += gs * k_row[d];
        gk_row[d] += gs * q_row[d];
      }
    }
  }
  return g;
}

// ------------------------------------------------------ multi-head block --

template <typename T>
struct AttentionParams {
  std::size_t heads = 0, d_model = 0, d_k = 0, d_v = 0;
  std::vector<Tensor<T>> w_q, b_q;  // per head: [d_model, d_k], [d_k]
  std::vector<Tensor<T>> w_k, b_k;
  std::vector<Tensor<T>> w_v, b_v;  // per head: [d_model, d_v], [d_v]
  Tensor<T> w_o;                    // [heads * d_v, d_model]
  Tensor<T> b_o;                    // [d_model]
};

// x [s, d_model] * w [d_model, d] + b, row per sequence position
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  std::size_t s = x.shape[0], d_in = w.shape[0], d_out = w.shape[1];
  if (x.shape[1] != d_in)
    throw std::invalid_argument("projection dim mismatch: x" + shape_string(x.shape) +
                                " w" + shape_string(w.shape));
  Tensor<T> y({s, d_out});
  for (std::size_t r = 0; r < s; ++r) {
    const T* x_row = x.data.data() + r * d_in;
    T* y_row = y.data.data() + r * d_out;
    for (std::size_t o = 0; o < d_out; ++o) y_row[o] = b.data[o];
    for (std::size_t i = 0; i < d_in; ++i) {
      T xi = x_row[i];
      const T* w_row = w.data.data() + i * d_out;
      for (std::size_t o = 0; o < d_out; ++o) y_row[o] += xi * w_row[o];
    }
  }
  return y;
}

template <typename T>
struct MhaCache {
  std::vector<Tensor<T>> q, k, v;      // per head projections
  std::vector<Tensor<T>> probs, head;  // per head attention
  Tensor<T> concat;                    // [s, heads * d_v]
};

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                               const AttentionParams<T>& p, MhaCache<T>* cache = nullptr) {
  if (x_q.shape.size() != 2 || x_q.shape[1] != p.d_model || x_kv.shape[1] != p.d_model)
    throw std::invalid_argument("multi-head input dim mismatch: x" +
                                shape_string(x_q.shape) + " d_model " +
                                std::to_string(p.d_model));
  std::size_t s = x_q.shape[0];
  Tensor<T> concat({s, p.heads * p.d_v});
  MhaCache<T> local;
  MhaCache<T>& c = cache ? *cache : local;
  c.q.clear(); c.k.clear(); c.v.clear(); c.probs.clear(); c.head.clear();

  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor<T> q = project(x_q, p.w_q[h], p.b_q[h]);
    Tensor<T> k = project(x_kv, p.w_k[h], p.b_k[h]);
    Tensor<T> v = project(x_kv, p.w_v[h], p.b_v[h]);
    auto att = scaled_dot_attention(q, k, v);
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t d = 0; d < p.d_v; ++d)
        concat.data[r * p.heads * p.d_v + h * p.d_v + d] = att.output.data[r * p.d_v + d];
    c.q.push_back(std::move(q));
    c.k.push_back(std::move(k));
    c.v.push_back(std::move(v));
    c.probs.push_back(std::move(att.probs));
    c.head.push_back(std::move(att.output));
  }
  c.concat = concat;
  return project(concat, p.w_o, p.b_o);
}

template <typename T>
struct MhaGrads {
  AttentionParams<T> params;  // same shapes as the forward params
  Tensor<T> x_q;
  Tensor<T> x_kv;  // caller adds x_q and x_kv grads when the inputs alias
};

template <typename T>
AttentionParams<T> zero_like(const AttentionParams<T>& p) {
  AttentionParams<T> z;
  z.heads = p.heads; z.d_model = p.d_model; z.d_k = p.d_k; z.d_v = p.d_v;
  for (std::size_t h = 0; h < p.heads; ++h) {
    z.w_q.push_back(Tensor<T>(p.w_q[h].shape));
    z.b_q.push_back(Tensor<T>(p.b_q[h].shape));
    z.w_k.push_back(Tensor<T>(p.w_k[h].shape));
    z.b_k.push_back(Tensor<T>(p.b_k[h].shape));
    z.w_v.push_back(Tensor<T>(p.w_v[h].shape));
    z.b_v.push_back(Tensor<T>(p.b_v[h].shape));
  }
  z.w_o = Tensor<T>(p.w_o.shape);
  z.b_o = Tensor<T>(p.b_o.shape);
  return z;
}

namespace detail {

// accumulate grads of y = x w + b given dY: dW += x^T dY, db += colsum, dX += dY w^T
template <typename T>
void project_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_y,
                      Tensor<T>& grad_w, Tensor<T>& grad_b, Tensor<T>& grad_x) {
  std::size_t s = x.shape[0], d_in = w.shape[0], d_out = w.shape[1];
  for (std::size_t r = 0; r < s; ++r) {
    const T* x_row = x.data.data() + r * d_in;
    const T* gy_row = grad_y.data.data() + r * d_out;
    T* gx_row = grad_x.data.data() + r * d_in;
    for (std::size_t o = 0; o < d_out; ++o) grad_b.data[o] += gy_row[o];
    for (std::size_t i = 0; i < d_in; ++i) {
      T* gw_row = grad_w.data.data() + i * d_out;
      const T* w_row = w.data.data() + i * d_out;
      T xi = x_row[i];
      T acc = T(0);
      for (std::size_t o = 0; o < d_out; ++o) {
        gw_row[o] += xi * gy_row[o];
        acc += w_row[o] * gy_row[o];
      }
      gx_row[i] += acc;
    }
  }
}

}  // namespace detail

template <typename T>
MhaGrads<T> multi_head_attention_backward(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                                          const AttentionParams<T>& p,
                                          const MhaCache<T>& cache,
                                          const Tensor<T>& grad_out) {
  std::size_t s = x_q.shape[0];
  MhaGrads<T> g{zero_like(p), Tensor<T>(x_q.shape), Tensor<T>(x_kv.shape)};

  // output projection
  Tensor<T> grad_concat({s, p.heads * p.d_v});
  detail::project_backward(cache.concat, p.w_o, grad_out, g.params.w_o, g.params.b_o,
                           grad_concat);

  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor<T> grad_head({s, p.d_v});
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t d = 0; d < p.d_v; ++d)
        grad_head.data[r * p.d_v + d] =
            grad_concat.data[r * p.heads * p.d_v + h * p.d_v + d];

    auto att_g = scaled_dot_attention_backward(cache.q[h], cache.k[h], cache.v[h],
                                               cache.probs[h], grad_head);
    detail::project_backward(x_q, p.w_q[h], att_g.q, g.params.w_q[h], g.params.b_q[h],
                             g.x_q);
    detail::project_backward(x_kv, p.w_k[h], att_g.k, g.params.w_k[h], g.params.b_k[h],
                             g.x_kv);
    detail::project_backward(x_kv, p.w_v[h], att_g.v, g.params.w_v[h], g.params.b_v[h],
                             g.x_kv);
  }
  return g;
}

// ----------------------------------------------------------- softmax loss --

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  T max_v = logits[0];
  for (T v : logits) max_v = std::max(max_v, v);
  std::vector<T> out(logits.size());
  T denom = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_v);
    denom += out[i];
  }
  for (T& v : out) v /= denom;
  return out;
}

// mean-reduced sparse categorical cross entropy for one sample; the 1/batch
// factor is applied by the caller.
template <typename T>
T cross_entropy(const std::vector<T>& probs, int label) {
  T p = probs[static_cast<std::size_t>(label)];
  return -std::log(std::max(p, static_cast<T>(1e-30)));
}

}  // namespace attdicnn::nn

#endif
