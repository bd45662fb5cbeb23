#ifndef ATTDICNN_WEIGHT_EXPORT_HPP
#define ATTDICNN_WEIGHT_EXPORT_HPP

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "attdicnn/model.hpp"

namespace attdicnn::metrics {

// Flattened kernel/weight-matrix values (biases excluded) of the layers in
// one network block, one value per row. Tags: LSFE, S2TLR, G2A.
template <typename T>
std::string export_weight_distribution(const model::ModelState<T>& state,
                                       const std::string& module_tag) {
  std::string tag = module_tag;
  std::transform(tag.begin(), tag.end(), tag.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (tag != "lsfe" && tag != "s2tlr" && tag != "g2a")
    throw std::invalid_argument("unknown module tag \"" + module_tag +
                                "\"; expected LSFE, S2TLR or G2A");

  auto specs = model::tensor_specs(state.config);
  auto params = model::parameters(state);
  std::string out;
  char buf[48];
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].module_tag != tag || !specs[i].is_weight) continue;
    for (T v : params[i]->data) {
      std::snprintf(buf, sizeof(buf), "%.9g\n", static_cast<double>(v));
      out += buf;
    }
  }
  return out;
}

}  // namespace attdicnn::metrics

#endif
