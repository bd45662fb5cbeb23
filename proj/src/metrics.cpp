#include "attdicnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace attdicnn::metrics {

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : cells) t += c;
  return t;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("label vectors differ in length");
  ConfusionMatrix cm;
  cm.n = n_classes;
  cm.cells.assign(n_classes * n_classes, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || t >= static_cast<int>(n_classes) ||
        p >= static_cast<int>(n_classes))
      throw std::out_of_range("label out of range at index " + std::to_string(i));
    ++cm(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.empty()) throw std::invalid_argument("accuracy of an empty set");
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("label vectors differ in length");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double top_k_accuracy(const std::vector<int>& y_true,
                      const std::vector<std::vector<double>>& scores, std::size_t k) {
  if (y_true.empty()) throw std::invalid_argument("top-k accuracy of an empty set");
  if (y_true.size() != scores.size())
    throw std::invalid_argument("labels and score rows differ in length");
  std::size_t hit = 0;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const auto& row = scores[i];
    if (k > row.size()) throw std::invalid_argument("k exceeds the number of classes");
    order.resize(row.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&row](std::size_t a, std::size_t b) {
      return row[a] > row[b];  // stable keeps the lower index on ties
    });
    for (std::size_t j = 0; j < k; ++j) {
      if (static_cast<int>(order[j]) == y_true[i]) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

MacroPrf precision_recall_f1(const ConfusionMatrix& cm) {
  if (cm.n < 2) throw std::invalid_argument("need at least 2 classes");
  MacroPrf out;
  for (std::size_t c = 0; c < cm.n; ++c) {
    long tp = cm(c, c);
    long fp = 0, fn = 0;
    for (std::size_t o = 0; o < cm.n; ++o) {
      if (o == c) continue;
      fp += cm(o, c);
      fn += cm(c, o);
    }
    PerClass pc;
    for (std::size_t o = 0; o < cm.n; ++o) pc.support += cm(c, o);
    if (tp + fp == 0) {
      pc.precision = 0.0;
      pc.degenerate = true;
    } else {
      pc.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
      pc.recall = 0.0;
      pc.degenerate = true;
    } else {
      pc.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    if (pc.precision + pc.recall == 0.0) {
      pc.f1 = 0.0;
      pc.degenerate = pc.degenerate || tp == 0;
    } else {
      pc.f1 = 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
    }
    out.precision += pc.precision;
    out.recall += pc.recall;
    out.f1 += pc.f1;
    out.per_class.push_back(pc);
  }
  double n = static_cast<double>(cm.n);
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

double cohens_kappa(const ConfusionMatrix& cm) {
  long total = cm.total();
  if (total <= 0) throw std::invalid_argument("empty confusion matrix");
  double t = static_cast<double>(total);
  double p_o = 0.0, p_e = 0.0;
  for (std::size_t c = 0; c < cm.n; ++c) {
    p_o += static_cast<double>(cm(c, c)) / t;
    long row = 0, col = 0;
    for (std::size_t o = 0; o < cm.n; ++o) {
      row += cm(c, o);
      col += cm(o, c);
    }
    p_e += static_cast<double>(row) * static_cast<double>(col) / (t * t);
  }
  if (p_e >= 1.0) return p_o >= 1.0 ? 1.0 : 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

double auc_macro_ovr(const std::vector<int>& y_true,
                     const std::vector<std::vector<double>>& scores,
                     std::vector<std::size_t>* skipped) {
  if (y_true.size() != scores.size() || y_true.empty())
    throw std::invalid_argument("labels and score rows differ in length");
  std::size_t n_classes = scores[0].size();

  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t pos = 0;
    for (int t : y_true)
      if (t == static_cast<int>(c)) ++pos;
    std::size_t neg = y_true.size() - pos;
    if (pos == 0 || neg == 0) {
      if (skipped) skipped->push_back(c);
      continue;
    }

    // Mann-Whitney rank statistic with average ranks on ties.
    std::vector<std::size_t> order(y_true.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a][c] < scores[b][c];
    });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && scores[order[j + 1]][c] == scores[order[i]][c]) ++j;
      double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= j; ++t)
        if (y_true[order[t]] == static_cast<int>(c)) rank_sum_pos += avg_rank;
      i = j + 1;
    }
    double p = static_cast<double>(pos), q = static_cast<double>(neg);
    sum += (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q);
    ++used;
  }
  // single-class evaluations have no rankable pair; chance level by convention
  if (used == 0) return 0.5;
  return sum / static_cast<double>(used);
}

std::pair<double, double> mae_mse(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred) {
  if (y_true.empty() || y_true.size() != y_pred.size())
    throw std::invalid_argument("label vectors differ in length");
  double mae = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    double d = static_cast<double>(y_true[i]) - static_cast<double>(y_pred[i]);
    mae += std::abs(d);
    mse += d * d;
  }
  double n = static_cast<double>(y_true.size());
  return {mae / n, mse / n};
}

EvalReport full_report(const std::vector<int>& y_true,
                       const std::vector<std::vector<double>>& scores,
                       std::size_t n_classes, const std::vector<std::string>& class_names) {
  if (y_true.empty()) throw std::invalid_argument("empty evaluation set");
  std::vector<int> y_pred(y_true.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& row = scores[i];
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;  // ties keep the lowest index
    y_pred[i] = static_cast<int>(best);
  }

  EvalReport r;
  r.class_names = class_names;
  r.confusion = confusion_matrix(y_true, y_pred, n_classes);
  r.accuracy = accuracy(y_true, y_pred);
  r.top2 = top_k_accuracy(y_true, scores, std::min<std::size_t>(2, n_classes));
  r.top3 = top_k_accuracy(y_true, scores, std::min<std::size_t>(3, n_classes));
  r.kappa = cohens_kappa(r.confusion);
  r.auc_macro = auc_macro_ovr(y_true, scores, &r.auc_skipped_classes);
  auto prf = precision_recall_f1(r.confusion);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.macro_f1 = prf.f1;
  r.per_class = prf.per_class;
  auto [mae, mse] = mae_mse(y_true, y_pred);
  r.mae = mae;
  r.mse = mse;
  return r;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["top2_accuracy"] = r.top2;
  j["top3_accuracy"] = r.top3;
  j["kappa"] = r.kappa;
  j["auc_macro"] = r.auc_macro;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["macro_f1"] = r.macro_f1;
  j["mae"] = r.mae;
  j["mse"] = r.mse;
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    nlohmann::json pc;
    pc["class"] = c < r.class_names.size() ? r.class_names[c] : std::to_string(c);
    pc["precision"] = r.per_class[c].precision;
    pc["recall"] = r.per_class[c].recall;
    pc["f1"] = r.per_class[c].f1;
    pc["support"] = r.per_class[c].support;
    pc["zero_rate_flag"] = r.per_class[c].degenerate;
    per.push_back(pc);
  }
  j["per_class"] = per;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < r.confusion.n; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.n; ++p) row.push_back(r.confusion(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  j["auc_skipped_classes"] = r.auc_skipped_classes;
  return j.dump(2);
}

std::string confusion_csv(const ConfusionMatrix& cm,
                          const std::vector<std::string>& class_names) {
  auto name = [&](std::size_t c) {
    return c < class_names.size() ? class_names[c] : std::to_string(c);
  };
  std::string out = "true\\pred";
  for (std::size_t p = 0; p < cm.n; ++p) out += "," + name(p);
  out += "\n";
  for (std::size_t t = 0; t < cm.n; ++t) {
    out += name(t);
    for (std::size_t p = 0; p < cm.n; ++p) out += "," + std::to_string(cm(t, p));
    out += "\n";
  }
  return out;
}

}  // namespace attdicnn::metrics
