#ifndef ATTDICNN_METRICS_HPP
#define ATTDICNN_METRICS_HPP

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace attdicnn::metrics {

struct ConfusionMatrix {
  std::size_t n = 0;
  std::vector<long> cells;  // row = true class, col = predicted

  long operator()(std::size_t t, std::size_t p) const { return cells[t * n + p]; }
  long& operator()(std::size_t t, std::size_t p) { return cells[t * n + p]; }
  long total() const;
};

struct PerClass {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  long support = 0;
  bool degenerate = false;  // a 0/0 rate was defined as 0
};

struct EvalReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0, top2 = 0.0, top3 = 0.0;
  double kappa = 0.0;
  double auc_macro = 0.0;
  double precision = 0.0, recall = 0.0, macro_f1 = 0.0;
  double mae = 0.0, mse = 0.0;
  std::vector<PerClass> per_class;
  std::vector<std::size_t> auc_skipped_classes;  // absent from y
  std::vector<std::string> class_names;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, std::size_t n_classes);

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Top-k membership by descending score, ties broken toward the lower index.
double top_k_accuracy(const std::vector<int>& y_true,
                      const std::vector<std::vector<double>>& scores, std::size_t k);

struct MacroPrf {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<PerClass> per_class;
};

// One-vs-rest TP/FP/FN per class, unweighted macro average, 0/0 -> 0.
MacroPrf precision_recall_f1(const ConfusionMatrix& cm);

double cohens_kappa(const ConfusionMatrix& cm);

// Macro one-vs-rest ROC AUC via the rank statistic (ties get half credit);
// classes missing from y_true are skipped and reported.
double auc_macro_ovr(const std::vector<int>& y_true,
                     const std::vector<std::vector<double>>& scores,
                     std::vector<std::size_t>* skipped = nullptr);

std::pair<double, double> mae_mse(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred);

EvalReport full_report(const std::vector<int>& y_true,
                       const std::vector<std::vector<double>>& scores,
                       std::size_t n_classes,
                       const std::vector<std::string>& class_names = {});

std::string report_json(const EvalReport& report);
std::string confusion_csv(const ConfusionMatrix& cm,
                          const std::vector<std::string>& class_names = {});

}  // namespace attdicnn::metrics

#endif
