// attdicnn: sleep EEG -> visibility-graph layout images -> sleep stage model.
// Subcommands mirror the pipeline stages; a JSON config file provides
// defaults and every flag given on the command line wins over it.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attdicnn/model_io.hpp"
#include "attdicnn/pipeline.hpp"

namespace {

using nlohmann::json;
using namespace attdicnn;

json load_config_json(int argc, char** argv) {
  std::string path;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") path = argv[i + 1];
  }
  if (path.empty()) {
    const char* env = std::getenv("ATTDICNN_CONFIG");
    if (env) path = env;
  }
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  json j;
  in >> j;
  return j;
}

template <typename T>
T cfg_get(const json& j, const std::string& section, const std::string& key, T fallback) {
  if (j.contains(section) && j[section].contains(key)) return j[section][key].get<T>();
  return fallback;
}

template <typename T>
T cfg_get(const json& j, const std::string& key, T fallback) {
  if (j.contains(key)) return j[key].get<T>();
  return fallback;
}

layout::LayoutConfig layout_from_config(const json& cfg) {
  layout::LayoutConfig l;
  l.spring_length = cfg_get(cfg, "layout", "spring_length", l.spring_length);
  l.spring_constant = cfg_get(cfg, "layout", "spring_constant", l.spring_constant);
  l.tolerance = cfg_get(cfg, "layout", "tolerance", l.tolerance);
  l.max_iterations = cfg_get(cfg, "layout", "max_iterations", l.max_iterations);
  l.seed = cfg_get(cfg, "layout", "seed", l.seed);
  return l;
}

sampling::SamplerConfig sampler_from_config(const json& cfg) {
  sampling::SamplerConfig s;
  s.k_neighbors = cfg_get(cfg, "sampler", "k_neighbors", s.k_neighbors);
  s.seed = cfg_get(cfg, "sampler", "seed", s.seed);
  s.split_ratio = cfg_get(cfg, "sampler", "split_ratio", s.split_ratio);
  s.folds = cfg_get(cfg, "sampler", "folds", s.folds);
  return s;
}

model::ModelConfig model_from_config(const json& cfg) {
  model::ModelConfig m;
  if (cfg.contains("model")) model::from_json(cfg["model"], m);
  return m;
}

model::TrainConfig train_from_config(const json& cfg) {
  model::TrainConfig t;
  t.epochs = cfg_get(cfg, "train", "epochs", t.epochs);
  t.lr = cfg_get(cfg, "train", "lr", t.lr);
  t.patience = cfg_get(cfg, "train", "patience", t.patience);
  t.seed = cfg_get(cfg, "train", "seed", t.seed);
  t.batch_size = cfg_get(cfg, "train", "batch_size", t.batch_size);
  t.jobs = cfg_get(cfg, "train", "jobs", t.jobs);
  return t;
}

edf::StageMap stage_map_from_config(const json& cfg) {
  if (!cfg.contains("stage_map"))
    throw std::runtime_error("preset \"custom\" needs a stage_map config section");
  edf::StageMap m;
  m.class_names = cfg["stage_map"].at("class_names").get<std::vector<std::string>>();
  for (auto& [label, idx] : cfg["stage_map"].at("labels").items())
    m.label_to_class[label] = idx.get<int>();
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG sleep staging via visibility-graph force-directed layouts"};
  app.require_subcommand(1);

  json cfg;
  try {
    cfg = load_config_json(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "event=error message=\"" << e.what() << "\"\n";
    return 1;
  }

  std::string config_path;  // consumed by load_config_json; declared so CLI11 accepts it
  app.add_option("--config", config_path, "JSON config file (or ATTDICNN_CONFIG env)");
  app.fallthrough();  // lets --config appear after the subcommand name

  // ---- convert ----
  pipeline::ConvertOptions conv;
  conv.preset = cfg_get(cfg, "preset", conv.preset);
  conv.channel = cfg_get(cfg, "channel", conv.channel);
  conv.epoch_seconds = cfg_get(cfg, "epoch_seconds", conv.epoch_seconds);
  conv.resample_hz = cfg_get(cfg, "resample_hz", conv.resample_hz);
  conv.crop_seconds = cfg_get(cfg, "crop_seconds", conv.crop_seconds);
  conv.layout = layout_from_config(cfg);
  conv.out_dir = cfg_get(cfg, "io", "out_dir", conv.out_dir);
  conv.jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (conv.jobs < 1) conv.jobs = 1;

  auto* convert_cmd = app.add_subcommand("convert", "EDF + annotations -> layout images");
  convert_cmd->add_option("--edf", conv.edf_paths, "EDF recording file(s)")->required();
  convert_cmd->add_option("--annot", conv.annot_paths,
                          "annotation file per recording (EDF+ or text table); "
                          "defaults to annotations embedded in the recording");
  convert_cmd->add_option("--preset", conv.preset, "EDFX | HMC | NCH | custom");
  convert_cmd->add_option("--channel", conv.channel, "EEG channel label");
  convert_cmd->add_option("--epoch-seconds", conv.epoch_seconds, "epoch window length");
  convert_cmd->add_option("--resample-hz", conv.resample_hz, "target sampling rate");
  convert_cmd->add_option("--crop-seconds", conv.crop_seconds,
                          "keep only the first N seconds (0 = whole recording)");
  convert_cmd->add_option("--out", conv.out_dir, "output directory");
  convert_cmd->add_option("--jobs", conv.jobs, "parallel epoch conversions");
  convert_cmd->add_option("--spring-length", conv.layout.spring_length, "layout L");
  convert_cmd->add_option("--spring-constant", conv.layout.spring_constant, "layout K");
  convert_cmd->add_option("--tolerance", conv.layout.tolerance, "layout gradient stop");
  convert_cmd->add_option("--max-iterations", conv.layout.max_iterations,
                          "layout iteration cap (0 = 200*n)");
  convert_cmd->add_option("--seed", conv.layout.seed, "layout jitter seed");
  convert_cmd->add_flag("--dump-positions", conv.dump_positions,
                        "also write per-image node position CSVs");
  convert_cmd->add_flag("--dump-edges", conv.dump_edges,
                        "also write per-image graph edge lists");

  // ---- balance ----
  pipeline::BalanceOptions bal;
  bal.sampler = sampler_from_config(cfg);
  bal.out_dir = cfg_get(cfg, "io", "out_dir", std::string("out"));
  auto* balance_cmd = app.add_subcommand("balance", "SMOTE-balance an image corpus");
  balance_cmd->add_option("--manifest", bal.manifest_path, "input manifest CSV")->required();
  balance_cmd->add_option("--out", bal.out_dir, "output directory");
  balance_cmd->add_option("--k-neighbors", bal.sampler.k_neighbors, "SMOTE neighbors");
  balance_cmd->add_option("--seed", bal.sampler.seed, "sampler seed");

  // ---- train ----
  pipeline::TrainOptions tr;
  tr.model = model_from_config(cfg);
  tr.train = train_from_config(cfg);
  tr.sampler = sampler_from_config(cfg);
  tr.out_dir = cfg_get(cfg, "io", "out_dir", tr.out_dir);
  bool paper_faithful = false;
  auto* train_cmd = app.add_subcommand("train", "train the classifier on a manifest");
  train_cmd->add_option("--manifest", tr.manifest_path, "input manifest CSV")->required();
  train_cmd->add_option("--out", tr.out_dir, "output directory");
  train_cmd->add_option("--mode", tr.mode, "holdout | kfold");
  train_cmd->add_option("--smote-mode", tr.smote_mode, "train-only | full | off");
  train_cmd->add_flag("--paper-faithful", paper_faithful,
                      "balance the full dataset before splitting (smote-mode=full)");
  train_cmd->add_option("--epochs", tr.train.epochs, "epoch cap");
  train_cmd->add_option("--lr", tr.train.lr, "Adam learning rate");
  train_cmd->add_option("--patience", tr.train.patience, "early stopping patience");
  train_cmd->add_option("--seed", tr.train.seed, "training seed");
  train_cmd->add_option("--batch-size", tr.train.batch_size, "mini-batch size");
  train_cmd->add_option("--jobs", tr.train.jobs, "batch-parallel worker threads");
  train_cmd->add_option("--ratio", tr.sampler.split_ratio, "holdout train fraction");
  train_cmd->add_option("--folds", tr.sampler.folds, "fold count for kfold mode");
  train_cmd->add_option("--k-neighbors", tr.sampler.k_neighbors, "SMOTE neighbors");
  train_cmd->add_option("--dropout", tr.model.dropout, "dropout rate");

  // ---- evaluate ----
  pipeline::EvaluateOptions ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "metrics report for a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--manifest", ev.manifest_path, "manifest CSV")->required();
  eval_cmd->add_option("--report", ev.report_path, "output report JSON");
  eval_cmd->add_option("--confusion", ev.confusion_path, "output confusion CSV");
  eval_cmd->add_option("--eval-on", ev.eval_on, "original | balanced");

  // ---- predict ----
  pipeline::PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "classify one layout image");
  predict_cmd->add_option("--checkpoint", pr.checkpoint_path, "checkpoint file")->required();
  predict_cmd->add_option("--image", pr.image_path, "PGM image")->required();

  // ---- export-weights ----
  pipeline::ExportWeightsOptions ew;
  auto* export_cmd = app.add_subcommand("export-weights",
                                        "dump kernel weight values of one block");
  export_cmd->add_option("--checkpoint", ew.checkpoint_path, "checkpoint file")->required();
  export_cmd->add_option("--tag", ew.module_tag, "LSFE | S2TLR | G2A");
  export_cmd->add_option("--out", ew.out_path, "output CSV");

  // ---- sweep ----
  pipeline::SweepOptions sw;
  sw.base = tr;
  auto* sweep_cmd = app.add_subcommand("sweep", "train/evaluate across batch sizes");
  sweep_cmd->add_option("--manifest", sw.base.manifest_path, "input manifest CSV")
      ->required();
  sweep_cmd->add_option("--out", sw.base.out_dir, "output directory");
  sweep_cmd->add_option("--batch-sizes", sw.batch_sizes, "batch sizes to sweep");
  sweep_cmd->add_option("--epochs", sw.base.train.epochs, "epoch cap");
  sweep_cmd->add_option("--seed", sw.base.train.seed, "training seed");
  sweep_cmd->add_option("--mode", sw.base.mode, "holdout | kfold");
  sweep_cmd->add_option("--smote-mode", sw.base.smote_mode, "train-only | full | off");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*convert_cmd) {
      if (conv.preset == "custom") conv.stage_map = stage_map_from_config(cfg);
      return pipeline::cmd_convert(conv, std::cout);
    }
    if (*balance_cmd) return pipeline::cmd_balance(bal, std::cout);
    if (*train_cmd) {
      if (paper_faithful) tr.smote_mode = "full";
      return pipeline::cmd_train(tr, std::cout);
    }
    if (*eval_cmd) return pipeline::cmd_evaluate(ev, std::cout);
    if (*predict_cmd) return pipeline::cmd_predict(pr, std::cout);
    if (*export_cmd) return pipeline::cmd_export_weights(ew, std::cout);
    if (*sweep_cmd) return pipeline::cmd_sweep(sw, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "event=error message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
