#ifndef ATTDICNN_PIPELINE_HPP
#define ATTDICNN_PIPELINE_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attdicnn/edf.hpp"
#include "attdicnn/layout.hpp"
#include "attdicnn/model.hpp"
#include "attdicnn/sampling.hpp"

// End-to-end orchestration behind the CLI subcommands. Every command is a
// plain function returning a process exit code, so the integration tests can
// drive them without spawning processes.
namespace attdicnn::pipeline {

// ------------------------------------------------------------- manifests --

struct ManifestRow {
  std::string path;  // relative to the manifest file
  int label = 0;
  std::string class_name;
  std::string source_id;
  bool synthetic = false;
};

struct Manifest {
  std::vector<ManifestRow> rows;

  std::vector<std::string> class_names() const;  // indexed by label
  int n_classes() const;
};

std::string manifest_csv(const Manifest& manifest);
Manifest parse_manifest_csv(const std::string& text);
Manifest load_manifest(const std::string& path);

// Loads every referenced image; paths resolve against the manifest location.
sampling::ImageDataset load_dataset(const std::string& manifest_path,
                                    bool include_synthetic = true);

// ----------------------------------------------------------- run manifest --

struct RunManifest {
  std::string command;
  std::string config_snapshot;  // JSON text
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> files;  // path, sha256
  double total_seconds = 0.0;

  std::string to_json() const;
};

void add_written_file(RunManifest& rm, const std::string& path,
                      const std::string& content);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// ----------------------------------------------------------------- convert --

struct ConvertOptions {
  std::vector<std::string> edf_paths;
  std::vector<std::string> annot_paths;  // empty, or parallel to edf_paths
  std::string preset = "EDFX";           // EDFX | HMC | NCH | custom
  std::string channel;                   // empty = preset default
  double epoch_seconds = 30.0;
  double resample_hz = 100.0;
  double crop_seconds = 0.0;  // 0 = no crop
  layout::LayoutConfig layout;
  std::optional<edf::StageMap> stage_map;  // required for preset "custom"
  std::string out_dir = "out";
  int jobs = 1;
  bool dump_positions = false;
  bool dump_edges = false;
};

edf::StageMap preset_stage_map(const std::string& preset);
std::string preset_channel(const std::string& preset);

int cmd_convert(const ConvertOptions& options, std::ostream& log);

// ----------------------------------------------------------------- balance --

struct BalanceOptions {
  std::string manifest_path;
  std::string out_dir;
  sampling::SamplerConfig sampler;
};

int cmd_balance(const BalanceOptions& options, std::ostream& log);

// ------------------------------------------------------------------- train --

struct TrainOptions {
  std::string manifest_path;
  std::string out_dir = "out";
  model::ModelConfig model;
  model::TrainConfig train;
  sampling::SamplerConfig sampler;
  std::string mode = "holdout";           // holdout | kfold
  std::string smote_mode = "train-only";  // train-only | full | off
};

int cmd_train(const TrainOptions& options, std::ostream& log);

// ---------------------------------------------------------------- evaluate --

struct EvaluateOptions {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string report_path = "report.json";
  std::string confusion_path;    // empty = next to the report
  std::string eval_on = "original";  // original | balanced
};

int cmd_evaluate(const EvaluateOptions& options, std::ostream& log);

// ----------------------------------------------------------------- predict --

struct PredictOptions {
  std::string checkpoint_path;
  std::string image_path;
};

int cmd_predict(const PredictOptions& options, std::ostream& out);

// ---------------------------------------------------------- export-weights --

struct ExportWeightsOptions {
  std::string checkpoint_path;
  std::string module_tag = "LSFE";
  std::string out_path = "weights.csv";
};

int cmd_export_weights(const ExportWeightsOptions& options, std::ostream& log);

// ------------------------------------------------------------------- sweep --

struct SweepOptions {
  TrainOptions base;
  std::vector<int> batch_sizes = {32, 64, 128, 256, 512, 1024};
};

int cmd_sweep(const SweepOptions& options, std::ostream& log);

}  // namespace attdicnn::pipeline

#endif
