#include "attdicnn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "attdicnn/metrics.hpp"
#include "attdicnn/model_io.hpp"
#include "attdicnn/sha256.hpp"
#include "attdicnn/weight_export.hpp"

namespace fs = std::filesystem;

namespace attdicnn::pipeline {

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_field(const std::string& value, const std::string& what) {
  if (value.find(',') != std::string::npos || value.find('\n') != std::string::npos)
    throw std::invalid_argument(what + " may not contain commas or newlines: \"" +
                                value + "\"");
}

std::vector<const Tensor<float>*> tensor_views(const std::vector<Tensor<float>>& tensors) {
  std::vector<const Tensor<float>*> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.push_back(&t);
  return out;
}

std::vector<Tensor<float>> dataset_tensors(const sampling::ImageDataset& ds) {
  std::vector<Tensor<float>> out;
  out.reserve(ds.images.size());
  for (const auto& img : ds.images) {
    Tensor<float> t({static_cast<std::size_t>(img.side), static_cast<std::size_t>(img.side)});
    t.data.assign(img.pixels.begin(), img.pixels.end());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

// --------------------------------------------------------------- manifest --

std::vector<std::string> Manifest::class_names() const {
  int n = n_classes();
  std::vector<std::string> names(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) names[static_cast<std::size_t>(c)] = std::to_string(c);
  for (const ManifestRow& row : rows)
    if (!row.class_name.empty()) names[static_cast<std::size_t>(row.label)] = row.class_name;
  return names;
}

int Manifest::n_classes() const {
  int n = 0;
  for (const ManifestRow& row : rows) n = std::max(n, row.label + 1);
  return n;
}

std::string manifest_csv(const Manifest& manifest) {
  bool any_synthetic = false;
  for (const ManifestRow& row : manifest.rows) any_synthetic |= row.synthetic;

  std::string out = any_synthetic ? "path,label,class_name,source_id,synthetic\n"
                                  : "path,label,class_name,source_id\n";
  for (const ManifestRow& row : manifest.rows) {
    check_field(row.path, "manifest path");
    check_field(row.class_name, "class name");
    check_field(row.source_id, "source id");
    out += row.path + "," + std::to_string(row.label) + "," + row.class_name + "," +
           row.source_id;
    if (any_synthetic) out += row.synthetic ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

Manifest parse_manifest_csv(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  bool has_synthetic = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      cols.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (header) {
      if (cols.size() < 4 || cols[0] != "path")
        throw std::runtime_error("manifest header must start with path,label,class_name,source_id");
      has_synthetic = cols.size() >= 5 && cols[4] == "synthetic";
      header = false;
      continue;
    }
    if (cols.size() < 4)
      throw std::runtime_error("manifest row has fewer than 4 columns: " + line);
    ManifestRow row;
    row.path = cols[0];
    row.label = std::stoi(cols[1]);
    row.class_name = cols[2];
    row.source_id = cols[3];
    row.synthetic = has_synthetic && cols.size() >= 5 && cols[4] == "1";
    m.rows.push_back(std::move(row));
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  return parse_manifest_csv(read_text_file(path));
}

sampling::ImageDataset load_dataset(const std::string& manifest_path,
                                    bool include_synthetic) {
  Manifest m = load_manifest(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();

  sampling::ImageDataset ds;
  ds.class_names = m.class_names();
  for (const ManifestRow& row : m.rows) {
    if (!include_synthetic && row.synthetic) continue;
    layout::FdlImage img = layout::read_pgm_file((base / row.path).string());
    img.label = row.label;
    ds.images.push_back(std::move(img));
    ds.labels.push_back(row.label);
    ds.source_ids.push_back(row.source_id);
    ds.synthetic.push_back(row.synthetic);
  }
  return ds;
}

// ----------------------------------------------------------- run manifest --

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = nlohmann::json::parse(config_snapshot.empty() ? "{}" : config_snapshot);
  j["seed"] = seed;
  nlohmann::json files_json = nlohmann::json::array();
  for (const auto& [path, sha] : files)
    files_json.push_back({{"path", path}, {"sha256", sha}});
  j["files"] = files_json;
  j["total_seconds"] = total_seconds;
  return j.dump(2);
}

void add_written_file(RunManifest& rm, const std::string& path,
                      const std::string& content) {
  rm.files.emplace_back(path, Sha256::hash_hex(content));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// ----------------------------------------------------------------- convert --

edf::StageMap preset_stage_map(const std::string& preset) {
  if (preset == "EDFX") return edf::edfx_stage_map();
  if (preset == "HMC") return edf::hmc_stage_map();
  if (preset == "NCH") return edf::nch_stage_map();
  throw std::invalid_argument("no stage map preset named \"" + preset + "\"");
}

std::string preset_channel(const std::string& preset) {
  if (preset == "EDFX") return "EEG Fpz-Cz";
  if (preset == "HMC" || preset == "NCH") return "EEG C3-M2";
  throw std::invalid_argument("no channel preset named \"" + preset + "\"");
}

namespace {

// Annotations referenced by path: an EDF container with one or more
// "EDF Annotations" channels, or a plain text table.
std::vector<edf::SleepAnnotation> read_annotations(const std::string& path) {
  std::string bytes = read_text_file(path);
  try {
    edf::EdfFile file = edf::parse_edf(bytes);
    std::string tal;
    for (std::size_t i = 0; i < file.header.signals.size(); ++i)
      if (file.header.signals[i].is_annotation_channel())
        tal += edf::annotation_bytes(file, i);
    if (tal.empty())
      throw std::runtime_error(path + " is an EDF file without an annotation channel");
    return edf::parse_annotations(tal);
  } catch (const edf::ParseError&) {
    return edf::parse_annotations(bytes);
  }
}

struct EpochJob {
  edf::TimeSeriesEpoch epoch;
  std::string source;
  std::size_t index_in_source = 0;
};

}  // namespace

int cmd_convert(const ConvertOptions& options, std::ostream& log) {
  auto t0 = std::chrono::steady_clock::now();
  if (options.edf_paths.empty()) {
    log << "event=error message=no_input_files\n";
    return 1;
  }
  if (!options.annot_paths.empty() &&
      options.annot_paths.size() != options.edf_paths.size())
    throw std::invalid_argument("annotation list must match EDF list length");

  edf::StageMap stage_map =
      options.stage_map ? *options.stage_map : preset_stage_map(options.preset);
  std::string channel =
      options.channel.empty() ? preset_channel(options.preset) : options.channel;

  fs::create_directories(options.out_dir);

  std::vector<EpochJob> jobs;
  std::size_t failures = 0;
  for (std::size_t f = 0; f < options.edf_paths.size(); ++f) {
    const std::string& path = options.edf_paths[f];
    try {
      edf::EdfFile file = edf::parse_edf(read_text_file(path));

      std::vector<edf::SampledSignal> signals;
      std::string embedded_tal;
      for (std::size_t i = 0; i < file.header.signals.size(); ++i) {
        if (file.header.signals[i].is_annotation_channel())
          embedded_tal += edf::annotation_bytes(file, i);
        else
          signals.push_back(edf::physical_signal(file, i));
      }

      std::vector<edf::SleepAnnotation> annotations;
      if (f < options.annot_paths.size() && !options.annot_paths[f].empty())
        annotations = read_annotations(options.annot_paths[f]);
      else if (!embedded_tal.empty())
        annotations = edf::parse_annotations(embedded_tal);
      else
        throw std::runtime_error("no annotations given for " + path);

      edf::SampledSignal signal = edf::select_channel(signals, channel);
      if (options.crop_seconds > 0.0) {
        std::size_t keep = static_cast<std::size_t>(
            std::floor(options.crop_seconds * signal.rate_hz + 1e-9));
        if (keep < signal.samples.size()) signal.samples.resize(keep);
      }
      if (signal.rate_hz != options.resample_hz)
        signal = edf::resample(signal, options.resample_hz);

      std::string source = fs::path(path).stem().string();
      auto epochs = edf::extract_epochs(signal, annotations, options.epoch_seconds,
                                        stage_map, source);
      log << "event=parsed file=" << path << " epochs=" << epochs.size() << "\n";
      for (std::size_t i = 0; i < epochs.size(); ++i)
        jobs.push_back({std::move(epochs[i]), source, i});
    } catch (const std::exception& e) {
      ++failures;
      log << "event=parse_error file=" << path << " error=\"" << e.what() << "\"\n";
    }
  }
  if (failures == options.edf_paths.size()) {
    log << "event=error message=all_inputs_failed\n";
    return 1;
  }

  RunManifest rm;
  rm.command = "convert";
  rm.seed = options.layout.seed;
  {
    nlohmann::json snap;
    snap["preset"] = options.preset;
    snap["channel"] = channel;
    snap["epoch_seconds"] = options.epoch_seconds;
    snap["resample_hz"] = options.resample_hz;
    snap["crop_seconds"] = options.crop_seconds;
    snap["class_names"] = stage_map.class_names;
    snap["layout"] = {{"spring_length", options.layout.spring_length},
                      {"spring_constant", options.layout.spring_constant},
                      {"tolerance", options.layout.tolerance},
                      {"max_iterations", options.layout.max_iterations},
                      {"seed", options.layout.seed}};
    rm.config_snapshot = snap.dump();
  }

  // Epoch fan-out: each job renders independently, so scheduling cannot
  // change any output byte. Names come from (source, index, label).
  struct JobOutput {
    ManifestRow row;
    std::string pgm_bytes;
    std::string positions;
    std::string edges;
  };
  std::vector<JobOutput> outputs(jobs.size());
  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      std::size_t i = cursor.fetch_add(1);
      if (i >= jobs.size() || failed.load()) break;
      try {
        const EpochJob& job = jobs[i];
        auto normalized = sampling::minmax_normalize(job.epoch.samples);
        auto graph = vg::build_nvg_fast(normalized);
        auto laid_out = layout::kamada_kawai(graph, options.layout);
        layout::FdlImage image = layout::rasterize(laid_out);
        image.label = job.epoch.stage;

        std::string name = job.source + "_" + std::to_string(job.index_in_source) + "_" +
                           std::to_string(job.epoch.stage) + ".pgm";
        std::ostringstream pgm;
        layout::write_pgm(pgm, image);

        JobOutput out;
        out.row = {name, job.epoch.stage,
                   stage_map.class_names[static_cast<std::size_t>(job.epoch.stage)],
                   job.source, false};
        out.pgm_bytes = pgm.str();
        if (options.dump_positions) out.positions = layout::positions_csv(laid_out);
        if (options.dump_edges) out.edges = vg::edge_list_text(graph);
        outputs[i] = std::move(out);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };

  int n_threads = std::max(1, options.jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw std::runtime_error("epoch conversion failed: " + first_error);

  Manifest manifest;
  for (JobOutput& out : outputs) {
    std::string path = join_path(options.out_dir, out.row.path);
    write_text_file(path, out.pgm_bytes);
    add_written_file(rm, out.row.path, out.pgm_bytes);
    std::string stem = out.row.path.substr(0, out.row.path.size() - 4);
    if (options.dump_positions) {
      std::string pos_name = stem + "_positions.csv";
      write_text_file(join_path(options.out_dir, pos_name), out.positions);
      add_written_file(rm, pos_name, out.positions);
    }
    if (options.dump_edges) {
      std::string edge_name = stem + "_edges.txt";
      write_text_file(join_path(options.out_dir, edge_name), out.edges);
      add_written_file(rm, edge_name, out.edges);
    }
    manifest.rows.push_back(std::move(out.row));
  }

  std::string manifest_text = manifest_csv(manifest);
  write_text_file(join_path(options.out_dir, "manifest.csv"), manifest_text);
  add_written_file(rm, "manifest.csv", manifest_text);

  rm.total_seconds = seconds_since(t0);
  write_text_file(join_path(options.out_dir, "run_manifest.json"), rm.to_json());

  log << "event=convert_done images=" << manifest.rows.size()
      << " out_dir=" << options.out_dir << " seconds=" << rm.total_seconds << "\n";
  return 0;
}

// ----------------------------------------------------------------- balance --

int cmd_balance(const BalanceOptions& options, std::ostream& log) {
  auto t0 = std::chrono::steady_clock::now();
  Manifest manifest = load_manifest(options.manifest_path);
  sampling::ImageDataset dataset = load_dataset(options.manifest_path, true);

  fs::create_directories(options.out_dir);
  sampling::ImageDataset balanced = sampling::smote_balance(dataset, options.sampler);

  RunManifest rm;
  rm.command = "balance";
  rm.seed = options.sampler.seed;
  {
    nlohmann::json snap;
    snap["k_neighbors"] = options.sampler.k_neighbors;
    snap["seed"] = options.sampler.seed;
    rm.config_snapshot = snap.dump();
  }

  Manifest out_manifest = manifest;
  fs::path manifest_dir = fs::path(options.manifest_path).parent_path();
  fs::path out_dir_abs = fs::absolute(options.out_dir);

  // Original rows keep their files; re-point the paths when the balanced
  // manifest lands in a different directory.
  for (ManifestRow& row : out_manifest.rows) {
    fs::path abs = fs::absolute(manifest_dir / row.path);
    row.path = fs::relative(abs, out_dir_abs).string();
  }

  std::size_t synth_count = 0;
  for (std::size_t i = dataset.images.size(); i < balanced.images.size(); ++i) {
    const auto& img = balanced.images[i];
    std::string name = "smote_" +
                       balanced.class_names[static_cast<std::size_t>(img.label)] + "_" +
                       std::to_string(synth_count++) + ".pgm";
    std::ostringstream pgm;
    layout::write_pgm(pgm, img);
    write_text_file(join_path(options.out_dir, name), pgm.str());
    add_written_file(rm, name, pgm.str());
    out_manifest.rows.push_back({name, img.label,
                                 balanced.class_names[static_cast<std::size_t>(img.label)],
                                 balanced.source_ids[i], true});
  }

  std::string manifest_text = manifest_csv(out_manifest);
  write_text_file(join_path(options.out_dir, "manifest_balanced.csv"), manifest_text);
  add_written_file(rm, "manifest_balanced.csv", manifest_text);

  rm.total_seconds = seconds_since(t0);
  write_text_file(join_path(options.out_dir, "run_manifest_balance.json"), rm.to_json());

  log << "event=balance_done originals=" << dataset.images.size()
      << " synthetics=" << synth_count << "\n";
  return 0;
}

// ------------------------------------------------------------------- train --

namespace {

struct PreparedSplit {
  sampling::ImageDataset train;
  sampling::ImageDataset val;
};

PreparedSplit prepare_holdout(const sampling::ImageDataset& dataset,
                              const TrainOptions& options, std::ostream& log) {
  sampling::ImageDataset source = dataset;
  if (options.smote_mode == "full") {
    source = sampling::smote_balance(source, options.sampler);
    log << "event=smote scope=full size=" << source.size() << "\n";
  }
  auto [train_set, val_set] =
      sampling::stratified_split(source, options.sampler.split_ratio, options.sampler.seed);
  if (options.smote_mode == "train-only") {
    std::size_t before = train_set.size();
    train_set = sampling::smote_balance(train_set, options.sampler);
    log << "event=smote scope=train before=" << before << " after=" << train_set.size()
        << "\n";
  }
  return {std::move(train_set), std::move(val_set)};
}

}  // namespace

int cmd_train(const TrainOptions& options, std::ostream& log) {
  auto t0 = std::chrono::steady_clock::now();
  sampling::ImageDataset dataset = load_dataset(options.manifest_path, true);
  if (dataset.size() == 0) throw std::runtime_error("empty dataset");

  // class count follows the data: every label must be addressable and the
  // manifest's class list fixes the coding
  model::ModelConfig model_cfg = options.model;
  int max_label = 0;
  for (int l : dataset.labels) max_label = std::max(max_label, l);
  model_cfg.n_classes =
      std::max(max_label + 1, static_cast<int>(dataset.class_names.size()));
  model_cfg.batch_size = options.train.batch_size;
  model_cfg.validate();

  fs::create_directories(options.out_dir);
  log << "event=train_start images=" << dataset.size()
      << " classes=" << model_cfg.n_classes
      << " parameters=" << model::parameter_count(model_cfg) << "\n";

  RunManifest rm;
  rm.command = "train";
  rm.seed = options.train.seed;
  {
    nlohmann::json snap;
    nlohmann::json model_json;
    model::to_json(model_json, model_cfg);
    snap["model"] = model_json;
    snap["train"] = {{"epochs", options.train.epochs},
                     {"lr", options.train.lr},
                     {"patience", options.train.patience},
                     {"seed", options.train.seed},
                     {"batch_size", options.train.batch_size}};
    snap["mode"] = options.mode;
    snap["smote_mode"] = options.smote_mode;
    rm.config_snapshot = snap.dump();
  }

  auto log_epoch = [&log](const model::HistoryRow& row) {
    log << "event=epoch epoch=" << row.epoch << " train_loss=" << row.train_loss
        << " train_acc=" << row.train_acc << " val_loss=" << row.val_loss
        << " val_acc=" << row.val_acc << "\n";
  };

  if (options.mode == "holdout") {
    PreparedSplit split = prepare_holdout(dataset, options, log);
    auto train_tensors = dataset_tensors(split.train);
    auto val_tensors = dataset_tensors(split.val);
    auto result = model::train<float>(tensor_views(train_tensors), split.train.labels,
                                      tensor_views(val_tensors), split.val.labels,
                                      model_cfg, options.train, log_epoch);

    std::string ckpt = model::serialize_checkpoint(result.best_state, result.best_epoch,
                                                   result.history.empty()
                                                       ? 0.0
                                                       : result
                                                             .history[static_cast<std::size_t>(
                                                                 result.best_epoch - 1)]
                                                             .val_acc,
                                                   dataset.class_names);
    write_text_file(join_path(options.out_dir, "checkpoint.ckpt"), ckpt);
    add_written_file(rm, "checkpoint.ckpt", ckpt);

    std::string history = model::history_csv(result.history);
    write_text_file(join_path(options.out_dir, "history.csv"), history);
    add_written_file(rm, "history.csv", history);

    log << "event=train_done best_epoch=" << result.best_epoch
        << " stopped_epoch=" << result.stopped_epoch
        << " early_stopped=" << (result.early_stopped ? 1 : 0) << "\n";
  } else if (options.mode == "kfold") {
    auto folds =
        sampling::stratified_kfold(dataset.labels, options.sampler.folds,
                                   options.sampler.seed);
    double best_acc = -1.0;
    int best_fold = -1;
    nlohmann::json fold_summary = nlohmann::json::array();
    std::string best_ckpt;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      sampling::ImageDataset train_set = sampling::subset(dataset, folds[f].train_idx);
      sampling::ImageDataset val_set = sampling::subset(dataset, folds[f].val_idx);
      if (options.smote_mode == "train-only" || options.smote_mode == "full")
        train_set = sampling::smote_balance(train_set, options.sampler);

      log << "event=fold_start fold=" << f << " train=" << train_set.size()
          << " val=" << val_set.size() << "\n";
      auto train_tensors = dataset_tensors(train_set);
      auto val_tensors = dataset_tensors(val_set);
      auto result = model::train<float>(tensor_views(train_tensors), train_set.labels,
                                        tensor_views(val_tensors), val_set.labels,
                                        model_cfg, options.train, log_epoch);
      double fold_acc =
          result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_acc;

      std::string ckpt = model::serialize_checkpoint(result.best_state, result.best_epoch,
                                                     fold_acc, dataset.class_names);
      std::string ckpt_name = "checkpoint_fold" + std::to_string(f) + ".ckpt";
      write_text_file(join_path(options.out_dir, ckpt_name), ckpt);
      add_written_file(rm, ckpt_name, ckpt);
      std::string history = model::history_csv(result.history);
      std::string hist_name = "history_fold" + std::to_string(f) + ".csv";
      write_text_file(join_path(options.out_dir, hist_name), history);
      add_written_file(rm, hist_name, history);

      fold_summary.push_back({{"fold", f},
                              {"best_epoch", result.best_epoch},
                              {"val_accuracy", fold_acc},
                              {"early_stopped", result.early_stopped}});
      if (fold_acc > best_acc) {
        best_acc = fold_acc;
        best_fold = static_cast<int>(f);
        best_ckpt = ckpt;
      }
    }
    write_text_file(join_path(options.out_dir, "checkpoint.ckpt"), best_ckpt);
    add_written_file(rm, "checkpoint.ckpt", best_ckpt);
    nlohmann::json summary;
    summary["folds"] = fold_summary;
    summary["best_fold"] = best_fold;
    summary["best_val_accuracy"] = best_acc;
    std::string summary_text = summary.dump(2);
    write_text_file(join_path(options.out_dir, "kfold_summary.json"), summary_text);
    add_written_file(rm, "kfold_summary.json", summary_text);
    log << "event=kfold_done best_fold=" << best_fold << " val_acc=" << best_acc << "\n";
  } else {
    throw std::invalid_argument("unknown train mode \"" + options.mode + "\"");
  }

  rm.total_seconds = seconds_since(t0);
  write_text_file(join_path(options.out_dir, "run_manifest_train.json"), rm.to_json());
  return 0;
}

// ---------------------------------------------------------------- evaluate --

int cmd_evaluate(const EvaluateOptions& options, std::ostream& log) {
  model::CheckpointMeta meta;
  auto state = model::load_checkpoint<float>(options.checkpoint_path, &meta);

  bool include_synthetic = options.eval_on == "balanced";
  sampling::ImageDataset dataset = load_dataset(options.manifest_path, include_synthetic);
  if (dataset.size() == 0) throw std::runtime_error("empty evaluation set");
  int max_label = 0;
  for (int l : dataset.labels) max_label = std::max(max_label, l);
  if (max_label >= state.config.n_classes)
    throw std::runtime_error("manifest labels reach " + std::to_string(max_label) +
                             " but the checkpoint has " +
                             std::to_string(state.config.n_classes) + " classes");

  auto tensors = dataset_tensors(dataset);
  auto eval = model::evaluate(state, tensor_views(tensors), dataset.labels);

  std::vector<std::string> names =
      meta.class_names.empty() ? dataset.class_names : meta.class_names;
  auto report = metrics::full_report(dataset.labels, eval.scores,
                                     static_cast<std::size_t>(state.config.n_classes),
                                     names);

  std::string report_text = metrics::report_json(report);
  write_text_file(options.report_path, report_text);
  std::string confusion_path = options.confusion_path.empty()
                                   ? options.report_path + ".confusion.csv"
                                   : options.confusion_path;
  write_text_file(confusion_path, metrics::confusion_csv(report.confusion, names));

  log << "event=evaluate_done samples=" << dataset.size()
      << " accuracy=" << report.accuracy << " kappa=" << report.kappa
      << " report=" << options.report_path << "\n";
  return 0;
}

// ----------------------------------------------------------------- predict --

int cmd_predict(const PredictOptions& options, std::ostream& out) {
  model::CheckpointMeta meta;
  auto state = model::load_checkpoint<float>(options.checkpoint_path, &meta);
  layout::FdlImage img = layout::read_pgm_file(options.image_path);

  Tensor<float> t({static_cast<std::size_t>(img.side), static_cast<std::size_t>(img.side)});
  t.data.assign(img.pixels.begin(), img.pixels.end());
  auto logits = model::attdicnn_forward(t, state, nn::Mode::infer);
  auto probs = nn::softmax(logits.data);
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;

  std::string name = best < meta.class_names.size() ? meta.class_names[best]
                                                    : std::to_string(best);
  out << "class=" << best << " name=" << name << " scores=";
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (c) out << ",";
    out << probs[c];
  }
  out << "\n";
  return 0;
}

// ---------------------------------------------------------- export-weights --

int cmd_export_weights(const ExportWeightsOptions& options, std::ostream& log) {
  auto state = model::load_checkpoint<float>(options.checkpoint_path);
  std::string csv = metrics::export_weight_distribution(state, options.module_tag);
  write_text_file(options.out_path, csv);
  log << "event=export_weights_done tag=" << options.module_tag
      << " out=" << options.out_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- sweep --

int cmd_sweep(const SweepOptions& options, std::ostream& log) {
  std::string summary =
      "batch_size,accuracy,top2_accuracy,top3_accuracy,kappa,auc,precision,recall,"
      "macro_f1,mae,mse\n";
  for (int b : options.batch_sizes) {
    TrainOptions run = options.base;
    run.train.batch_size = b;
    run.out_dir = join_path(options.base.out_dir, "sweep_b" + std::to_string(b));
    log << "event=sweep_run batch_size=" << b << "\n";
    int rc = cmd_train(run, log);
    if (rc != 0) return rc;

    EvaluateOptions eval;
    eval.checkpoint_path = join_path(run.out_dir, "checkpoint.ckpt");
    eval.manifest_path = options.base.manifest_path;
    eval.report_path = join_path(run.out_dir, "report.json");
    rc = cmd_evaluate(eval, log);
    if (rc != 0) return rc;

    nlohmann::json report = nlohmann::json::parse(read_text_file(eval.report_path));
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  b, report["accuracy"].get<double>(),
                  report["top2_accuracy"].get<double>(),
                  report["top3_accuracy"].get<double>(), report["kappa"].get<double>(),
                  report["auc_macro"].get<double>(), report["precision"].get<double>(),
                  report["recall"].get<double>(), report["macro_f1"].get<double>(),
                  report["mae"].get<double>(), report["mse"].get<double>());
    summary += buf;
  }
  write_text_file(join_path(options.base.out_dir, "sweep_summary.csv"), summary);
  log << "event=sweep_done out=" << join_path(options.base.out_dir, "sweep_summary.csv")
      << "\n";
  return 0;
}

}  // namespace attdicnn::pipeline
