#pragma once

// Library form of the command-line pipeline. Each cmd_* returns its
// in-memory results and writes exactly the serialization produced by the
// format_* helpers, so the CLI stays a thin wrapper.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "monet/checkpoint.hpp"
#include "monet/config.hpp"
#include "monet/datasets.hpp"
#include "monet/evaluation.hpp"
#include "monet/graph.hpp"
#include "monet/model.hpp"
#include "monet/synthetic.hpp"
#include "monet/training.hpp"

namespace monet {

inline constexpr const char* kFeaturesTextualFile = "features_t.mmfv";
inline constexpr const char* kFeaturesVisualFile = "features_v.mmfv";
inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.tsv";
inline constexpr const char* kAvgDiffFile = "avg_diff.tsv";
inline constexpr const char* kSimilarityFile = "similarity.tsv";
inline constexpr const char* kAblationFile = "ablation.tsv";

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

struct PreparedBundle {
  InteractionDataset dataset;
  ModalityFeatureMatrix textual;
  ModalityFeatureMatrix visual;

  FeatureRefs<float> refs() const { return {&textual.values, &visual.values}; }
  std::array<std::size_t, 2> dims() const { return {textual.dim(), visual.dim()}; }
};

inline PreparedBundle load_bundle(const std::filesystem::path& dir) {
  PreparedBundle b;
  b.dataset = read_prepared(dir);
  b.textual = load_features(dir / kFeaturesTextualFile, b.dataset.num_items, Modality::Textual);
  b.visual = load_features(dir / kFeaturesVisualFile, b.dataset.num_items, Modality::Visual);
  return b;
}

// prepare ---------------------------------------------------------------------

struct PrepareResult {
  InteractionDataset dataset;
  DatasetStats stats;
  bool wrote_features = false;
};

inline std::string format_stats(const DatasetStats& s) {
  std::ostringstream out;
  out << "users\t" << s.users << "\titems\t" << s.items << "\tinteractions\t" << s.interactions
      << "\tsparsity\t" << format_double(s.sparsity) << '\n';
  return out.str();
}

inline PrepareResult cmd_prepare(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.interactions.empty()) throw ConfigError("prepare needs an interactions path");
  if (cfg.textual.empty() != cfg.visual.empty()) {
    throw ConfigError("prepare needs both textual and visual features, or neither");
  }
  const auto raw = load_interactions(cfg.interactions);
  const auto filtered = kcore_filter(raw, cfg.k_core);
  PrepareResult res;
  res.dataset = split_dataset(filtered, SplitRatios{}, cfg.seed);
  res.stats = dataset_stats(res.dataset);

  std::array<ModalityFeatureMatrix, 2> feats;
  if (!cfg.textual.empty()) {
    const std::array<std::filesystem::path, 2> paths{cfg.textual, cfg.visual};
    std::vector<std::string> order;
    if (!cfg.item_list.empty()) order = load_item_list(cfg.item_list);
    for (const Modality m : kModalities) {
      const int k = static_cast<int>(m);
      const auto raw_feats = mmfv::read_file(paths[k]);
      if (cfg.item_list.empty()) {
        feats[k] = {m, raw_feats};
      } else {
        feats[k] = align_features(raw_feats, order, res.dataset.item_ids, m);
      }
      validate_features(feats[k], res.dataset.num_items, paths[k].string());
    }
  }
  write_prepared(cfg.out_dir, res.dataset);
  if (!cfg.textual.empty()) {
    write_features(cfg.out_dir / kFeaturesTextualFile, feats[0]);
    write_features(cfg.out_dir / kFeaturesVisualFile, feats[1]);
    res.wrote_features = true;
  }
  return res;
}

// train -------------------------------------------------------------------------

inline std::string format_train_log(const std::vector<EpochLog>& log, std::size_t cutoff) {
  std::ostringstream out;
  const std::string n = std::to_string(cutoff);
  out << "epoch\tloss\tval_recall@" << n << "\tval_ndcg@" << n << '\n';
  for (const auto& e : log) {
    out << e.epoch << '\t' << format_double(e.loss) << '\t' << format_double(e.val_recall) << '\t'
        << format_double(e.val_ndcg) << '\n';
  }
  return out.str();
}

struct TrainOutputs {
  TrainResult<float> result;
  Checkpoint checkpoint;
};

inline TrainOutputs train_bundle(const PreparedBundle& b, const RunConfig& cfg) {
  const HyperParams hp = cfg.effective_hp();
  TrainOutputs out;
  out.result = train<float>(b.dataset, b.refs(), hp, cfg.effective_tc());
  out.checkpoint.hp = hp;
  out.checkpoint.seed = cfg.seed;
  out.checkpoint.num_users = b.dataset.num_users;
  out.checkpoint.num_items = b.dataset.num_items;
  out.checkpoint.feature_dims = b.dims();
  out.checkpoint.best_epoch = out.result.best_epoch;
  out.checkpoint.params = out.result.params;
  return out;
}

inline TrainOutputs cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const PreparedBundle b = load_bundle(cfg.data());
  TrainOutputs out = train_bundle(b, cfg);
  std::filesystem::create_directories(cfg.out_dir);
  save_checkpoint(cfg.out_dir / kCheckpointFile, out.checkpoint);
  write_text(cfg.out_dir / kTrainLogFile, format_train_log(out.result.log, cfg.cutoff));
  return out;
}

// evaluate ------------------------------------------------------------------------

struct EvaluateOutputs {
  EvalReport report;
  AvgDiffReport avg_diff;
};

inline EvaluateOutputs evaluate_params(const PreparedBundle& b, const ModelParameters<float>& params,
                                       const HyperParams& hp, const RunConfig& cfg, Phase phase) {
  const BipartiteGraph g = build_graph(b.dataset);
  const auto enc = encode(g, params, b.refs(), hp);
  EvaluateOutputs out;
  out.report = evaluate(enc, g, b.dataset, hp, cfg.cutoff, phase);
  out.avg_diff = avg_diff_report(b.refs(), enc, cfg.avg_diff_sample_mode(b.dataset.num_items));
  return out;
}

inline std::string format_eval_tsv(const EvalReport& r) {
  std::ostringstream out;
  const std::string n = std::to_string(r.n);
  out << "precision@" << n << '\t' << format_double(r.precision) << '\n';
  out << "recall@" << n << '\t' << format_double(r.recall) << '\n';
  out << "ndcg@" << n << '\t' << format_double(r.ndcg) << '\n';
  out << "num_users_evaluated\t" << r.num_users_evaluated << '\n';
  return out.str();
}

inline std::string format_avg_diff_tsv(const AvgDiffReport& r) {
  std::ostringstream out;
  for (const Modality m : kModalities) {
    out << "avg_diff_" << modality_suffix(m) << '\t' << format_double(r[m].avg_diff) << '\n';
  }
  for (const Modality m : kModalities) {
    out << "num_pairs_" << modality_suffix(m) << '\t' << r[m].num_pairs << '\n';
  }
  out << "mode\t" << r[Modality::Textual].mode.describe() << '\n';
  return out.str();
}

inline std::string format_report(const EvaluateOutputs& e, const Checkpoint& ck) {
  std::ostringstream out;
  out << "[run]\n";
  out << "phase = " << phase_name(e.report.phase) << '\n';
  out << "seed = " << ck.seed << '\n';
  out << "best_epoch = " << ck.best_epoch << '\n';
  out << "[hyperparameters]\n";
  for (const auto& [k, v] : hyperparam_entries(ck.hp)) out << k << " = " << v << '\n';
  out << "[accuracy]\n" << format_eval_tsv(e.report);
  out << "[avg_diff]\n" << format_avg_diff_tsv(e.avg_diff);
  return out.str();
}

inline void check_checkpoint_shapes(const Checkpoint& ck, const PreparedBundle& b) {
  if (ck.num_users != b.dataset.num_users) {
    throw ShapeError("user_emb0: checkpoint has " + std::to_string(ck.num_users) +
                     " users, dataset has " + std::to_string(b.dataset.num_users));
  }
  if (ck.num_items != b.dataset.num_items) {
    throw ShapeError("item count: checkpoint has " + std::to_string(ck.num_items) +
                     " items, dataset has " + std::to_string(b.dataset.num_items));
  }
  const auto dims = b.dims();
  for (const Modality m : kModalities) {
    const int k = static_cast<int>(m);
    if (ck.feature_dims[k] != dims[k]) {
      throw ShapeError(std::string("proj_weight_") + modality_suffix(m) + ": checkpoint expects " +
                       std::to_string(ck.feature_dims[k]) + "-dim features, got " +
                       std::to_string(dims[k]));
    }
  }
}

inline std::filesystem::path eval_file(Phase phase) {
  return std::string("eval_") + phase_name(phase) + ".tsv";
}

inline std::filesystem::path report_file(Phase phase) {
  return std::string("report_") + phase_name(phase) + ".txt";
}

inline EvaluateOutputs cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                    Phase phase) {
  cfg.validate();
  const PreparedBundle b = load_bundle(cfg.data());
  const Checkpoint ck = load_checkpoint(checkpoint);
  check_checkpoint_shapes(ck, b);
  EvaluateOutputs out = evaluate_params(b, ck.params, ck.hp, cfg, phase);
  std::filesystem::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / eval_file(phase), format_eval_tsv(out.report));
  write_text(cfg.out_dir / kAvgDiffFile, format_avg_diff_tsv(out.avg_diff));
  write_text(cfg.out_dir / report_file(phase), format_report(out, ck));
  return out;
}

// sweep / ablate ------------------------------------------------------------------

struct ExperimentRow {
  std::string label;
  bool ok = false;
  std::string error;
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double avg_diff_t = 0.0;
  double avg_diff_v = 0.0;
};

inline ExperimentRow run_experiment(const PreparedBundle& b, const RunConfig& cfg,
                                    const std::string& label) {
  ExperimentRow row;
  row.label = label;
  try {
    const TrainOutputs t = train_bundle(b, cfg);
    const auto e = evaluate_params(b, t.result.params, cfg.effective_hp(), cfg, Phase::Test);
    row.ok = true;
    row.precision = e.report.precision;
    row.recall = e.report.recall;
    row.ndcg = e.report.ndcg;
    row.avg_diff_t = e.avg_diff[Modality::Textual].avg_diff;
    row.avg_diff_v = e.avg_diff[Modality::Visual].avg_diff;
  } catch (const Error& err) {
    row.error = std::string(category_name(err.category())) + ": " + err.what();
  }
  return row;
}

inline std::string format_experiment_tsv(const std::string& key_column,
                                         const std::vector<ExperimentRow>& rows) {
  std::ostringstream out;
  out << key_column << "\tprecision\trecall\tndcg\tavg_diff_t\tavg_diff_v\n";
  for (const auto& r : rows) {
    if (!r.ok) {
      out << "# " << r.label << " failed: " << r.error << '\n';
      out << r.label << "\tnan\tnan\tnan\tnan\tnan\n";
      continue;
    }
    out << r.label << '\t' << format_double(r.precision) << '\t' << format_double(r.recall) << '\t'
        << format_double(r.ndcg) << '\t' << format_double(r.avg_diff_t) << '\t'
        << format_double(r.avg_diff_v) << '\n';
  }
  return out.str();
}

enum class SweepParam { Alpha, Beta };

inline SweepParam parse_sweep_param(const std::string& name) {
  if (name == "alpha") return SweepParam::Alpha;
  if (name == "beta") return SweepParam::Beta;
  throw ConfigError("sweep parameter must be alpha or beta, got '" + name + "'");
}

inline void validate_sweep(SweepParam param, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (const double v : values) {
    if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
    if (param == SweepParam::Alpha && v < 0.0) throw ConfigError("alpha values must be >= 0");
    if (param == SweepParam::Beta && (v < 0.0 || v > 1.0)) {
      throw ConfigError("beta values must lie in [0, 1]");
    }
  }
}

inline std::vector<ExperimentRow> cmd_sweep(const RunConfig& cfg, SweepParam param,
                                            const std::vector<double>& values) {
  cfg.validate();
  validate_sweep(param, values);
  const PreparedBundle b = load_bundle(cfg.data());
  std::vector<ExperimentRow> rows;
  for (const double v : values) {
    RunConfig c = cfg;
    (param == SweepParam::Alpha ? c.hp.alpha : c.hp.beta) = v;
    rows.push_back(run_experiment(b, c, format_double(v)));
  }
  const std::string name = param == SweepParam::Alpha ? "alpha" : "beta";
  write_text(cfg.out_dir / ("sweep_" + name + ".tsv"), format_experiment_tsv("param_value", rows));
  return rows;
}

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"default",           "nonlinear-prop",
                                          "no-self-connection", "layer-combination",
                                          "lightgcn",          "attention-off"};
  return v;
}

inline std::vector<ExperimentRow> cmd_ablate(const RunConfig& cfg) {
  cfg.validate();
  const PreparedBundle b = load_bundle(cfg.data());
  std::vector<ExperimentRow> rows;
  for (const auto& name : ablation_variants()) {
    RunConfig c = cfg;
    c.variant = name;
    rows.push_back(run_experiment(b, c, name));
  }
  write_text(cfg.out_dir / kAblationFile, format_experiment_tsv("variant", rows));
  return rows;
}

// analyze / synthesize --------------------------------------------------------------

inline std::string format_similarity_tsv(const SimilarityReport& r) {
  std::ostringstream out;
  for (const Modality m : kModalities) {
    const std::string s = modality_suffix(m);
    out << "mean_ii_" << s << '\t' << format_double(r[m].mean_ii) << '\n';
    out << "mean_in_" << s << '\t' << format_double(r[m].mean_in) << '\n';
    out << "users_ii_" << s << '\t' << r[m].users_ii << '\n';
    out << "users_in_" << s << '\t' << r[m].users_in << '\n';
  }
  out << "mode\t" << r.mode.describe() << '\n';
  return out.str();
}

inline SimilarityReport cmd_analyze(const RunConfig& cfg) {
  cfg.validate();
  const PreparedBundle b = load_bundle(cfg.data());
  const auto rep = interaction_similarity(b.refs(), b.dataset, cfg.similarity_sample_mode());
  write_text(cfg.out_dir / kSimilarityFile, format_similarity_tsv(rep));
  return rep;
}

inline SyntheticData cmd_synthesize(const SyntheticSpec& spec, const std::filesystem::path& out) {
  SyntheticData data = generate_synthetic(spec);
  write_synthetic(out, data);
  return data;
}

}  // namespace monet
