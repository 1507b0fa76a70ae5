// Command-line front end: synthesize, prepare, train, evaluate, sweep,
// ablate, analyze. Every command delegates to the matching monet::cmd_*.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "monet/pipeline.hpp"

namespace {

struct FlagBinding {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

/// Options shared by every subcommand. Values are applied after the config
/// file so that flags take precedence.
struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<FlagBinding> bindings;

  void attach(CLI::App* app, const std::vector<std::pair<std::string, std::string>>& flags) {
    app->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "override any config key (key=value), repeatable");
    bindings.reserve(flags.size());
    for (const auto& [flag, key] : flags) {
      auto& b = bindings.emplace_back(FlagBinding{key, {}, nullptr});
      b.option = app->add_option(flag, b.value, "sets '" + key + "'");
    }
  }

  monet::RunConfig resolve() const {
    monet::RunConfig cfg;
    if (!config.empty()) cfg.load_file(config);
    for (const auto& b : bindings) {
      if (b.option && b.option->count() > 0) cfg.set(b.key, b.value);
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw monet::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

const std::vector<std::pair<std::string, std::string>> kBaseFlags{
    {"--seed", "seed"}, {"--out", "out"}, {"--data", "data"}};

const std::vector<std::pair<std::string, std::string>> kModelFlags{
    {"--variant", "variant"},       {"--d", "d"},
    {"--layers", "layers"},         {"--alpha", "alpha"},
    {"--beta", "beta"},             {"--lambda", "lambda"},
    {"--lr", "learning_rate"},      {"--batch-size", "batch_size"},
    {"--epochs", "max_epochs"},     {"--patience", "patience"},
    {"--eval-every", "eval_every"}, {"--cutoff", "cutoff"},
    {"--propagation", "propagation"}};

std::vector<std::pair<std::string, std::string>> join(
    std::vector<std::pair<std::string, std::string>> a,
    const std::vector<std::pair<std::string, std::string>>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    out.push_back(monet::detail::parse_double("--values", monet::detail::trim(item)));
  }
  return out;
}

void print_rows(const std::vector<monet::ExperimentRow>& rows) {
  for (const auto& r : rows) {
    if (r.ok) {
      std::printf("%s\trecall\t%s\tavg_diff_t\t%s\tavg_diff_v\t%s\n", r.label.c_str(),
                  monet::format_double(r.recall).c_str(), monet::format_double(r.avg_diff_t).c_str(),
                  monet::format_double(r.avg_diff_v).c_str());
    } else {
      std::printf("%s\tfailed\t%s\n", r.label.c_str(), r.error.c_str());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal graph recommender: training and evaluation engine"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synthesize", "write a planted-preference synthetic dataset");
  std::string synth_spec = "users=200 items=100 dim=16 seed=0";
  std::string synth_out = "synthetic";
  synth->add_option("--synthetic", synth_spec, "users=U items=I dim=D seed=S [clusters=C null=on ...]");
  synth->add_option("--out", synth_out, "output directory");

  CommonFlags prep_flags, train_flags, eval_flags, sweep_flags, ablate_flags, analyze_flags;

  auto* prep = app.add_subcommand("prepare", "filter, index and split interactions; align features");
  prep_flags.attach(prep, join(kBaseFlags, {{"--interactions", "interactions"},
                                            {"--textual", "textual"},
                                            {"--visual", "visual"},
                                            {"--item-list", "item_list"},
                                            {"--k-core", "k_core"}}));

  auto* trn = app.add_subcommand("train", "train and write checkpoint.ckpt plus train_log.tsv");
  train_flags.attach(trn, join(kBaseFlags, kModelFlags));

  auto* evl = app.add_subcommand("evaluate", "top-N accuracy and avg.diff for a checkpoint");
  eval_flags.attach(evl, join(kBaseFlags, {{"--cutoff", "cutoff"}, {"--avg-diff-mode", "avg_diff_mode"}}));
  std::string checkpoint;
  std::string phase = "test";
  evl->add_option("--checkpoint", checkpoint, "checkpoint path (default OUT/checkpoint.ckpt)");
  evl->add_option("--phase", phase, "validation | test")->check(CLI::IsMember({"validation", "test"}));

  auto* swp = app.add_subcommand("sweep", "train and evaluate across alpha or beta values");
  sweep_flags.attach(swp, join(kBaseFlags, kModelFlags));
  std::string sweep_param;
  std::string sweep_values;
  swp->add_option("--param", sweep_param, "alpha | beta")->required()->check(CLI::IsMember({"alpha", "beta"}));
  swp->add_option("--values", sweep_values, "comma-separated values")->required();

  auto* abl = app.add_subcommand("ablate", "train and evaluate the six-variant grid");
  ablate_flags.attach(abl, join(kBaseFlags, kModelFlags));

  auto* ana = app.add_subcommand("analyze", "I-I vs I-N modality similarity over the filtered log");
  analyze_flags.attach(ana, join(kBaseFlags, {{"--mode", "similarity_mode"},
                                              {"--samples", "similarity_samples"}}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error\tusage\t%s\n", e.what());
    return 64;
  }

  try {
    if (*synth) {
      const auto data = monet::cmd_synthesize(monet::parse_synthetic_spec(synth_spec), synth_out);
      std::printf("wrote\t%zu interactions\t%zu items\t%s\n", data.interactions.size(),
                  data.item_ids.size(), synth_out.c_str());
    } else if (*prep) {
      const auto res = monet::cmd_prepare(prep_flags.resolve());
      std::fputs(monet::format_stats(res.stats).c_str(), stdout);
    } else if (*trn) {
      const auto cfg = train_flags.resolve();
      const auto out = monet::cmd_train(cfg);
      std::printf("epochs\t%zu\tbest_epoch\t%zu\tbest_val_recall\t%s\n", out.result.epochs_run,
                  out.result.best_epoch, monet::format_double(out.result.best_val_recall).c_str());
    } else if (*evl) {
      const auto cfg = eval_flags.resolve();
      const std::filesystem::path ck =
          checkpoint.empty() ? cfg.out_dir / monet::kCheckpointFile : std::filesystem::path(checkpoint);
      const auto p = phase == "validation" ? monet::Phase::Validation : monet::Phase::Test;
      const auto out = monet::cmd_evaluate(cfg, ck, p);
      std::fputs(monet::format_eval_tsv(out.report).c_str(), stdout);
      std::fputs(monet::format_avg_diff_tsv(out.avg_diff).c_str(), stdout);
    } else if (*swp) {
      const auto cfg = sweep_flags.resolve();
      const auto param = monet::parse_sweep_param(sweep_param);
      const auto values = parse_values(sweep_values);
      monet::validate_sweep(param, values);
      print_rows(monet::cmd_sweep(cfg, param, values));
    } else if (*abl) {
      print_rows(monet::cmd_ablate(ablate_flags.resolve()));
    } else if (*ana) {
      const auto rep = monet::cmd_analyze(analyze_flags.resolve());
      std::fputs(monet::format_similarity_tsv(rep).c_str(), stdout);
    }
  } catch (const monet::Error& e) {
    std::fprintf(stderr, "error\t%s\t%s\n", monet::category_name(e.category()), e.what());
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error\tinternal\t%s\n", e.what());
    return 1;
  }
  return 0;
}
