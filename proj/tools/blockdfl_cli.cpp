// blockdfl command line: run | baseline | compare | replay

#include <iostream>

#include <CLI11.hpp>

#include "blockdfl/blockdfl.hpp"

namespace {

using blockdfl::SimConfig;
using nlohmann::json;

// Optional overrides collected from flags; applied on top of --config.
struct Overrides {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> participants, aggregators, verifiers, c, min_updates, batch, epochs, hidden;
  std::optional<std::int64_t> rounds, eval_every;
  std::optional<double> lr, decay, eval_fraction, test_fraction, krum_f, malicious_fraction;
  std::optional<std::uint64_t> initial_stake, stake_increment;
  std::optional<std::string> model, flips, sparsity;
  bool no_compression = false, no_residual_persist = false, resample_eval = false;
  bool no_poison = false, no_malicious_aggregators = false, no_contrarian = false, malicious_leader = false;
  std::optional<std::size_t> classes, per_class, dim;
  std::optional<double> spread;
  std::optional<std::string> idx_images, idx_labels, csv;
};

void add_config_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON config file");
  app->add_option("--out", o.out_dir, "output directory")->capture_default_str();
  app->add_option("--seed", o.seed, "master seed (u64)");
  app->add_option("--participants", o.participants, "number of participants");
  app->add_option("--aggregators", o.aggregators, "|A|");
  app->add_option("--verifiers", o.verifiers, "|V|");
  app->add_option("--c", o.c, "local updates per global update");
  app->add_option("--min-local-updates", o.min_updates, "inbox size an aggregator waits for (0 = 3c)");
  app->add_option("--rounds", o.rounds, "communication rounds");
  app->add_option("--eval-every", o.eval_every, "evaluate the global model every k rounds");
  app->add_option("--model", o.model, "softmax_regression | mlp_one_hidden");
  app->add_option("--hidden", o.hidden, "hidden units for mlp_one_hidden");
  app->add_option("--lr", o.lr, "learning rate");
  app->add_option("--decay", o.decay, "per-round learning-rate decay");
  app->add_option("--batch", o.batch, "mini-batch size");
  app->add_option("--epochs", o.epochs, "local epochs");
  app->add_option("--sparsity", o.sparsity, "schedule as start:s,start:s,... e.g. 0:0.9,50:0.925");
  app->add_flag("--no-compression", o.no_compression, "transmit dense updates");
  app->add_flag("--drop-idle-residuals", o.no_residual_persist, "zero residuals of non-providers each round");
  app->add_option("--initial-stake", o.initial_stake, "initial stake per participant");
  app->add_option("--stake-increment", o.stake_increment, "stake awarded per contribution");
  app->add_option("--eval-fraction", o.eval_fraction, "aggregator scoring subset fraction");
  app->add_flag("--resample-eval", o.resample_eval, "redraw scoring subsets every round");
  app->add_option("--test-fraction", o.test_fraction, "held-out test fraction");
  app->add_option("--krum-f", o.krum_f, "assumed malicious fraction f in Krum");
  app->add_option("--malicious-fraction", o.malicious_fraction, "actual fraction of malicious participants");
  app->add_option("--flip", o.flips, "label flips as src:dst,src:dst");
  app->add_flag("--no-poison", o.no_poison, "malicious providers train honestly");
  app->add_flag("--no-malicious-aggregators", o.no_malicious_aggregators, "malicious aggregators act honestly");
  app->add_flag("--no-contrarian", o.no_contrarian, "malicious verifiers vote honestly");
  app->add_flag("--malicious-leader", o.malicious_leader, "malicious leaders suppress approved blocks");
  app->add_option("--classes", o.classes, "number of classes");
  app->add_option("--per-class", o.per_class, "synthetic samples per class");
  app->add_option("--dim", o.dim, "synthetic feature dimension");
  app->add_option("--spread", o.spread, "synthetic within-class standard deviation");
  app->add_option("--idx-images", o.idx_images, "IDX image file");
  app->add_option("--idx-labels", o.idx_labels, "IDX label file");
  app->add_option("--csv", o.csv, "CSV dataset with a 'label' column");
}

std::vector<std::pair<std::string, std::string>> pairs(const std::string& s, const char* what) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw blockdfl::Error(std::string("bad ") + what + " entry '" + item + "'");
    out.emplace_back(item.substr(0, colon), item.substr(colon + 1));
  }
  return out;
}

SimConfig build_config(const Overrides& o) {
  SimConfig cfg = o.config_path.empty() ? SimConfig{} : blockdfl::load_config(o.config_path);
  auto set = [](auto& field, const auto& opt) {
    if (opt) field = *opt;
  };
  set(cfg.seed, o.seed);
  set(cfg.n_participants, o.participants);
  set(cfg.n_aggregators, o.aggregators);
  set(cfg.n_verifiers, o.verifiers);
  set(cfg.c, o.c);
  set(cfg.min_local_updates, o.min_updates);
  set(cfg.rounds, o.rounds);
  set(cfg.eval_every, o.eval_every);
  set(cfg.learner.model.hidden, o.hidden);
  set(cfg.learner.learning_rate, o.lr);
  set(cfg.learner.decay, o.decay);
  set(cfg.learner.batch_size, o.batch);
  set(cfg.learner.local_epochs, o.epochs);
  set(cfg.initial_stake, o.initial_stake);
  set(cfg.stake_increment, o.stake_increment);
  set(cfg.eval_fraction, o.eval_fraction);
  set(cfg.test_fraction, o.test_fraction);
  set(cfg.krum_f, o.krum_f);
  set(cfg.adversary.malicious_fraction, o.malicious_fraction);
  if (o.model) cfg.learner.model.kind = blockdfl::model_kind_from_string(*o.model);
  if (o.sparsity) {
    std::vector<blockdfl::SparsitySchedule::Step> steps;
    for (const auto& [a, b] : pairs(*o.sparsity, "sparsity")) steps.emplace_back(std::stoll(a), std::stod(b));
    cfg.sparsity = blockdfl::SparsitySchedule(std::move(steps));
  }
  if (o.flips) {
    cfg.adversary.flip_pairs.clear();
    for (const auto& [a, b] : pairs(*o.flips, "flip")) cfg.adversary.flip_pairs.push_back({std::stoi(a), std::stoi(b)});
  }
  if (o.no_compression) cfg.compression = false;
  if (o.no_residual_persist) cfg.persist_residuals = false;
  if (o.resample_eval) cfg.resample_eval_subset = true;
  if (o.no_poison) cfg.adversary.poison_providers = false;
  if (o.no_malicious_aggregators) cfg.adversary.malicious_aggregators = false;
  if (o.no_contrarian) cfg.adversary.contrarian_verifiers = false;
  if (o.malicious_leader) cfg.adversary.malicious_leader = true;
  set(cfg.data.classes, o.classes);
  set(cfg.data.per_class, o.per_class);
  set(cfg.data.dim, o.dim);
  set(cfg.data.spread, o.spread);
  if (o.idx_images || o.idx_labels) {
    if (!o.idx_images || !o.idx_labels) throw blockdfl::Error("config: --idx-images and --idx-labels go together");
    cfg.data.kind = blockdfl::DatasetSource::Kind::idx;
    cfg.data.images_path = *o.idx_images;
    cfg.data.labels_path = *o.idx_labels;
  }
  if (o.csv) {
    cfg.data.kind = blockdfl::DatasetSource::Kind::csv;
    cfg.data.csv_path = *o.csv;
  }
  cfg.validate();
  return cfg;
}

json summary_json(const blockdfl::MetricsLog& log) { return blockdfl::to_json(blockdfl::summarize(log)); }

void write_run(const blockdfl::SimulationResult& r, const SimConfig& cfg, const std::filesystem::path& out) {
  blockdfl::export_log(r.log, out, "metrics");
  blockdfl::export_chain_binary(r.chain, (out / "chain.bin").string());
  json chain = json::array();
  for (const auto& b : r.chain) chain.push_back(blockdfl::block_to_json(b));
  blockdfl::write_text(out / "chain.json", chain.dump(2) + "\n");
  blockdfl::write_text(out / "config.json", blockdfl::to_json(cfg).dump(2) + "\n");
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BlockDFL simulator"};
  app.require_subcommand(1);

  Overrides run_o, base_o, cmp_o;
  auto* run = app.add_subcommand("run", "run the decentralized protocol and export metrics and chain");
  add_config_flags(run, run_o);
  auto* baseline = app.add_subcommand("baseline", "run centralized FedAvg on the same setup");
  add_config_flags(baseline, base_o);
  auto* compare = app.add_subcommand("compare", "run both and report the summaries side by side");
  add_config_flags(compare, cmp_o);

  std::string chain_path, replay_config, metrics_path;
  auto* replay = app.add_subcommand("replay", "validate an exported chain and rebuild the final model");
  replay->add_option("--chain", chain_path, "chain.bin written by run")->required();
  replay->add_option("--config", replay_config, "config.json written by run")->required();
  replay->add_option("--metrics", metrics_path, "metrics.json to cross-check the final model digest");

  CLI11_PARSE(app, argc, argv);

  SimConfig cfg;
  try {
    if (*run) cfg = build_config(run_o);
    if (*baseline) cfg = build_config(base_o);
    if (*compare) cfg = build_config(cmp_o);
    if (*replay) cfg = blockdfl::load_config(replay_config), cfg.validate();
  } catch (const std::exception& e) {
    return fail("config_rejected", e.what(), 2);
  }

  try {
    if (*run) {
      const auto r = blockdfl::run_simulation(cfg);
      write_run(r, cfg, run_o.out_dir);
      std::cout << json{{"mode", "run"}, {"out", run_o.out_dir}, {"summary", summary_json(r.log)}}.dump(2) << "\n";
    } else if (*baseline) {
      const auto r = blockdfl::run_fedavg_baseline(cfg);
      blockdfl::export_log(r.log, base_o.out_dir, "baseline");
      std::cout << json{{"mode", "baseline"}, {"out", base_o.out_dir}, {"summary", summary_json(r.log)}}.dump(2)
                << "\n";
    } else if (*compare) {
      const auto r = blockdfl::run_simulation(cfg);
      const auto b = blockdfl::run_fedavg_baseline(cfg);
      write_run(r, cfg, cmp_o.out_dir);
      blockdfl::export_log(b.log, cmp_o.out_dir, "baseline");
      const json cmp{{"mode", "compare"},
                     {"blockdfl", summary_json(r.log)},
                     {"fedavg", summary_json(b.log)},
                     {"accuracy_gap", blockdfl::summarize(r.log).mean_accuracy - blockdfl::summarize(b.log).mean_accuracy}};
      blockdfl::write_text(std::filesystem::path(cmp_o.out_dir) / "comparison.json", cmp.dump(2) + "\n");
      std::cout << cmp.dump(2) << "\n";
    } else if (*replay) {
      const auto blocks = blockdfl::import_chain_binary(chain_path);
      const auto rr = blockdfl::replay_chain(blocks, cfg);
      json out{{"mode", "replay"},
               {"valid", rr.valid},
               {"blocks", rr.blocks_applied},
               {"non_empty_blocks", rr.non_empty},
               {"final_model_sha256", blockdfl::model_digest(rr.final_model)}};
      if (!rr.valid) out["error"] = rr.error;
      bool match = true;
      if (!metrics_path.empty()) {
        std::ifstream in(metrics_path);
        if (!in) throw blockdfl::Error("cannot open " + metrics_path);
        const auto recorded = json::parse(in).at("final_model_sha256").get<std::string>();
        match = recorded == out["final_model_sha256"].get<std::string>();
        out["matches_metrics"] = match;
      }
      std::cout << out.dump(2) << "\n";
      return rr.valid && match ? 0 : 3;
    }
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
