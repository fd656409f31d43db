#pragma once

// Round-loop simulator: role selection, local training, aggregation,
// verification and consensus, block application, metrics. Also the
// centralized FedAvg comparator and an independent chain replayer.
//
// Every stochastic choice draws from child_seed(master, round, participant,
// tag); setup-time draws use round -1.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blockdfl/adversary.hpp"
#include "blockdfl/consensus.hpp"

namespace blockdfl {

struct DatasetSource {
  enum class Kind { synthetic, idx, csv } kind = Kind::synthetic;
  // synthetic
  std::size_t classes = 10;
  std::size_t per_class = 500;
  std::size_t dim = 20;
  double spread = 2.0;
  // idx / csv
  std::string images_path;
  std::string labels_path;
  std::string csv_path;
  double csv_feature_scale = 1.0;
};

struct SimConfig {
  std::size_t n_participants = 30;
  std::size_t n_aggregators = 6;
  std::size_t n_verifiers = 7;
  std::size_t c = 3;
  std::size_t min_local_updates = 0;  // 0 means 3c
  std::int64_t rounds = 60;
  LearnerConfig learner{ModelSpec{}, 0.05, 0.99, 16, 5};
  bool compression = true;
  SparsitySchedule sparsity = SparsitySchedule::mnist_default();
  bool persist_residuals = true;
  std::uint64_t initial_stake = 10;
  std::uint64_t stake_increment = 5;
  double eval_fraction = 0.2;
  bool resample_eval_subset = false;
  double test_fraction = 0.2;
  double krum_f = 0.2;
  std::int64_t eval_every = 1;
  AdversaryConfig adversary;
  std::uint64_t seed = 1;
  DatasetSource data;

  /// `roles` false skips the role-count checks, which the FedAvg comparator
  /// does not need (it may run with a single participant).
  void validate(bool roles = true) const {
    require(n_participants >= 1, "config: n_participants must be >= 1");
    if (roles) {
      require(n_aggregators >= 3, "config: |A| must be >= 3 (two candidates can never be approved)");
      require(n_verifiers >= 1, "config: |V| must be >= 1");
      require(n_aggregators + n_verifiers < n_participants, "config: |A| + |V| must be < n_participants");
    }
    require(rounds >= 1, "config: rounds must be >= 1");
    require(c >= 1, "config: c must be >= 1");
    require(initial_stake >= 1, "config: initial stake must be >= 1");
    require(eval_fraction > 0.0 && eval_fraction <= 1.0, "config: eval_fraction must be in (0, 1]");
    require(test_fraction > 0.0 && test_fraction < 1.0, "config: test_fraction must be in (0, 1)");
    require(krum_f >= 0.0 && krum_f < 1.0, "config: krum f must be in [0, 1)");
    require(eval_every >= 1, "config: eval_every must be >= 1");
    learner.validate();
    require(learner.model.kind != ModelKind::mlp_one_hidden || learner.model.hidden >= 1,
            "config: hidden units must be >= 1");
    adversary.validate(data.kind == DatasetSource::Kind::synthetic ? data.classes : 256);
  }
};

/// Wall-clock seconds per process of one round.
struct RoundTimings {
  double role_selection = 0;
  double local_training = 0;
  double aggregation = 0;
  double consensus = 0;
  double block_sync = 0;
  double round_total = 0;

  double sum() const { return role_selection + local_training + aggregation + consensus + block_sync; }
};

struct RoundMetrics {
  std::int64_t round = 0;
  bool evaluated = false;
  double accuracy = 0.0;
  bool empty_block = true;
  bool poisoned_block = false;
  double malicious_stake_share = 0.0;
  std::int64_t leader = -1;
  std::int64_t approved_aggregator = -1;
  std::size_t candidates = 0;
  std::size_t candidates_examined = 0;
  std::size_t malicious_verifiers = 0;
  RoundTimings timings;

  /// Equality on the protocol observables; timings are excluded.
  bool same_observables(const RoundMetrics& o) const {
    return round == o.round && evaluated == o.evaluated && accuracy == o.accuracy && empty_block == o.empty_block &&
           poisoned_block == o.poisoned_block && malicious_stake_share == o.malicious_stake_share &&
           leader == o.leader && approved_aggregator == o.approved_aggregator && candidates == o.candidates &&
           candidates_examined == o.candidates_examined && malicious_verifiers == o.malicious_verifiers;
  }
};

struct Summary {
  std::size_t window = 0;  // number of evaluated rounds averaged
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double attack_ratio = 0.0;
  bool attack_ratio_defined = true;  // false when the window holds no non-empty block
  double empty_block_percentage = 0.0;
  double final_malicious_stake_share = 0.0;
};

struct MetricsLog {
  nlohmann::json config;
  std::vector<RoundMetrics> rounds;
  std::string final_model_sha256;

  bool same_observables(const MetricsLog& o) const {
    if (rounds.size() != o.rounds.size() || final_model_sha256 != o.final_model_sha256) return false;
    for (std::size_t i = 0; i < rounds.size(); ++i)
      if (!rounds[i].same_observables(o.rounds[i])) return false;
    return true;
  }
};

struct SimulationResult {
  MetricsLog log;
  std::vector<Block> chain;                   // genesis first
  ParameterVector initial_model;
  std::map<ParticipantId, ParameterVector> final_models;  // honest participants
  std::set<ParticipantId> malicious;
};

// ---------------------------------------------------------------------------
// config <-> json

inline nlohmann::json to_json(const SimConfig& c) {
  using nlohmann::json;
  json sched = json::array();
  for (const auto& [start, s] : c.sparsity.steps()) sched.push_back({start, s});
  json flips = json::array();
  for (const auto& p : c.adversary.flip_pairs) flips.push_back({p.source, p.target});
  json data;
  switch (c.data.kind) {
    case DatasetSource::Kind::synthetic:
      data = {{"kind", "synthetic"},
              {"classes", c.data.classes},
              {"per_class", c.data.per_class},
              {"dim", c.data.dim},
              {"spread", c.data.spread}};
      break;
    case DatasetSource::Kind::idx:
      data = {{"kind", "idx"}, {"images", c.data.images_path}, {"labels", c.data.labels_path}, {"classes", c.data.classes}};
      break;
    case DatasetSource::Kind::csv:
      data = {{"kind", "csv"},
              {"path", c.data.csv_path},
              {"classes", c.data.classes},
              {"feature_scale", c.data.csv_feature_scale}};
      break;
  }
  return {{"n_participants", c.n_participants},
          {"n_aggregators", c.n_aggregators},
          {"n_verifiers", c.n_verifiers},
          {"c", c.c},
          {"min_local_updates", c.min_local_updates},
          {"rounds", c.rounds},
          {"learner",
           {{"model", to_string(c.learner.model.kind)},
            {"hidden", c.learner.model.hidden},
            {"learning_rate", c.learner.learning_rate},
            {"decay", c.learner.decay},
            {"batch_size", c.learner.batch_size},
            {"local_epochs", c.learner.local_epochs}}},
          {"compression", c.compression},
          {"sparsity_schedule", sched},
          {"persist_residuals", c.persist_residuals},
          {"initial_stake", c.initial_stake},
          {"stake_increment", c.stake_increment},
          {"eval_fraction", c.eval_fraction},
          {"resample_eval_subset", c.resample_eval_subset},
          {"test_fraction", c.test_fraction},
          {"krum_f", c.krum_f},
          {"eval_every", c.eval_every},
          {"adversary",
           {{"malicious_fraction", c.adversary.malicious_fraction},
            {"flip_pairs", flips},
            {"poison_providers", c.adversary.poison_providers},
            {"malicious_aggregators", c.adversary.malicious_aggregators},
            {"contrarian_verifiers", c.adversary.contrarian_verifiers},
            {"malicious_leader", c.adversary.malicious_leader}}},
          {"seed", c.seed},
          {"data", data}};
}

/// Fields absent from `j` keep the values already in `c`; unknown keys are rejected.
inline void merge_json(SimConfig& c, const nlohmann::json& j) {
  static const std::set<std::string> kTop = {
      "n_participants", "n_aggregators", "n_verifiers", "c", "min_local_updates", "rounds", "learner",
      "compression", "sparsity_schedule", "persist_residuals", "initial_stake", "stake_increment",
      "eval_fraction", "resample_eval_subset", "test_fraction", "krum_f", "eval_every", "adversary", "seed", "data"};
  auto known = [](const nlohmann::json& o, const std::set<std::string>& keys, const std::string& where) {
    require(o.is_object(), "config: " + (where.empty() ? std::string("top level") : where) + " must be an object");
    for (const auto& [k, v] : o.items())
      if (!keys.contains(k)) throw Error("config: unknown key '" + where + k + "'");
  };
  known(j, kTop, "");
  if (j.contains("learner"))
    known(j.at("learner"), {"model", "hidden", "learning_rate", "decay", "batch_size", "local_epochs"}, "learner.");
  if (j.contains("adversary"))
    known(j.at("adversary"),
          {"malicious_fraction", "flip_pairs", "poison_providers", "malicious_aggregators", "contrarian_verifiers",
           "malicious_leader"},
          "adversary.");
  if (j.contains("data"))
    known(j.at("data"),
          {"kind", "classes", "per_class", "dim", "spread", "images", "labels", "path", "feature_scale"}, "data.");
  auto get = [&](const nlohmann::json& o, const char* key, auto& field) {
    if (o.contains(key)) field = o.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get(j, "n_participants", c.n_participants);
    get(j, "n_aggregators", c.n_aggregators);
    get(j, "n_verifiers", c.n_verifiers);
    get(j, "c", c.c);
    get(j, "min_local_updates", c.min_local_updates);
    get(j, "rounds", c.rounds);
    get(j, "compression", c.compression);
    get(j, "persist_residuals", c.persist_residuals);
    get(j, "initial_stake", c.initial_stake);
    get(j, "stake_increment", c.stake_increment);
    get(j, "eval_fraction", c.eval_fraction);
    get(j, "resample_eval_subset", c.resample_eval_subset);
    get(j, "test_fraction", c.test_fraction);
    get(j, "krum_f", c.krum_f);
    get(j, "eval_every", c.eval_every);
    get(j, "seed", c.seed);
    if (j.contains("learner")) {
      const auto& l = j.at("learner");
      if (l.contains("model")) c.learner.model.kind = model_kind_from_string(l.at("model").get<std::string>());
      get(l, "hidden", c.learner.model.hidden);
      get(l, "learning_rate", c.learner.learning_rate);
      get(l, "decay", c.learner.decay);
      get(l, "batch_size", c.learner.batch_size);
      get(l, "local_epochs", c.learner.local_epochs);
    }
    if (j.contains("sparsity_schedule")) {
      std::vector<SparsitySchedule::Step> steps;
      for (const auto& s : j.at("sparsity_schedule")) steps.emplace_back(s.at(0).get<std::int64_t>(), s.at(1).get<double>());
      c.sparsity = SparsitySchedule(std::move(steps));
    }
    if (j.contains("adversary")) {
      const auto& a = j.at("adversary");
      get(a, "malicious_fraction", c.adversary.malicious_fraction);
      get(a, "poison_providers", c.adversary.poison_providers);
      get(a, "malicious_aggregators", c.adversary.malicious_aggregators);
      get(a, "contrarian_verifiers", c.adversary.contrarian_verifiers);
      get(a, "malicious_leader", c.adversary.malicious_leader);
      if (a.contains("flip_pairs")) {
        c.adversary.flip_pairs.clear();
        for (const auto& p : a.at("flip_pairs")) c.adversary.flip_pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      }
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      const auto kind = d.value("kind", std::string("synthetic"));
      if (kind == "synthetic") {
        c.data.kind = DatasetSource::Kind::synthetic;
        get(d, "per_class", c.data.per_class);
        get(d, "dim", c.data.dim);
        get(d, "spread", c.data.spread);
      } else if (kind == "idx") {
        c.data.kind = DatasetSource::Kind::idx;
        get(d, "images", c.data.images_path);
        get(d, "labels", c.data.labels_path);
      } else if (kind == "csv") {
        c.data.kind = DatasetSource::Kind::csv;
        get(d, "path", c.data.csv_path);
        get(d, "feature_scale", c.data.csv_feature_scale);
      } else {
        throw Error("config: unknown data kind '" + kind + "'");
      }
      get(d, "classes", c.data.classes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
}

inline SimConfig config_from_json(const nlohmann::json& j) {
  SimConfig c;
  merge_json(c, j);
  return c;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// setup shared by every run mode

struct Environment {
  Dataset test;
  std::vector<Dataset> train;    // per participant, clean
  std::vector<Dataset> poisoned;  // per participant, flipped labels (malicious only; else empty)
  ModelSpec model;
  LearnerConfig learner;  // cfg.learner with the model shape filled in from the data
  std::set<ParticipantId> malicious;
  ParameterVector initial_model;
  std::shared_ptr<const Signer> signer;
};

inline bool adversary_active(const AdversaryConfig& a) {
  return a.poison_providers || a.malicious_aggregators || a.contrarian_verifiers || a.malicious_leader;
}

inline Dataset load_source(const SimConfig& cfg) {
  const auto& d = cfg.data;
  switch (d.kind) {
    case DatasetSource::Kind::synthetic:
      return make_synthetic_dataset(child_seed(cfg.seed, -1, 0, "dataset"), d.classes, d.per_class, d.dim, d.spread);
    case DatasetSource::Kind::idx:
      return load_idx(d.images_path, d.labels_path, d.classes);
    case DatasetSource::Kind::csv:
      return load_csv(d.csv_path, d.classes, d.csv_feature_scale);
  }
  throw Error("unknown data source");
}

inline Environment make_environment(const SimConfig& cfg, bool roles = true) {
  cfg.validate(roles);
  Environment env;
  const Dataset source = load_source(cfg);
  source.validate();
  cfg.adversary.validate(source.n_classes);
  auto [train, test] = split_holdout(source, cfg.test_fraction, child_seed(cfg.seed, -1, 0, "holdout"));
  env.test = std::move(test);
  env.train = partition(train, cfg.n_participants, child_seed(cfg.seed, -1, 0, "partition"));
  env.model = cfg.learner.model;
  env.model.input_dim = source.n_features;
  env.model.classes = source.n_classes;
  env.learner = cfg.learner;
  env.learner.model = env.model;
  if (adversary_active(cfg.adversary))
    env.malicious = assign_malicious(cfg.n_participants, cfg.adversary.malicious_fraction,
                                     child_seed(cfg.seed, -1, 0, "malicious"));
  env.poisoned.resize(cfg.n_participants);
  if (cfg.adversary.poison_providers)
    for (auto id : env.malicious) env.poisoned[id] = poison_dataset(env.train[id], cfg.adversary.flip_pairs);
  env.initial_model = init_model(child_seed(cfg.seed, -1, 0, "model"), env.model);
  env.signer = std::make_shared<HmacSigner>(child_seed(cfg.seed, -1, 0, "identity"), cfg.n_participants);
  return env;
}

inline std::string model_digest(const ParameterVector& w) {
  ByteWriter bw;
  bw.f64_array(w);
  return to_hex(sha256(bw.bytes()));
}

inline ChainParams chain_params(const SimConfig& cfg) {
  return {cfg.n_aggregators, cfg.n_verifiers, cfg.c, cfg.stake_increment};
}

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline double malicious_share(const StakeLedger& ledger, const std::set<ParticipantId>& malicious) {
  std::uint64_t m = 0;
  for (auto id : malicious) m += ledger.stake(id);
  return static_cast<double>(m) / static_cast<double>(ledger.total());
}

inline bool should_evaluate(const SimConfig& cfg, std::int64_t round) {
  return round % cfg.eval_every == 0 || round == cfg.rounds - 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BlockDFL

struct Participant {
  ParticipantId id = 0;
  bool malicious = false;
  ParameterVector model;
  ParameterVector residual;
  Dataset eval_subset;
  Chain chain;
};

inline SimulationResult run_simulation(const SimConfig& cfg) {
  const Environment env = make_environment(cfg);
  const auto& signer = *env.signer;
  const StakeLedger genesis_ledger(cfg.n_participants, cfg.initial_stake);
  const auto mal = [&](ParticipantId id) { return env.malicious.contains(id); };

  std::vector<Participant> people;
  for (ParticipantId id = 0; id < cfg.n_participants; ++id) {
    Participant p{id,
                  mal(id),
                  env.initial_model,
                  ParameterVector(env.initial_model.size(), 0.0),
                  eval_subset(env.train[id], cfg.eval_fraction, child_seed(cfg.seed, -1, id, "eval")),
                  Chain(chain_params(cfg), genesis_ledger, env.signer, cfg.seed)};
    p.chain.set_update_dim(env.initial_model.size());
    people.push_back(std::move(p));
  }
  ParticipantId observer = 0;  // first honest participant; its view is the reported one
  while (observer < cfg.n_participants && mal(observer)) ++observer;
  require(observer < cfg.n_participants, "simulation: no honest participant");

  SimulationResult result;
  result.log.config = to_json(cfg);
  result.initial_model = env.initial_model;
  result.malicious = env.malicious;

  for (std::int64_t t = 0; t < cfg.rounds; ++t) {
    RoundMetrics m;
    m.round = t;
    detail::Stopwatch whole, sw;
    const Chain& ref = people[observer].chain;
    require(ref.next_round() == t, "simulation: chain out of step");

    // (1) role selection
    const RoleAssignment roles = ref.next_roles();
    m.timings.role_selection = sw.lap();

    // (2) local training, sparsification, signed broadcast
    const double sparsity = cfg.compression ? sparsity_for_round(t, cfg.sparsity) : 0.0;
    std::vector<LocalUpdateMsg> broadcast;
    for (auto pid : roles.providers) {
      auto& p = people[pid];
      const Dataset& data = (p.malicious && cfg.adversary.poison_providers) ? env.poisoned[pid] : env.train[pid];
      const auto trained = local_train(p.model, data, env.learner, t, child_seed(cfg.seed, t, pid, "train"));
      const auto d = compute_update(trained, p.model);
      SparsifyResult sp;
      if (cfg.compression) {
        sp = top_k_sparsify(accumulate(p.residual, d), sparsity);
        p.residual = std::move(sp.residual);
      } else {
        sp = top_k_sparsify(d, 0.0);
      }
      LocalUpdateMsg msg{t, pid, std::move(sp.sparse), {}};
      msg.sign(signer);
      broadcast.push_back(std::move(msg));
    }
    if (cfg.compression && !cfg.persist_residuals)
      for (auto& p : people)
        if (!roles.is_provider(p.id)) std::fill(p.residual.begin(), p.residual.end(), 0.0);
    m.timings.local_training = sw.lap();

    // (3) aggregation
    CandidateSet set;
    std::vector<ParticipantId> aggregators = roles.aggregators;
    std::sort(aggregators.begin(), aggregators.end());
    for (auto aid : aggregators) {
      auto& a = people[aid];
      if (cfg.resample_eval_subset)
        a.eval_subset = eval_subset(env.train[aid], cfg.eval_fraction, child_seed(cfg.seed, t, aid, "eval"));
      AggregatorContext ctx{aid, t, cfg.c, cfg.min_local_updates, &env.model, &a.eval_subset, &signer};
      if (broadcast.size() < ctx.required_updates()) continue;
      const auto seed = child_seed(cfg.seed, t, aid, "aggregate");
      auto cand = (a.malicious && cfg.adversary.malicious_aggregators)
                      ? malicious_aggregate(broadcast, a.model, ctx, seed)
                      : run_aggregator(broadcast, a.model, ref.ledger(), ctx, seed);
      set.add(std::move(cand));
    }
    m.timings.aggregation = sw.lap();

    // (4) verification and consensus
    ConsensusContext cctx;
    cctx.round = t;
    cctx.verifiers = roles.verifiers;
    cctx.f = cfg.krum_f;
    cctx.signer = &signer;
    cctx.voter_honest = [&](ParticipantId id) { return !(mal(id) && cfg.adversary.contrarian_verifiers); };
    RoundOutcome outcome = run_leader(set, cctx);
    const ParticipantId leader = roles.leader();
    if (mal(leader) && cfg.adversary.malicious_leader) outcome = malicious_leader_behavior(std::move(outcome));
    const Block block = make_block(ref, leader, set, outcome, signer);
    m.timings.consensus = sw.lap();

    // block distribution: every participant validates, appends and applies
    for (auto& p : people) {
      const Verdict v = p.chain.append(block);
      if (v != Verdict::accepted)
        throw Error("simulation: participant " + std::to_string(p.id) + " rejected the round block: " + to_string(v));
      if (block.payload) p.model = apply_update(p.model, block.payload->global_update);
    }
    const Hash tip = people[observer].chain.tip_hash();
    for (const auto& p : people)
      if (!p.malicious && p.chain.tip_hash() != tip) throw Error("simulation: fork detected at round " + std::to_string(t));
    m.timings.block_sync = sw.lap();
    m.timings.round_total = whole.lap();

    m.empty_block = block.empty();
    m.leader = static_cast<std::int64_t>(leader);
    m.candidates = set.candidates.size();
    m.candidates_examined = outcome.candidates_examined;
    for (auto v : roles.verifiers) m.malicious_verifiers += mal(v) ? 1 : 0;
    if (block.payload) {
      m.approved_aggregator = static_cast<std::int64_t>(block.payload->aggregator_id);
      for (auto pid : block.payload->provider_ids) m.poisoned_block = m.poisoned_block || mal(pid);
    }
    m.malicious_stake_share = detail::malicious_share(people[observer].chain.ledger(), env.malicious);
    if (detail::should_evaluate(cfg, t)) {
      m.evaluated = true;
      m.accuracy = evaluate(env.model, people[observer].model, env.test);
    }
    result.log.rounds.push_back(m);
  }

  result.chain = people[observer].chain.blocks();
  for (const auto& p : people)
    if (!p.malicious) result.final_models.emplace(p.id, p.model);
  result.log.final_model_sha256 = model_digest(people[observer].model);
  return result;
}

// ---------------------------------------------------------------------------
// FedAvg comparator: a trusted server averages every participant's dense update.

inline SimulationResult run_fedavg_baseline(const SimConfig& cfg) {
  const Environment env = make_environment(cfg, false);
  ParameterVector w = env.initial_model;
  SimulationResult result;
  result.log.config = to_json(cfg);
  result.initial_model = env.initial_model;
  result.malicious = env.malicious;
  const double share = static_cast<double>(env.malicious.size()) / static_cast<double>(cfg.n_participants);

  for (std::int64_t t = 0; t < cfg.rounds; ++t) {
    RoundMetrics m;
    m.round = t;
    detail::Stopwatch whole, sw;
    ParameterVector sum(w.size(), 0.0);
    for (ParticipantId pid = 0; pid < cfg.n_participants; ++pid) {
      const bool bad = env.malicious.contains(pid) && cfg.adversary.poison_providers;
      const Dataset& data = bad ? env.poisoned[pid] : env.train[pid];
      const auto d = compute_update(local_train(w, data, env.learner, t, child_seed(cfg.seed, t, pid, "train")), w);
      for (std::size_t i = 0; i < d.size(); ++i) sum[i] += d[i];
    }
    m.timings.local_training = sw.lap();
    const double inv = 1.0 / static_cast<double>(cfg.n_participants);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += sum[i] * inv;
    m.timings.aggregation = sw.lap();
    m.timings.round_total = whole.lap();

    m.empty_block = false;
    m.poisoned_block = cfg.adversary.poison_providers && !env.malicious.empty();
    m.malicious_stake_share = share;
    if (detail::should_evaluate(cfg, t)) {
      m.evaluated = true;
      m.accuracy = evaluate(env.model, w, env.test);
    }
    result.log.rounds.push_back(m);
  }
  result.final_models.emplace(0, w);
  result.log.final_model_sha256 = model_digest(w);
  return result;
}

// ---------------------------------------------------------------------------
// independent replay from an exported chain

struct ReplayResult {
  bool valid = false;
  std::string error;
  std::size_t blocks_applied = 0;
  std::size_t non_empty = 0;
  ParameterVector final_model;
  StakeLedger ledger;
};

/// Re-validates every block from genesis against a fresh ledger and folds
/// the approved global updates over the initial model. Needs only the chain
/// and the configuration that fixes genesis, identities and the initial model.
inline ReplayResult replay_chain(const std::vector<Block>& blocks, const SimConfig& cfg) {
  cfg.validate();
  ReplayResult out;
  if (blocks.empty()) {
    out.error = "empty chain";
    return out;
  }
  // Initial model and identities are recomputed exactly as the simulator does.
  ModelSpec spec = cfg.learner.model;
  {
    const Dataset source = load_source(cfg);
    spec.input_dim = source.n_features;
    spec.classes = source.n_classes;
  }
  out.final_model = init_model(child_seed(cfg.seed, -1, 0, "model"), spec);
  auto signer = std::make_shared<HmacSigner>(child_seed(cfg.seed, -1, 0, "identity"), cfg.n_participants);
  Chain chain(chain_params(cfg), StakeLedger(cfg.n_participants, cfg.initial_stake), signer, cfg.seed);
  chain.set_update_dim(out.final_model.size());
  if (hash_block(blocks.front()) != hash_block(chain.blocks().front())) {
    out.error = "genesis mismatch";
    return out;
  }
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    const Verdict v = chain.append(blocks[i]);
    if (v != Verdict::accepted) {
      out.error = "block " + std::to_string(i) + ": " + to_string(v);
      out.ledger = chain.ledger();
      return out;
    }
    ++out.blocks_applied;
    if (blocks[i].payload) {
      ++out.non_empty;
      out.final_model = apply_update(out.final_model, blocks[i].payload->global_update);
    }
  }
  out.valid = true;
  out.ledger = chain.ledger();
  return out;
}

// ---------------------------------------------------------------------------
// summaries and export

/// Window: last ceil(0.2 * rounds) rounds, evaluated rounds only for accuracy.
inline Summary summarize(const MetricsLog& log) {
  require(!log.rounds.empty(), "summarize: empty log");
  Summary s;
  const std::size_t n = log.rounds.size();
  const std::size_t window = (n + 4) / 5;  // ceil(0.2 n)
  std::vector<double> acc;
  std::size_t nonempty = 0, poisoned = 0;
  for (std::size_t i = n - window; i < n; ++i) {
    const auto& r = log.rounds[i];
    if (r.evaluated) acc.push_back(r.accuracy);
    if (!r.empty_block) {
      ++nonempty;
      if (r.poisoned_block) ++poisoned;
    }
  }
  s.window = acc.size();
  if (!acc.empty()) {
    double sum = 0.0;
    for (double a : acc) sum += a;
    s.mean_accuracy = sum / static_cast<double>(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - s.mean_accuracy) * (a - s.mean_accuracy);
    s.std_accuracy = std::sqrt(var / static_cast<double>(acc.size()));
  }
  s.attack_ratio_defined = nonempty > 0;
  s.attack_ratio = nonempty > 0 ? static_cast<double>(poisoned) / static_cast<double>(nonempty) : 0.0;
  std::size_t empty = 0;
  for (const auto& r : log.rounds) empty += r.empty_block ? 1 : 0;
  s.empty_block_percentage = 100.0 * static_cast<double>(empty) / static_cast<double>(n);
  s.final_malicious_stake_share = log.rounds.back().malicious_stake_share;
  return s;
}

inline nlohmann::json to_json(const Summary& s) {
  return {{"window", s.window},
          {"mean_accuracy", s.mean_accuracy},
          {"std_accuracy", s.std_accuracy},
          {"attack_ratio", s.attack_ratio},
          {"attack_ratio_defined", s.attack_ratio_defined},
          {"empty_block_percentage", s.empty_block_percentage},
          {"final_malicious_stake_share", s.final_malicious_stake_share}};
}

inline constexpr const char* kCsvHeader =
    "round,evaluated,accuracy,empty_block,poisoned_block,malicious_stake_share,leader,approved_aggregator,"
    "candidates,candidates_examined,malicious_verifiers";

namespace detail {
inline std::string fmt_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
}  // namespace detail

/// One row per round in kCsvHeader order. Timings are not part of the CSV so
/// that identical configurations export identical bytes.
inline std::string to_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : log.rounds) {
    os << r.round << ',' << (r.evaluated ? 1 : 0) << ',' << detail::fmt_real(r.accuracy) << ','
       << (r.empty_block ? 1 : 0) << ',' << (r.poisoned_block ? 1 : 0) << ','
       << detail::fmt_real(r.malicious_stake_share) << ',' << r.leader << ',' << r.approved_aggregator << ','
       << r.candidates << ',' << r.candidates_examined << ',' << r.malicious_verifiers << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const MetricsLog& log) {
  using nlohmann::json;
  json rounds = json::array();
  for (const auto& r : log.rounds)
    rounds.push_back({{"round", r.round},
                      {"evaluated", r.evaluated},
                      {"accuracy", r.accuracy},
                      {"empty_block", r.empty_block},
                      {"poisoned_block", r.poisoned_block},
                      {"malicious_stake_share", r.malicious_stake_share},
                      {"leader", r.leader},
                      {"approved_aggregator", r.approved_aggregator},
                      {"candidates", r.candidates},
                      {"candidates_examined", r.candidates_examined},
                      {"malicious_verifiers", r.malicious_verifiers},
                      {"timings",
                       {{"role_selection", r.timings.role_selection},
                        {"local_training", r.timings.local_training},
                        {"aggregation", r.timings.aggregation},
                        {"consensus", r.timings.consensus},
                        {"block_sync", r.timings.block_sync},
                        {"round_total", r.timings.round_total}}}});
  return {{"config", log.config},
          {"rounds", rounds},
          {"final_model_sha256", log.final_model_sha256},
          {"summary", to_json(summarize(log))}};
}

inline MetricsLog metrics_log_from_json(const nlohmann::json& j) {
  MetricsLog log;
  log.config = j.at("config");
  log.final_model_sha256 = j.at("final_model_sha256").get<std::string>();
  for (const auto& r : j.at("rounds")) {
    RoundMetrics m;
    m.round = r.at("round").get<std::int64_t>();
    m.evaluated = r.at("evaluated").get<bool>();
    m.accuracy = r.at("accuracy").get<double>();
    m.empty_block = r.at("empty_block").get<bool>();
    m.poisoned_block = r.at("poisoned_block").get<bool>();
    m.malicious_stake_share = r.at("malicious_stake_share").get<double>();
    m.leader = r.at("leader").get<std::int64_t>();
    m.approved_aggregator = r.at("approved_aggregator").get<std::int64_t>();
    m.candidates = r.at("candidates").get<std::size_t>();
    m.candidates_examined = r.at("candidates_examined").get<std::size_t>();
    m.malicious_verifiers = r.at("malicious_verifiers").get<std::size_t>();
    const auto& t = r.at("timings");
    m.timings = {t.at("role_selection").get<double>(), t.at("local_training").get<double>(),
                 t.at("aggregation").get<double>(),    t.at("consensus").get<double>(),
                 t.at("block_sync").get<double>(),     t.at("round_total").get<double>()};
    log.rounds.push_back(m);
  }
  return log;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

/// Writes <prefix>.csv and <prefix>.json into `dir`.
inline void export_log(const MetricsLog& log, const std::filesystem::path& dir, const std::string& prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / (prefix + ".csv"), to_csv(log));
  write_text(dir / (prefix + ".json"), to_json(log).dump(2) + "\n");
}

}  // namespace blockdfl
