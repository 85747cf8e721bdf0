#pragma once

// Base-to-novel protocol at toy scale, plus seeded sweeps over (tau, method,
// loss weights, seed).

#include "npt/data.hpp"
#include "npt/io.hpp"
#include "npt/metrics.hpp"
#include "npt/model.hpp"
#include "npt/train.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

namespace npt {

// Optional evaluation on a perturbed generator: same class directions, a
// different noise level and a fixed rotation of raw space.
struct ShiftConfig {
  bool enabled = false;
  double noise_sigma = 0.5;
  double rotation_strength = 0.3;  // t in the Cayley map (I - tS)^-1 (I + tS)
  std::uint64_t rotation_seed = 7;
};

struct WeightSetting {
  double w1 = 0.3, w2 = 0.8;
  friend bool operator==(const WeightSetting&, const WeightSetting&) = default;
};

struct ExperimentConfig {
  ModelConfig model;
  GeneratorConfig data;
  AlignmentConfig pretrain;
  TrainConfig train;
  std::vector<double> taus{1.0, 0.05, 0.01};
  std::vector<Method> methods{Method::Baseline, Method::Npt};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<WeightSetting> weight_grid;  // npt settings; empty = train.weights only
  Index n_max = 16;
  Index test_per_class = 50;
  ShiftConfig shift;
  unsigned workers = 1;
  std::string out_dir = "out";

  ExperimentConfig() {
    model.raw_dim = data.raw_dim;
    model.num_classes = data.num_classes;
  }

  void validate() const {
    model.validate();
    data.validate();
    pretrain.validate();
    train.validate();
    require(model.raw_dim == data.raw_dim, "ExperimentConfig: model.raw_dim must equal data.raw_dim");
    require(model.num_classes == data.num_classes, "ExperimentConfig: model.num_classes must equal data.num_classes");
    require(data.num_classes >= 4, "ExperimentConfig: need K >= 4 so both splits have two classes");
    require(!taus.empty(), "ExperimentConfig: need at least one tau");
    for (double t : taus) require(t > 0.0 && t <= 1.0, "ExperimentConfig: tau values must lie in (0, 1]");
    require(!seeds.empty(), "ExperimentConfig: need at least one seed");
    require(!methods.empty(), "ExperimentConfig: need at least one method");
    require(n_max >= 1 && test_per_class >= 1, "ExperimentConfig: sample counts must be >= 1");
    require(workers >= 1, "ExperimentConfig: workers must be >= 1");
    for (const auto& w : weight_grid) LossWeights{w.w1, w.w2, train.weights.mi_reduction}.validate();
    if (shift.enabled) require(shift.noise_sigma >= 0.0, "ExperimentConfig: shift noise sigma must be >= 0");
  }

  std::vector<WeightSetting> npt_weights() const {
    if (weight_grid.empty()) return {{train.weights.w1, train.weights.w2}};
    return weight_grid;
  }
};

// One (tau, method, weights, seed) run.
struct RunSpec {
  double tau = 1.0;
  Method method = Method::Baseline;
  WeightSetting weights{0.0, 0.0};
  std::uint64_t seed = 0;
};

struct RunRow {
  RunSpec spec;
  bool ok = false;
  std::string error;
  double realized_tau = 0.0;
  Index train_size = 0;
  std::vector<Index> train_counts;
  double base_acc = 0.0, novel_acc = 0.0, harmonic_mean = 0.0, base_train_acc = 0.0;
  double shifted_base_acc = 0.0, shifted_novel_acc = 0.0;
  LossBreakdown final_loss;
  CollapseReport base, novel;
};

// Reps kept for the projection figure; not written to runs.csv.
struct RunArtifacts {
  RepresentationSet novel_reps;
  ModelParams trained;
  Trajectory trajectory;
};

// ---------------------------------------------------------------------------
// Per-run seeds. Baseline and npt share all of them within a (tau, seed) cell.

struct RunSeeds {
  std::uint64_t world = 0, init = 0, train_samples = 0, test_samples = 0, order = 0;
};

inline RunSeeds run_seeds(const ExperimentConfig& c, std::uint64_t seed) {
  RunSeeds s;
  s.world = c.data.seed + seed;
  s.init = c.model.init_seed + seed;
  s.train_samples = (seed << 8) ^ 0x5157A11ull;
  s.test_samples = (seed << 8) ^ 0x7E57ull;
  s.order = c.train.seed + seed;
  return s;
}

inline Matrix cayley_rotation(Index n, double strength, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a = gaussian_matrix(n, n, 1.0, rng);
  Matrix s = (a - a.transpose()) / std::sqrt(2.0 * double(n));
  const Matrix id = Matrix::Identity(n, n);
  return (id - strength * s).partialPivLu().solve(id + strength * s);
}

inline Dataset shifted_test_set(const GeneratorConfig& g, const ShiftConfig& shift, std::span<const int> ids,
                                Index per_class, std::uint64_t sample_seed) {
  GeneratorConfig gs = g;
  gs.noise_sigma = shift.noise_sigma;
  Dataset ds = generate_test_set(gs, ids, per_class, sample_seed ^ 0x5A1F7ull);
  ds.features = cayley_rotation(g.raw_dim, shift.rotation_strength, shift.rotation_seed) * ds.features;
  return ds;
}

struct RunSetup {
  ClassSplit split;
  ImbalanceProfile profile;
  Dataset train_set, base_test, novel_test;
  ModelParams init;
  TrainConfig train;
};

inline RunSetup prepare_run(const ExperimentConfig& c, const RunSpec& spec) {
  RunSetup s;
  const RunSeeds seeds = run_seeds(c, spec.seed);
  GeneratorConfig g = c.data;
  g.seed = seeds.world;
  s.split = base_novel_split(g.num_classes);
  s.profile = imbalance_profile(static_cast<Index>(s.split.base_ids.size()), c.n_max, spec.tau);
  s.train_set = generate_train_set(g, s.split.base_ids, s.profile, seeds.train_samples);
  s.base_test = generate_test_set(g, s.split.base_ids, c.test_per_class, seeds.test_samples);
  s.novel_test = generate_test_set(g, s.split.novel_ids, c.test_per_class, seeds.test_samples);
  ModelConfig mc = c.model;
  mc.init_seed = seeds.init;
  s.init = init_model(mc);
  pretrain_align(s.init, class_world(g).directions, c.pretrain);
  s.train = c.train;
  s.train.method = spec.method;
  s.train.weights.w1 = spec.weights.w1;
  s.train.weights.w2 = spec.weights.w2;
  s.train.seed = seeds.order;
  return s;
}

inline constexpr const char* kNumericalAbortTag = "numerical abort: ";

inline RunRow run_base_to_novel(const ExperimentConfig& c, const RunSpec& spec, RunArtifacts* artifacts = nullptr) {
  RunRow row;
  row.spec = spec;
  if (spec.method == Method::Baseline) row.spec.weights = {0.0, 0.0};
  try {
    c.validate();
    RunSetup s = prepare_run(c, row.spec);
    row.realized_tau = s.profile.realized_tau;
    row.train_counts = s.profile.counts;
    row.train_size = s.train_set.size();
    const Batch batch = make_batch(s.train_set, s.split.base_ids);
    TrainResult tr = train(s.init, batch, s.train);
    const ModelParams& p = tr.params;
    row.base_acc = evaluate(p, s.base_test, s.split.base_ids);
    row.novel_acc = evaluate(p, s.novel_test, s.split.novel_ids);
    row.harmonic_mean = harmonic_mean(row.base_acc, row.novel_acc);
    const TrajectoryRow& last = tr.trajectory.rows.back();
    row.final_loss = last.loss;
    row.base_train_acc = last.base_train_acc;
    RepresentationSet base_reps = representations(p, s.base_test, s.split.base_ids);
    RepresentationSet novel_reps = representations(p, s.novel_test, s.split.novel_ids);
    row.base = collapse_report(base_reps);
    row.novel = collapse_report(novel_reps);
    if (c.shift.enabled) {
      GeneratorConfig g = c.data;
      g.seed = run_seeds(c, spec.seed).world;
      const std::uint64_t ts = run_seeds(c, spec.seed).test_samples;
      row.shifted_base_acc = evaluate(p, shifted_test_set(g, c.shift, s.split.base_ids, c.test_per_class, ts),
                                      s.split.base_ids);
      row.shifted_novel_acc = evaluate(p, shifted_test_set(g, c.shift, s.split.novel_ids, c.test_per_class, ts),
                                       s.split.novel_ids);
    }
    if (artifacts) *artifacts = {std::move(novel_reps), std::move(tr.params), std::move(tr.trajectory)};
    row.ok = true;
  } catch (const NumericalAbort& e) {
    row.ok = false;
    row.error = std::string(kNumericalAbortTag) + e.what();
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

// ---------------------------------------------------------------------------
// runs.csv

namespace detail {

struct RowField {
  const char* name;
  std::function<double(const RunRow&)> get;
  std::function<void(RunRow&, double)> set;
};

inline const std::vector<RowField>& numeric_fields() {
  static const std::vector<RowField> fields = [] {
    std::vector<RowField> f;
    auto add = [&](const char* name, auto member) {
      f.push_back({name, [member](const RunRow& r) { return double(r.*member); },
                   [member](RunRow& r, double v) { r.*member = static_cast<std::remove_reference_t<decltype(r.*member)>>(v); }});
    };
    add("realized_tau", &RunRow::realized_tau);
    add("train_size", &RunRow::train_size);
    add("base_acc", &RunRow::base_acc);
    add("novel_acc", &RunRow::novel_acc);
    add("harmonic_mean", &RunRow::harmonic_mean);
    add("base_train_acc", &RunRow::base_train_acc);
    add("shifted_base_acc", &RunRow::shifted_base_acc);
    add("shifted_novel_acc", &RunRow::shifted_novel_acc);
    auto loss = [&](const char* name, double LossBreakdown::*m) {
      f.push_back({name, [m](const RunRow& r) { return r.final_loss.*m; },
                   [m](RunRow& r, double v) { r.final_loss.*m = v; }});
    };
    loss("loss_total", &LossBreakdown::total);
    loss("loss_clip", &LossBreakdown::clip);
    loss("loss_lc", &LossBreakdown::lc);
    loss("loss_mi", &LossBreakdown::mi);
    for (int split = 0; split < 2; ++split) {
      CollapseReport RunRow::*rep = split == 0 ? &RunRow::base : &RunRow::novel;
      static const char* names[2][6] = {
          {"base_delta_lcd", "base_delta_mid_signed", "base_mid_error", "base_nc1", "base_nc2", "base_nc3"},
          {"novel_delta_lcd", "novel_delta_mid_signed", "novel_mid_error", "novel_nc1", "novel_nc2", "novel_nc3"}};
      double CollapseReport::*members[6] = {&CollapseReport::delta_lcd, &CollapseReport::delta_mid_signed,
                                            &CollapseReport::mid_error, &CollapseReport::nc1,
                                            &CollapseReport::nc2,       &CollapseReport::nc3};
      for (int i = 0; i < 6; ++i) {
        double CollapseReport::*m = members[i];
        f.push_back({names[split][i], [rep, m](const RunRow& r) { return (r.*rep).*m; },
                     [rep, m](RunRow& r, double v) { (r.*rep).*m = v; }});
      }
    }
    return f;
  }();
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + '"';
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cells.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.emplace_back();
    } else {
      cells.back() += ch;
    }
  }
  return cells;
}

inline std::string join_counts(const std::vector<Index>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) s += (i ? ";" : "") + std::to_string(counts[i]);
  return s;
}

}  // namespace detail

inline std::string runs_csv_header() {
  std::string h = "tau,method,w1,w2,seed,status";
  for (const auto& f : detail::numeric_fields()) h += std::string(",") + f.name;
  return h + ",train_counts,error";
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunRow>& rows) {
  os << runs_csv_header() << '\n';
  for (const RunRow& r : rows) {
    os << format_double(r.spec.tau) << ',' << to_string(r.spec.method) << ',' << format_double(r.spec.weights.w1)
       << ',' << format_double(r.spec.weights.w2) << ',' << r.spec.seed << ',' << (r.ok ? "ok" : "failed");
    for (const auto& f : detail::numeric_fields()) os << ',' << (r.ok ? format_double(f.get(r)) : "");
    os << ',' << detail::join_counts(r.train_counts) << ',' << detail::csv_escape(r.error) << '\n';
  }
}

inline std::vector<RunRow> read_runs_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != runs_csv_header()) throw IoError("runs.csv: unexpected header");
  const auto& fields = detail::numeric_fields();
  std::vector<RunRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = detail::csv_split(line);
    if (cells.size() != 6 + fields.size() + 2)
      throw IoError("runs.csv: row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                    " cells");
    RunRow r;
    try {
      r.spec.tau = std::stod(cells[0]);
      r.spec.method = method_from_string(cells[1]);
      r.spec.weights = {std::stod(cells[2]), std::stod(cells[3])};
      r.spec.seed = std::stoull(cells[4]);
      r.ok = cells[5] == "ok";
      if (r.ok)
        for (std::size_t i = 0; i < fields.size(); ++i) fields[i].set(r, std::stod(cells[6 + i]));
      std::istringstream cs(cells[6 + fields.size()]);
      for (std::string tok; std::getline(cs, tok, ';');) r.train_counts.push_back(std::stol(tok));
    } catch (const std::logic_error& e) {
      throw IoError("runs.csv: bad value in row " + std::to_string(rows.size() + 1) + ": " + e.what());
    }
    r.error = cells.back();
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregates

struct GroupKey {
  double tau = 1.0;
  Method method = Method::Baseline;
  WeightSetting weights{0.0, 0.0};
  auto tie() const { return std::make_tuple(-tau, int(method), weights.w1, weights.w2); }
  bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
  bool operator==(const GroupKey& o) const { return tie() == o.tie(); }
};

inline const std::vector<std::string>& aggregated_metrics() {
  static const std::vector<std::string> names{"base_acc",        "novel_acc",       "harmonic_mean",
                                              "base_delta_lcd",  "base_mid_error",  "novel_delta_lcd",
                                              "novel_mid_error", "novel_nc1",       "novel_nc2",
                                              "novel_nc3",       "base_train_acc",  "loss_total"};
  return names;
}

inline double row_value(const RunRow& r, const std::string& name) {
  for (const auto& f : detail::numeric_fields())
    if (name == f.name) return f.get(r);
  throw ArgumentError("unknown run field '" + name + "'");
}

struct MetricStats {
  double mean = 0.0, std = 0.0;  // std is the sample standard deviation (n - 1); 0 for one run
};

struct GroupAggregate {
  GroupKey key;
  std::size_t runs = 0, failed = 0;
  std::map<std::string, MetricStats> metrics;
};

// npt (per weight setting) vs baseline at one tau, paired by seed.
struct WinRate {
  double tau = 1.0;
  WeightSetting weights;
  std::size_t wins = 0, pairs = 0;
  double rate() const { return pairs ? double(wins) / double(pairs) : 0.0; }
};

struct ExperimentReport {
  std::vector<RunRow> rows;
  std::vector<GroupAggregate> groups;
  std::vector<WinRate> win_rates;

  std::size_t failed() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const RunRow& r) { return !r.ok; }));
  }

  const GroupAggregate* find(double tau, Method m, WeightSetting w = {0.0, 0.0}) const {
    if (m == Method::Baseline) w = {0.0, 0.0};
    const GroupKey k{tau, m, w};
    for (const auto& g : groups)
      if (g.key == k) return &g;
    return nullptr;
  }

  double mean(double tau, Method m, const std::string& metric, WeightSetting w = {0.0, 0.0}) const {
    const GroupAggregate* g = find(tau, m, w);
    if (!g) throw ArgumentError("no runs for the requested group");
    return g->metrics.at(metric).mean;
  }
};

inline bool row_order(const RunRow& a, const RunRow& b) {
  const GroupKey ka{a.spec.tau, a.spec.method, a.spec.weights}, kb{b.spec.tau, b.spec.method, b.spec.weights};
  if (ka < kb) return true;
  if (kb < ka) return false;
  return a.spec.seed < b.spec.seed;
}

inline ExperimentReport aggregate(std::vector<RunRow> rows) {
  ExperimentReport rep;
  std::sort(rows.begin(), rows.end(), row_order);
  std::map<GroupKey, std::vector<const RunRow*>> groups;
  for (const RunRow& r : rows) groups[{r.spec.tau, r.spec.method, r.spec.weights}].push_back(&r);
  for (const auto& [key, members] : groups) {
    GroupAggregate g;
    g.key = key;
    std::vector<const RunRow*> ok;
    for (const RunRow* r : members) (r->ok ? ok.push_back(r) : void(++g.failed));
    g.runs = ok.size();
    for (const std::string& m : aggregated_metrics()) {
      std::vector<double> v;
      for (const RunRow* r : ok) v.push_back(row_value(*r, m));
      MetricStats s;
      if (!v.empty()) {
        const SummaryStats ss = summarize(v);
        s.mean = ss.mean;
        s.std = ss.stddev;
      } else {
        s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
      }
      g.metrics[m] = s;
    }
    rep.groups.push_back(std::move(g));
  }
  for (const auto& [key, members] : groups) {
    if (key.method != Method::Npt) continue;
    auto base_it = groups.find({key.tau, Method::Baseline, {0.0, 0.0}});
    if (base_it == groups.end()) continue;
    WinRate w{key.tau, key.weights, 0, 0};
    for (const RunRow* n : members) {
      if (!n->ok) continue;
      for (const RunRow* b : base_it->second) {
        if (b->ok && b->spec.seed == n->spec.seed) {
          ++w.pairs;
          w.wins += n->harmonic_mean > b->harmonic_mean;
        }
      }
    }
    rep.win_rates.push_back(w);
  }
  rep.rows = std::move(rows);
  return rep;
}

inline json aggregate_json(const ExperimentReport& rep) {
  json groups = json::array();
  for (const auto& g : rep.groups) {
    json m = json::object();
    for (const auto& [name, s] : g.metrics) m[name] = {{"mean", s.mean}, {"std", s.std}};
    groups.push_back({{"tau", g.key.tau},
                      {"method", to_string(g.key.method)},
                      {"w1", g.key.weights.w1},
                      {"w2", g.key.weights.w2},
                      {"runs", g.runs},
                      {"failed", g.failed},
                      {"metrics", std::move(m)}});
  }
  json wins = json::array();
  for (const auto& w : rep.win_rates)
    wins.push_back({{"tau", w.tau}, {"w1", w.weights.w1}, {"w2", w.weights.w2}, {"wins", w.wins},
                    {"pairs", w.pairs}, {"rate", w.rate()}});
  return {{"total_runs", rep.rows.size()}, {"failed_runs", rep.failed()}, {"groups", std::move(groups)},
          {"win_rates", std::move(wins)}};
}

// Recomputes the aggregates from the rows and compares with the stored JSON.
inline void verify_aggregate(const std::vector<RunRow>& rows, const json& stored, double tol = 1e-12) {
  const json fresh = aggregate_json(aggregate(rows));
  auto close = [tol](const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
      const double x = a.get<double>(), y = b.get<double>();
      return (std::isnan(x) && std::isnan(y)) || std::abs(x - y) <= tol * std::max(1.0, std::abs(x));
    }
    auto nan_like = [](const json& v) { return v.is_null() || (v.is_number() && std::isnan(v.get<double>())); };
    if (nan_like(a) && nan_like(b)) return true;
    return a == b;
  };
  std::function<bool(const json&, const json&)> same = [&](const json& a, const json& b) {
    if (a.is_object() && b.is_object()) {
      for (auto it = a.begin(); it != a.end(); ++it)
        if (!b.contains(it.key()) || !same(it.value(), b.at(it.key()))) return false;
      return true;
    }
    if (a.is_array() && b.is_array()) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (!same(a[i], b[i])) return false;
      return true;
    }
    return close(a, b);
  };
  if (!same(fresh, stored)) throw IoError("aggregate.json does not match the aggregates recomputed from runs.csv");
}

// ---------------------------------------------------------------------------
// Config JSON (keys mirror the ExperimentConfig field names)

inline void to_json(json& j, const ShiftConfig& s) {
  j = {{"enabled", s.enabled}, {"noise_sigma", s.noise_sigma}, {"rotation_strength", s.rotation_strength},
       {"rotation_seed", s.rotation_seed}};
}

inline void from_json(const json& j, ShiftConfig& s) {
  detail::get_opt(j, "enabled", s.enabled);
  detail::get_opt(j, "noise_sigma", s.noise_sigma);
  detail::get_opt(j, "rotation_strength", s.rotation_strength);
  detail::get_opt(j, "rotation_seed", s.rotation_seed);
}

inline void to_json(json& j, const ExperimentConfig& c) {
  json methods = json::array(), grid = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  for (const auto& w : c.weight_grid) grid.push_back({{"w1", w.w1}, {"w2", w.w2}});
  j = {{"model", c.model},   {"data", c.data},         {"pretrain", c.pretrain},
       {"train", c.train},   {"taus", c.taus},         {"methods", methods},
       {"seeds", c.seeds},   {"weight_grid", grid},    {"n_max", c.n_max},
       {"test_per_class", c.test_per_class},           {"shift", c.shift},
       {"workers", c.workers}, {"out_dir", c.out_dir}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{"model", "data",  "pretrain", "train",          "taus",  "methods",
                                           "seeds", "weight_grid", "n_max", "test_per_class", "shift", "workers",
                                           "out_dir"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ArgumentError("config: unknown key '" + it.key() + "'");
  detail::get_opt(j, "data", c.data);
  // model dimensions follow the generator unless given explicitly
  c.model.raw_dim = c.data.raw_dim;
  c.model.num_classes = c.data.num_classes;
  detail::get_opt(j, "model", c.model);
  detail::get_opt(j, "pretrain", c.pretrain);
  detail::get_opt(j, "train", c.train);
  detail::get_opt(j, "taus", c.taus);
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  detail::get_opt(j, "seeds", c.seeds);
  if (j.contains("weight_grid")) {
    c.weight_grid.clear();
    for (const auto& w : j.at("weight_grid")) c.weight_grid.push_back({w.at("w1").get<double>(), w.at("w2").get<double>()});
  }
  detail::get_opt(j, "n_max", c.n_max);
  detail::get_opt(j, "test_per_class", c.test_per_class);
  detail::get_opt(j, "shift", c.shift);
  detail::get_opt(j, "workers", c.workers);
  detail::get_opt(j, "out_dir", c.out_dir);
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArgumentError("cannot open config " + path);
  try {
    ExperimentConfig c = json::parse(f).get<ExperimentConfig>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ArgumentError("malformed config " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweep

inline std::vector<RunSpec> sweep_specs(const ExperimentConfig& c) {
  std::vector<RunSpec> specs;
  for (double tau : c.taus)
    for (Method m : c.methods) {
      const std::vector<WeightSetting> ws =
          m == Method::Baseline ? std::vector<WeightSetting>{{0.0, 0.0}} : c.npt_weights();
      for (const auto& w : ws)
        for (std::uint64_t s : c.seeds) specs.push_back({tau, m, w, s});
    }
  return specs;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

inline ExperimentReport run_sweep_rows(const ExperimentConfig& c,
                                       const std::function<void(const RunRow&)>& on_done = {}) {
  c.validate();
  const std::vector<RunSpec> specs = sweep_specs(c);
  std::vector<RunRow> rows(specs.size());
  std::mutex mu;
  parallel_for(specs.size(), c.workers, [&](std::size_t i) {
    rows[i] = run_base_to_novel(c, specs[i]);
    if (on_done) {
      std::lock_guard lock(mu);
      on_done(rows[i]);
    }
  });
  return aggregate(std::move(rows));
}

}  // namespace npt
