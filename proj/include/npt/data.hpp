#pragma once

// Synthetic labeled feature sets with exponential-decay class imbalance.
//
// Every class k owns a unit direction s_k in raw space. A sample of class k is
// x = s_k + o + sigma * eps with eps standard Gaussian and o a dataset-wide
// offset ("domain style", zero by default). Directions depend only on the
// generator seed; samples come from a separate stream so train and test sets
// share classes but not draws.

#include "npt/core.hpp"
#include "npt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

namespace npt {

struct ImbalanceProfile {
  std::vector<Index> counts;
  double requested_tau = 1.0;
  double realized_tau = 1.0;
  Index n_max = 16;

  Index total() const {
    Index t = 0;
    for (Index c : counts) t += c;
    return t;
  }
};

// n_k = max(1, round_half_up(n_max * tau^((k-1)/(K-1)))), k = 1..K.
inline ImbalanceProfile imbalance_profile(Index num_classes, Index n_max, double tau) {
  require(num_classes >= 1, "imbalance_profile: K must be >= 1");
  require(n_max >= 1, "imbalance_profile: n_max must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("imbalance_profile: tau must lie in (0, 1]");
  ImbalanceProfile p;
  p.requested_tau = tau;
  p.n_max = n_max;
  for (Index k = 0; k < num_classes; ++k) {
    if (num_classes == 1) {
      p.counts.push_back(n_max);
      break;
    }
    const double exact = static_cast<double>(n_max) * std::pow(tau, double(k) / double(num_classes - 1));
    p.counts.push_back(std::max<Index>(1, static_cast<Index>(std::floor(exact + 0.5))));
  }
  const auto [lo, hi] = std::minmax_element(p.counts.begin(), p.counts.end());
  p.realized_tau = static_cast<double>(*lo) / static_cast<double>(*hi);
  return p;
}

enum class DirectionMode { RandomUnit, Etf };

inline const char* to_string(DirectionMode m) { return m == DirectionMode::Etf ? "etf" : "random-unit"; }

inline DirectionMode direction_mode_from_string(const std::string& s) {
  if (s == "random-unit") return DirectionMode::RandomUnit;
  if (s == "etf") return DirectionMode::Etf;
  throw ArgumentError("unknown class direction mode '" + s + "' (expected random-unit|etf)");
}

struct GeneratorConfig {
  Index raw_dim = 32;
  Index num_classes = 10;
  DirectionMode direction_mode = DirectionMode::RandomUnit;
  double noise_sigma = 0.3;
  double domain_offset = 3.0;  // magnitude of the shared offset o
  std::uint64_t seed = 0;

  void validate() const {
    require(raw_dim >= 1 && num_classes >= 1, "GeneratorConfig: dimensions must be >= 1");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "GeneratorConfig: noise sigma must be >= 0");
    require(domain_offset >= 0.0, "GeneratorConfig: domain offset must be >= 0");
    if (direction_mode == DirectionMode::Etf)
      require(raw_dim >= num_classes && num_classes >= 2, "GeneratorConfig: etf mode needs raw_dim >= K >= 2");
  }
};

struct ClassWorld {
  Matrix directions;  // raw_dim x K, unit columns
  Vector offset;      // raw_dim
};

inline ClassWorld class_world(const GeneratorConfig& g) {
  g.validate();
  ClassWorld w;
  Rng rng(g.seed);
  if (g.direction_mode == DirectionMode::Etf) {
    w.directions = build_etf(g.num_classes, g.raw_dim, g.seed).columns;
  } else {
    w.directions = normalize_columns(gaussian_matrix(g.raw_dim, g.num_classes, 1.0, rng));
  }
  Vector o = gaussian_vector(g.raw_dim, 1.0, rng);
  w.offset = g.domain_offset * o / o.norm();
  return w;
}

enum class SplitTag { Train, Test };

inline const char* to_string(SplitTag s) { return s == SplitTag::Train ? "train" : "test"; }

struct Dataset {
  Matrix features;  // raw_dim x N
  Labels labels;    // global class ids
  SplitTag split = SplitTag::Train;
  GeneratorConfig generator;
  std::uint64_t sample_seed = 0;

  Index size() const { return features.cols(); }

  std::map<int, Index> class_counts() const {
    std::map<int, Index> m;
    for (int y : labels) ++m[y];
    return m;
  }
};

// Draws counts[i] samples of class class_ids[i]. Within a class, sample j is
// the same draw regardless of how many samples are requested, so a smaller
// count is a prefix (downsampling) of a larger one.
inline Dataset generate_dataset(const GeneratorConfig& g, std::span<const int> class_ids,
                                std::span<const Index> counts, SplitTag split, std::uint64_t sample_seed) {
  g.validate();
  require(class_ids.size() == counts.size(), "generate_dataset: class_ids and counts differ in length");
  const ClassWorld world = class_world(g);
  Index total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    require(class_ids[i] >= 0 && class_ids[i] < g.num_classes, "generate_dataset: class id out of range");
    require(counts[i] >= 0, "generate_dataset: negative count");
    total += counts[i];
  }
  Dataset ds;
  ds.features.resize(g.raw_dim, total);
  ds.split = split;
  ds.generator = g;
  ds.sample_seed = sample_seed;
  Index col = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const int k = class_ids[i];
    // one independent stream per (sample_seed, class)
    std::seed_seq seq{static_cast<std::uint32_t>(sample_seed), static_cast<std::uint32_t>(sample_seed >> 32),
                      static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(split)};
    Rng rng(seq);
    for (Index j = 0; j < counts[i]; ++j, ++col) {
      ds.features.col(col) = world.directions.col(k) + world.offset + gaussian_vector(g.raw_dim, g.noise_sigma, rng);
      ds.labels.push_back(k);
    }
  }
  return ds;
}

inline Dataset generate_train_set(const GeneratorConfig& g, std::span<const int> class_ids,
                                  const ImbalanceProfile& profile, std::uint64_t sample_seed) {
  require(profile.counts.size() == class_ids.size(), "generate_train_set: profile does not match class list");
  return generate_dataset(g, class_ids, profile.counts, SplitTag::Train, sample_seed);
}

inline Dataset generate_test_set(const GeneratorConfig& g, std::span<const int> class_ids, Index per_class,
                                 std::uint64_t sample_seed) {
  require(per_class >= 1, "generate_test_set: per-class count must be >= 1");
  const std::vector<Index> counts(class_ids.size(), per_class);
  return generate_dataset(g, class_ids, counts, SplitTag::Test, sample_seed);
}

struct ClassSplit {
  std::vector<int> base_ids;
  std::vector<int> novel_ids;
};

// base = first ceil(K/2) classes, novel = the rest.
inline ClassSplit base_novel_split(Index num_classes) {
  if (num_classes < 2) throw ArgumentError("base_novel_split: need K >= 2");
  ClassSplit s;
  const Index nb = (num_classes + 1) / 2;
  for (Index k = 0; k < num_classes; ++k) (k < nb ? s.base_ids : s.novel_ids).push_back(static_cast<int>(k));
  return s;
}

// Maps global class ids onto positions in class_ids.
inline Labels local_labels(std::span<const int> labels, std::span<const int> class_ids) {
  std::map<int, int> pos;
  for (std::size_t i = 0; i < class_ids.size(); ++i) pos[class_ids[i]] = static_cast<int>(i);
  Labels out;
  out.reserve(labels.size());
  for (int y : labels) {
    auto it = pos.find(y);
    if (it == pos.end()) throw ArgumentError("label " + std::to_string(y) + " is not among the candidate classes");
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Columnar text format:
//   # npt-dataset v1 raw_dim=<d> num_classes=<K> samples=<N> split=<train|test> seed=<s> sample_seed=<s> sigma=<x> offset=<x> mode=<m> counts=<k:n;...>
//   <label>,<f_1>,...,<f_d>

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "# npt-dataset v1 raw_dim=" << ds.features.rows() << " num_classes=" << ds.generator.num_classes
     << " samples=" << ds.size() << " split=" << to_string(ds.split) << " seed=" << ds.generator.seed
     << " sample_seed=" << ds.sample_seed << " sigma=" << format_double(ds.generator.noise_sigma)
     << " offset=" << format_double(ds.generator.domain_offset) << " mode=" << to_string(ds.generator.direction_mode)
     << " counts=";
  bool first = true;
  for (auto [k, n] : ds.class_counts()) {
    os << (first ? "" : ";") << k << ':' << n;
    first = false;
  }
  os << '\n';
  for (Index n = 0; n < ds.size(); ++n) {
    os << ds.labels[static_cast<std::size_t>(n)];
    for (Index i = 0; i < ds.features.rows(); ++i) os << ',' << format_double(ds.features(i, n));
    os << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  write_dataset(f, ds);
  if (!f) throw IoError("write failed: " + path);
}

inline Dataset read_dataset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("# npt-dataset v1", 0) != 0)
    throw IoError("dataset: missing 'npt-dataset v1' header");
  std::map<std::string, std::string> kv;
  std::istringstream hs(header.substr(16));
  for (std::string tok; hs >> tok;) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto field = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(std::string("dataset header lacks ") + key);
    return it->second;
  };
  Dataset ds;
  ds.generator.raw_dim = std::stol(field("raw_dim"));
  ds.generator.num_classes = std::stol(field("num_classes"));
  ds.generator.seed = std::stoull(field("seed"));
  ds.generator.noise_sigma = std::stod(field("sigma"));
  ds.generator.domain_offset = std::stod(field("offset"));
  ds.generator.direction_mode = direction_mode_from_string(field("mode"));
  ds.sample_seed = std::stoull(field("sample_seed"));
  ds.split = field("split") == "test" ? SplitTag::Test : SplitTag::Train;
  const Index n = std::stol(field("samples")), d = ds.generator.raw_dim;
  ds.features.resize(d, n);
  std::string line;
  for (Index col = 0; col < n; ++col) {
    if (!std::getline(is, line)) throw IoError("dataset: expected " + std::to_string(n) + " samples");
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    ds.labels.push_back(std::stoi(cell));
    for (Index i = 0; i < d; ++i) {
      if (!std::getline(ls, cell, ',')) throw IoError("dataset: short row " + std::to_string(col));
      ds.features(i, col) = std::stod(cell);
    }
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return read_dataset(f);
}

}  // namespace npt
