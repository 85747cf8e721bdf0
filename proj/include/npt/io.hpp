#pragma once

// JSON forms of the configs and the model checkpoint.

#include "npt/data.hpp"
#include "npt/losses.hpp"
#include "npt/model.hpp"
#include "npt/train.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace npt {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

inline Matrix matrix_from_json(const json& j) {
  const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
  Matrix m(r, c);
  const json& data = j.at("data");
  if (static_cast<Index>(data.size()) != r) throw IoError("matrix: row count mismatch");
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(data[static_cast<std::size_t>(i)].size()) != c) throw IoError("matrix: column count mismatch");
    for (Index k = 0; k < c; ++k) m(i, k) = data[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace detail

inline void to_json(json& j, const ModelConfig& c) {
  j = {{"token_dim", c.token_dim},           {"context_tokens", c.context_tokens},
       {"rep_dim", c.rep_dim},               {"num_classes", c.num_classes},
       {"raw_dim", c.raw_dim},               {"lambda_temp", c.lambda_temp},
       {"vision_prompt_enabled", c.vision_prompt_enabled}, {"init_seed", c.init_seed}};
}

inline void from_json(const json& j, ModelConfig& c) {
  detail::get_opt(j, "token_dim", c.token_dim);
  detail::get_opt(j, "context_tokens", c.context_tokens);
  detail::get_opt(j, "rep_dim", c.rep_dim);
  detail::get_opt(j, "num_classes", c.num_classes);
  detail::get_opt(j, "raw_dim", c.raw_dim);
  detail::get_opt(j, "lambda_temp", c.lambda_temp);
  detail::get_opt(j, "vision_prompt_enabled", c.vision_prompt_enabled);
  detail::get_opt(j, "init_seed", c.init_seed);
}

inline void to_json(json& j, const AlignmentConfig& c) {
  j = {{"alignment", c.alignment}, {"text_anisotropy", c.text_anisotropy}};
}

inline void from_json(const json& j, AlignmentConfig& c) {
  detail::get_opt(j, "alignment", c.alignment);
  detail::get_opt(j, "text_anisotropy", c.text_anisotropy);
}

inline void to_json(json& j, const GeneratorConfig& c) {
  j = {{"raw_dim", c.raw_dim},
       {"num_classes", c.num_classes},
       {"direction_mode", to_string(c.direction_mode)},
       {"noise_sigma", c.noise_sigma},
       {"domain_offset", c.domain_offset},
       {"seed", c.seed}};
}

inline void from_json(const json& j, GeneratorConfig& c) {
  detail::get_opt(j, "raw_dim", c.raw_dim);
  detail::get_opt(j, "num_classes", c.num_classes);
  if (j.contains("direction_mode")) c.direction_mode = direction_mode_from_string(j.at("direction_mode").get<std::string>());
  detail::get_opt(j, "noise_sigma", c.noise_sigma);
  detail::get_opt(j, "domain_offset", c.domain_offset);
  detail::get_opt(j, "seed", c.seed);
}

inline void to_json(json& j, const LossWeights& w) {
  j = {{"w1", w.w1}, {"w2", w.w2}, {"mi_reduction", to_string(w.mi_reduction)}};
}

inline void from_json(const json& j, LossWeights& w) {
  detail::get_opt(j, "w1", w.w1);
  detail::get_opt(j, "w2", w.w2);
  if (j.contains("mi_reduction")) w.mi_reduction = mi_reduction_from_string(j.at("mi_reduction").get<std::string>());
}

inline void to_json(json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"weights", c.weights},
       {"method", to_string(c.method)},
       {"seed", c.seed},
       {"record_every", c.record_every}};
}

inline void from_json(const json& j, TrainConfig& c) {
  detail::get_opt(j, "steps", c.steps);
  detail::get_opt(j, "learning_rate", c.learning_rate);
  detail::get_opt(j, "batch_size", c.batch_size);
  detail::get_opt(j, "weights", c.weights);
  if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
  detail::get_opt(j, "seed", c.seed);
  detail::get_opt(j, "record_every", c.record_every);
}

// ---------------------------------------------------------------------------
// Checkpoint: every tensor, the config and the seeds. Doubles are written in
// shortest round-trip form, so save/load is bit-exact.

inline json checkpoint_json(const ModelParams& p) {
  return {{"format", "npt-checkpoint"},
          {"version", kCheckpointVersion},
          {"config", p.config},
          {"context", detail::vector_to_json(p.context)},
          {"vision_prompt", detail::vector_to_json(p.vision_prompt)},
          {"class_embeddings", detail::matrix_to_json(p.class_embeddings)},
          {"text_backbone", detail::matrix_to_json(p.text_backbone)},
          {"vision_backbone", detail::matrix_to_json(p.vision_backbone)},
          {"prompt_injection", detail::matrix_to_json(p.prompt_injection)}};
}

inline ModelParams params_from_checkpoint(const json& j) {
  if (j.value("format", "") != "npt-checkpoint") throw IoError("not an npt checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  ModelParams p;
  p.config = j.at("config").get<ModelConfig>();
  p.config.validate();
  p.context = detail::vector_from_json(j.at("context"));
  p.vision_prompt = detail::vector_from_json(j.at("vision_prompt"));
  p.class_embeddings = detail::matrix_from_json(j.at("class_embeddings"));
  p.text_backbone = detail::matrix_from_json(j.at("text_backbone"));
  p.vision_backbone = detail::matrix_from_json(j.at("vision_backbone"));
  p.prompt_injection = detail::matrix_from_json(j.at("prompt_injection"));
  const ModelConfig& c = p.config;
  if (p.context.size() != c.context_size() || p.vision_prompt.size() != c.token_dim ||
      p.class_embeddings.rows() != c.token_dim || p.class_embeddings.cols() != c.num_classes ||
      p.text_backbone.rows() != c.rep_dim || p.text_backbone.cols() != c.text_input_dim() ||
      p.vision_backbone.rows() != c.rep_dim || p.vision_backbone.cols() != c.raw_dim ||
      p.prompt_injection.rows() != c.rep_dim || p.prompt_injection.cols() != c.token_dim)
    throw IoError("checkpoint tensor shapes do not match its config");
  return p;
}

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << checkpoint_json(p).dump() << '\n';
  if (!f) throw IoError("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return params_from_checkpoint(json::parse(f));
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
}

inline bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && std::equal(x.data(), x.data() + x.size(), y.data());
  };
  return frozen_equal(a, b) && same(a.context, b.context) && same(a.vision_prompt, b.vision_prompt) &&
         json(a.config) == json(b.config);
}

}  // namespace npt
