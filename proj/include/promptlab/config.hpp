#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "promptlab/adversary.hpp"
#include "promptlab/objective.hpp"
#include "promptlab/ot.hpp"

namespace promptlab {

// Declarative run specification. Every field has a default; unknown keys in
// a loaded document are rejected by name so a typo cannot silently skew a
// sweep.
struct ExperimentConfig {
  struct Encoder {
    std::size_t layers = 12;
    std::size_t d_emb = 16;
    std::size_t d_hidden = 32;
    std::size_t d_feat = 32;
  } encoder;

  struct Prompts {
    std::size_t length = 4;   // L
    std::size_t depth = 9;    // D
    std::size_t templates = 60;  // N
  } prompts;

  SinkhornOptions ot;

  struct Attack {
    double epsilon = 1.0 / 255.0;
    double mu = 1.0 / 255.0;
    std::size_t steps = 2;
    std::string p = "inf";          // "inf" | "2"
    std::string target = "hand";    // "hand" | "tuning"
  } attack;

  struct Loss {
    double alpha = 0.3;
    double tau = 0.01;
    bool ot_enabled = true;
    bool sp_enabled = true;
    std::string kl_direction = "forward";  // "forward" | "reverse"
  } loss;

  struct Data {
    std::size_t classes = 10;
    std::size_t input_dim = 64;
    std::size_t samples_per_class = 36;
    std::size_t eval_per_class = 20;
    std::size_t shots = 16;
    double sigma = 0.08;
  } data;

  struct Run {
    std::uint64_t seed = 1;
    std::size_t epochs = 50;
    double lr = 0.0025;
    std::size_t batch = 0;  // 0 = full shot set
    std::string task = "base2novel";  // "base2novel" | "fewshot"
  } run;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::string& path);

  // All effective values in canonical section and key order.
  nlohmann::ordered_json resolved() const;
  // FNV-1a of the canonical resolved document.
  std::string digest() const;

  void validate() const;
  double attack_p() const;  // numeric norm order
  AttackConfig attack_config() const;
  LossToggles toggles() const;
};

// Dotted-key override, e.g. set_key(cfg, "prompts.length", 8).
void set_key(ExperimentConfig& cfg, const std::string& dotted_key,
             const nlohmann::json& value);

}  // namespace promptlab
