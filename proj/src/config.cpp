#include "promptlab/config.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "promptlab/rng.hpp"

namespace promptlab {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads one section, rejecting keys the reader does not consume.
class SectionReader {
 public:
  SectionReader(const json& doc, const std::string& section)
      : section_(section) {
    if (doc.contains(section)) {
      const json& s = doc.at(section);
      if (!s.is_object()) {
        throw std::invalid_argument("config: section '" + section +
                                    "' must be an object");
      }
      body_ = &s;
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!body_ || !body_->contains(key)) return;
    try {
      out = body_->at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value for key '" + section_ +
                                  "." + key + "'");
    }
    consumed_.insert(key);
  }

  void finish() const {
    if (!body_) return;
    for (auto it = body_->begin(); it != body_->end(); ++it) {
      if (!consumed_.count(it.key())) {
        throw std::invalid_argument("config: unknown key '" + section_ + "." +
                                    it.key() + "'");
      }
    }
  }

 private:
  std::string section_;
  const json* body_ = nullptr;
  std::set<std::string> consumed_;
};

const std::set<std::string> kSections = {"encoder", "prompts", "ot",
                                         "attack",  "loss",    "data", "run"};

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw std::invalid_argument("config: document must be an object");
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!kSections.count(it.key())) {
      throw std::invalid_argument("config: unknown section '" + it.key() +
                                  "'");
    }
  }
  ExperimentConfig cfg;

  SectionReader enc(doc, "encoder");
  enc.read("layers", cfg.encoder.layers);
  enc.read("d_emb", cfg.encoder.d_emb);
  enc.read("d_hidden", cfg.encoder.d_hidden);
  enc.read("d_feat", cfg.encoder.d_feat);
  enc.finish();

  SectionReader pr(doc, "prompts");
  pr.read("length", cfg.prompts.length);
  pr.read("depth", cfg.prompts.depth);
  pr.read("templates", cfg.prompts.templates);
  pr.finish();

  SectionReader ot(doc, "ot");
  ot.read("eta", cfg.ot.eta);
  ot.read("tol", cfg.ot.tol);
  ot.read("max_iter", cfg.ot.max_iter);
  ot.finish();

  SectionReader at(doc, "attack");
  bool mu_given = doc.contains("attack") && doc.at("attack").contains("mu");
  at.read("epsilon", cfg.attack.epsilon);
  at.read("mu", cfg.attack.mu);
  at.read("steps", cfg.attack.steps);
  at.read("p", cfg.attack.p);
  at.read("target", cfg.attack.target);
  at.finish();
  if (!mu_given) cfg.attack.mu = cfg.attack.epsilon;  // single-scale default

  SectionReader lo(doc, "loss");
  lo.read("alpha", cfg.loss.alpha);
  lo.read("tau", cfg.loss.tau);
  lo.read("ot_enabled", cfg.loss.ot_enabled);
  lo.read("sp_enabled", cfg.loss.sp_enabled);
  lo.read("kl_direction", cfg.loss.kl_direction);
  lo.finish();

  SectionReader da(doc, "data");
  da.read("classes", cfg.data.classes);
  da.read("input_dim", cfg.data.input_dim);
  da.read("samples_per_class", cfg.data.samples_per_class);
  da.read("eval_per_class", cfg.data.eval_per_class);
  da.read("shots", cfg.data.shots);
  da.read("sigma", cfg.data.sigma);
  da.finish();

  SectionReader ru(doc, "run");
  ru.read("seed", cfg.run.seed);
  ru.read("epochs", cfg.run.epochs);
  ru.read("lr", cfg.run.lr);
  ru.read("batch", cfg.run.batch);
  ru.read("task", cfg.run.task);
  ru.finish();

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config: cannot open '" + path + "'");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: parse error in '" + path +
                                "': " + e.what());
  }
  return from_json(doc);
}

void ExperimentConfig::validate() const {
  if (encoder.layers == 0 || encoder.d_emb == 0 || encoder.d_hidden == 0 ||
      encoder.d_feat == 0) {
    throw std::invalid_argument("config: encoder dimensions must be positive");
  }
  if (prompts.length < 1) {
    throw std::invalid_argument("config: prompts.length must be >= 1");
  }
  if (prompts.depth < 1 || prompts.depth > encoder.layers) {
    throw std::invalid_argument("config: prompts.depth outside [1, layers]");
  }
  if (prompts.depth == encoder.layers &&
      encoder.d_feat != encoder.d_hidden) {
    throw std::invalid_argument(
        "config: depth == layers requires d_feat == d_hidden");
  }
  if (prompts.templates < 1) {
    throw std::invalid_argument("config: prompts.templates must be >= 1");
  }
  if (!(ot.eta > 0.0) || !(ot.tol > 0.0)) {
    throw std::invalid_argument("config: ot.eta and ot.tol must be > 0");
  }
  if (attack.p != "inf" && attack.p != "2") {
    throw std::invalid_argument("config: attack.p must be \"inf\" or \"2\"");
  }
  if (attack.target != "hand" && attack.target != "tuning") {
    throw std::invalid_argument(
        "config: attack.target must be \"hand\" or \"tuning\"");
  }
  attack_config().validate();
  if (!(loss.tau > 0.0)) {
    throw std::invalid_argument("config: loss.tau must be > 0");
  }
  if (loss.kl_direction != "forward" && loss.kl_direction != "reverse") {
    throw std::invalid_argument(
        "config: loss.kl_direction must be \"forward\" or \"reverse\"");
  }
  if (data.classes < 2) {
    throw std::invalid_argument("config: data.classes must be >= 2");
  }
  if (data.shots == 0 || data.shots > data.samples_per_class) {
    throw std::invalid_argument(
        "config: data.shots outside [1, samples_per_class]");
  }
  if (!(data.sigma > 0.0)) {
    throw std::invalid_argument("config: data.sigma must be > 0");
  }
  if (!(run.lr > 0.0)) {
    throw std::invalid_argument("config: run.lr must be > 0");
  }
  if (run.epochs < 1) {
    throw std::invalid_argument("config: run.epochs must be >= 1");
  }
  if (run.task != "base2novel" && run.task != "fewshot") {
    throw std::invalid_argument(
        "config: run.task must be \"base2novel\" or \"fewshot\"");
  }
}

double ExperimentConfig::attack_p() const {
  return attack.p == "inf" ? kLinf : 2.0;
}

AttackConfig ExperimentConfig::attack_config() const {
  AttackConfig a;
  a.epsilon = attack.epsilon;
  a.mu = attack.mu;
  a.steps = attack.steps;
  a.p = attack_p();
  return a;
}

LossToggles ExperimentConfig::toggles() const {
  return LossToggles{loss.ot_enabled, loss.sp_enabled};
}

nlohmann::ordered_json ExperimentConfig::resolved() const {
  ordered_json doc;
  doc["encoder"] = {{"layers", encoder.layers},
                    {"d_emb", encoder.d_emb},
                    {"d_hidden", encoder.d_hidden},
                    {"d_feat", encoder.d_feat}};
  doc["prompts"] = {{"length", prompts.length},
                    {"depth", prompts.depth},
                    {"templates", prompts.templates}};
  doc["ot"] = {{"eta", ot.eta}, {"tol", ot.tol}, {"max_iter", ot.max_iter}};
  doc["attack"] = {{"epsilon", attack.epsilon},
                   {"mu", attack.mu},
                   {"steps", attack.steps},
                   {"p", attack.p},
                   {"target", attack.target}};
  doc["loss"] = {{"alpha", loss.alpha},
                 {"tau", loss.tau},
                 {"ot_enabled", loss.ot_enabled},
                 {"sp_enabled", loss.sp_enabled},
                 {"kl_direction", loss.kl_direction}};
  doc["data"] = {{"classes", data.classes},
                 {"input_dim", data.input_dim},
                 {"samples_per_class", data.samples_per_class},
                 {"eval_per_class", data.eval_per_class},
                 {"shots", data.shots},
                 {"sigma", data.sigma}};
  doc["run"] = {{"seed", run.seed},
                {"epochs", run.epochs},
                {"lr", run.lr},
                {"batch", run.batch},
                {"task", run.task}};
  return doc;
}

std::string ExperimentConfig::digest() const {
  std::string canon = resolved().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : canon) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

void set_key(ExperimentConfig& cfg, const std::string& dotted_key,
             const nlohmann::json& value) {
  auto pos = dotted_key.find('.');
  if (pos == std::string::npos) {
    throw std::invalid_argument("config: key '" + dotted_key +
                                "' must be section.key");
  }
  json doc = json::parse(cfg.resolved().dump());
  std::string section = dotted_key.substr(0, pos);
  std::string key = dotted_key.substr(pos + 1);
  if (!doc.contains(section) || !doc.at(section).contains(key)) {
    throw std::invalid_argument("config: unknown key '" + dotted_key + "'");
  }
  doc[section][key] = value;
  cfg = ExperimentConfig::from_json(doc);
}

}  // namespace promptlab
