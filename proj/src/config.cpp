#include "ggp/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ggp::harness {

void ExperimentConfig::validate() const {
  auto check_phase = [](const char* name, const PhaseConfig& p, int min_batch) {
    if (p.epochs < 1) throw std::runtime_error(std::string(name) + ".epochs must be >= 1");
    if (p.batch < min_batch)
      throw std::runtime_error(std::string(name) + ".batch must be >= " + std::to_string(min_batch));
    if (p.lr <= 0.0) throw std::runtime_error(std::string(name) + ".lr must be positive");
    if (p.warmup < 0.0 || p.warmup >= 1.0) throw std::runtime_error(std::string(name) + ".warmup must lie in [0,1)");
  };
  check_phase("pretrain", pretrain, 2);  // ITM needs an in-batch negative
  check_phase("finetune", finetune, 1);
  ggp.validate();
  if (data_pretrain_n < 2 || data_vqa_train < 1 || data_vqa_val < 1)
    throw std::runtime_error("data sizes must be positive (pretrain_n >= 2)");
  if (itc_temperature <= 0.0) throw std::runtime_error("itc.temperature must be positive");
  if (itc_queue < 0) throw std::runtime_error("itc.queue must be non-negative");
  if (model_momentum < 0.0 || model_momentum > 1.0) throw std::runtime_error("model.momentum must lie in [0,1]");
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["pretrain.epochs"] = pretrain.epochs;
  j["pretrain.batch"] = pretrain.batch;
  j["pretrain.lr"] = pretrain.lr;
  j["pretrain.warmup"] = pretrain.warmup;
  j["finetune.epochs"] = finetune.epochs;
  j["finetune.batch"] = finetune.batch;
  j["finetune.lr"] = finetune.lr;
  j["finetune.warmup"] = finetune.warmup;
  j["ggp.delta"] = ggp.delta;
  j["ggp.epsilon"] = ggp.epsilon;
  j["ggp.adaptive"] = ggp.adaptive_magnitude;
  j["ggp.fixed_ratio"] = ggp.fixed_ratio;
  j["ggp.target"] = ggp.target_prefix;
  j["ggp.pretrain"] = ggp.enabled_pretrain;
  j["ggp.finetune"] = ggp.enabled_finetune;
  j["data.pretrain_n"] = data_pretrain_n;
  j["data.vqa_train"] = data_vqa_train;
  j["data.vqa_val"] = data_vqa_val;
  j["optim.beta1"] = adamw.beta1;
  j["optim.beta2"] = adamw.beta2;
  j["optim.eps"] = adamw.eps;
  j["optim.weight_decay"] = adamw.weight_decay;
  j["itc.temperature"] = itc_temperature;
  j["itc.queue"] = itc_queue;
  j["model.momentum"] = model_momentum;
  return j.dump(2);
}

namespace {

using Setter = std::function<void(ExperimentConfig&, const nlohmann::json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> s = {
      {"seed", [](ExperimentConfig& c, const nlohmann::json& v) { c.seed = v.get<uint64_t>(); }},
      {"pretrain.epochs", [](ExperimentConfig& c, const nlohmann::json& v) { c.pretrain.epochs = v.get<int>(); }},
      {"pretrain.batch", [](ExperimentConfig& c, const nlohmann::json& v) { c.pretrain.batch = v.get<int>(); }},
      {"pretrain.lr", [](ExperimentConfig& c, const nlohmann::json& v) { c.pretrain.lr = v.get<double>(); }},
      {"pretrain.warmup", [](ExperimentConfig& c, const nlohmann::json& v) { c.pretrain.warmup = v.get<double>(); }},
      {"finetune.epochs", [](ExperimentConfig& c, const nlohmann::json& v) { c.finetune.epochs = v.get<int>(); }},
      {"finetune.batch", [](ExperimentConfig& c, const nlohmann::json& v) { c.finetune.batch = v.get<int>(); }},
      {"finetune.lr", [](ExperimentConfig& c, const nlohmann::json& v) { c.finetune.lr = v.get<double>(); }},
      {"finetune.warmup", [](ExperimentConfig& c, const nlohmann::json& v) { c.finetune.warmup = v.get<double>(); }},
      {"ggp.delta", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.delta = v.get<double>(); }},
      {"ggp.epsilon", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.epsilon = v.get<double>(); }},
      {"ggp.adaptive", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.adaptive_magnitude = v.get<bool>(); }},
      {"ggp.fixed_ratio", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.fixed_ratio = v.get<double>(); }},
      {"ggp.target", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.target_prefix = v.get<std::string>(); }},
      {"ggp.pretrain", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.enabled_pretrain = v.get<bool>(); }},
      {"ggp.finetune", [](ExperimentConfig& c, const nlohmann::json& v) { c.ggp.enabled_finetune = v.get<bool>(); }},
      {"data.pretrain_n", [](ExperimentConfig& c, const nlohmann::json& v) { c.data_pretrain_n = v.get<int>(); }},
      {"data.vqa_train", [](ExperimentConfig& c, const nlohmann::json& v) { c.data_vqa_train = v.get<int>(); }},
      {"data.vqa_val", [](ExperimentConfig& c, const nlohmann::json& v) { c.data_vqa_val = v.get<int>(); }},
      {"optim.beta1", [](ExperimentConfig& c, const nlohmann::json& v) { c.adamw.beta1 = v.get<double>(); }},
      {"optim.beta2", [](ExperimentConfig& c, const nlohmann::json& v) { c.adamw.beta2 = v.get<double>(); }},
      {"optim.eps", [](ExperimentConfig& c, const nlohmann::json& v) { c.adamw.eps = v.get<double>(); }},
      {"optim.weight_decay",
       [](ExperimentConfig& c, const nlohmann::json& v) { c.adamw.weight_decay = v.get<double>(); }},
      {"itc.temperature", [](ExperimentConfig& c, const nlohmann::json& v) { c.itc_temperature = v.get<double>(); }},
      {"itc.queue", [](ExperimentConfig& c, const nlohmann::json& v) { c.itc_queue = v.get<int>(); }},
      {"model.momentum", [](ExperimentConfig& c, const nlohmann::json& v) { c.model_momentum = v.get<double>(); }},
  };
  return s;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const nlohmann::json& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw std::runtime_error("config: unknown key '" + key + "'");
  try {
    it->second(cfg, value);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: bad value for '" + key + "': " + e.what());
  }
}

void apply_json(ExperimentConfig& cfg, const nlohmann::json& j, const std::string& prefix) {
  if (!j.is_object()) throw std::runtime_error("config: expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      apply_json(cfg, v, key);
    else
      apply_key(cfg, key, v);
  }
}

// Scalar text -> json value: bool, string (quoted or bare word), or number.
nlohmann::json parse_scalar(const std::string& raw, const std::string& key) {
  std::string s = raw;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  if (s.empty()) throw std::runtime_error("config: empty value for '" + key + "'");
  if (s == "true") return true;
  if (s == "false") return false;
  if (s.front() == '"' && s.back() == '"' && s.size() >= 2) return s.substr(1, s.size() - 2);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (end && *end == '\0') {
    if (s.find_first_of(".eE") == std::string::npos) {
      // integer-looking: preserve exact unsigned range for seeds
      try {
        return nlohmann::json(static_cast<uint64_t>(std::stoull(s)));
      } catch (...) {
      }
    }
    return d;
  }
  return s;  // bare word (e.g. ggp.target = visual_encoder)
}

}  // namespace

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    apply_json(cfg, nlohmann::json::parse(text), "");
    cfg.validate();
    return cfg;
  }
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    std::string value = line.substr(eq + 1);
    const std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    apply_key(cfg, key, parse_scalar(value, key));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

}  // namespace ggp::harness
