#include "kge/config.h"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kge/error.h"
#include "kge/kg_data.h"

namespace kge {
namespace {

using nlohmann::ordered_json;

ModelConfig make_row(const std::string& dataset, DecoderKind decoder, std::size_t dim, double enc, double mha,
                     double pff, double sdp) {
  ModelConfig c;
  c.dataset = dataset;
  c.decoder = decoder;
  c.dim = dim;
  c.dropout_enc = enc;
  c.dropout_mha = mha;
  c.dropout_pff = pff;
  c.dropout_sdp = sdp;
  c.heads = 64;
  c.key_dim = 32;
  c.value_dim = 50;
  c.learning_rate = 0.001;
  c.label_smoothing = 0.1;
  if (dataset == "WN18RR") {
    c.hidden_dim = 100;
    c.batch_size = 1024;
    c.decay_rate = 1.0;
  } else {
    c.hidden_dim = 2048;
    c.batch_size = 2048;
    c.decay_rate = 0.995;
  }
  return c;
}

std::vector<Preset> build_presets() {
  const auto tm = DecoderKind::kTwoMult;
  const auto tk = DecoderKind::kTucker;
  const std::vector<std::tuple<std::string, DecoderKind, std::size_t, double, double, double, double>> rows = {
      {"FB15k-237", tm, 100, 0.4, 0.3, 0.2, 0.1},
      {"FB15k-237", tm, 64, 0.2, 0.3, 0.2, 0.1},
      {"FB15k-237", tm, 32, 0.1, 0.1, 0.1, 0.1},
      {"FB15k-237", tk, 100, 0.4, 0.2, 0.3, 0.1},
      {"FB15k-237", tk, 64, 0.4, 0.2, 0.2, 0.1},
      {"FB15k-237", tk, 32, 0.1, 0.2, 0.1, 0.1},
      {"WN18RR", tm, 100, 0.3, 0.4, 0.4, 0.1},
      {"WN18RR", tk, 64, 0.3, 0.4, 0.4, 0.1},
      {"WN18RR", tk, 32, 0.1, 0.1, 0.3, 0.4},
  };
  std::vector<Preset> out;
  for (const auto& [ds, dec, dim, enc, mha, pff, sdp] : rows) {
    out.push_back({ds, dec, dim, make_row(ds, dec, dim, enc, mha, pff, sdp)});
  }
  return out;
}

ordered_json to_json_object(const ModelConfig& c) {
  ordered_json j;
  j["dataset"] = c.dataset;
  j["decoder"] = to_string(c.decoder);
  j["decode_from"] = to_string(c.decode_from);
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["key_dim"] = c.key_dim;
  j["value_dim"] = c.value_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["dropout_enc"] = c.dropout_enc;
  j["dropout_mha"] = c.dropout_mha;
  j["dropout_pff"] = c.dropout_pff;
  j["dropout_sdp"] = c.dropout_sdp;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["decay_rate"] = c.decay_rate;
  j["decay_step"] = c.decay_step;
  j["label_smoothing"] = c.label_smoothing;
  j["multi_label"] = c.multi_label;
  j["tucker_source_norm"] = c.tucker_source_norm;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["early_stopping_patience"] = c.early_stopping_patience;
  j["eval_batch_size"] = c.eval_batch_size;
  return j;
}

}  // namespace

void ModelConfig::validate() const {
  encoder_config(*this).validate();
  if (batch_size == 0) throw ParameterError("batch_size must be at least 1");
  if (eval_batch_size == 0) throw ParameterError("eval_batch_size must be at least 1");
  if (decay_step == 0) throw ParameterError("decay_step must be at least 1");
  if (!(learning_rate >= 0.0)) throw ParameterError("learning_rate must be non-negative");
  if (!(decay_rate > 0.0)) throw ParameterError("decay_rate must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ParameterError("label_smoothing must be in [0, 1)");
}

EncoderConfig encoder_config(const ModelConfig& c) {
  EncoderConfig e;
  e.dim = c.dim;
  e.heads = c.heads;
  e.key_dim = c.key_dim;
  e.value_dim = c.value_dim;
  e.hidden_dim = c.hidden_dim;
  e.dropout_enc = c.dropout_enc;
  e.dropout_mha = c.dropout_mha;
  e.dropout_sdp = c.dropout_sdp;
  e.dropout_pff = c.dropout_pff;
  e.final_layer_norm = c.decoder == DecoderKind::kTwoMult;
  return e;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = build_presets();
  return table;
}

bool has_preset(const std::string& dataset, DecoderKind decoder, std::size_t dim) {
  const std::string name = canonical_dataset_name(dataset);
  for (const auto& p : presets()) {
    if (p.dataset == name && p.decoder == decoder && p.dim == dim) return true;
  }
  return false;
}

ModelConfig preset_config(const std::string& dataset, DecoderKind decoder, std::size_t dim) {
  const std::string name = canonical_dataset_name(dataset);
  for (const auto& p : presets()) {
    if (p.dataset == name && p.decoder == decoder && p.dim == dim) return p.config;
  }
  throw ParameterError("no published settings for " + name + " / " + to_string(decoder) + " / d=" +
                       std::to_string(dim));
}

std::string config_to_json(const ModelConfig& config) { return to_json_object(config).dump(2) + "\n"; }

ModelConfig config_from_json(const std::string& text, const ModelConfig& base) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config", 0, e.what());
  }
  if (!j.is_object()) throw ParseError("config", 0, "top level must be an object");
  ModelConfig c = base;
  const std::set<std::string> known = [] {
    std::set<std::string> keys;
    const ordered_json defaults = to_json_object(ModelConfig{});
    for (const auto& item : defaults.items()) keys.insert(item.key());
    return keys;
  }();
  try {
    for (const auto& item : j.items()) {
      if (!known.count(item.key())) throw ParameterError("unknown config key '" + item.key() + "'");
    }
    const auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dataset", c.dataset);
    if (j.contains("decoder")) c.decoder = parse_decoder_kind(j.at("decoder").get<std::string>());
    if (j.contains("decode_from")) c.decode_from = parse_decode_from(j.at("decode_from").get<std::string>());
    get("dim", c.dim);
    get("heads", c.heads);
    get("key_dim", c.key_dim);
    get("value_dim", c.value_dim);
    get("hidden_dim", c.hidden_dim);
    get("dropout_enc", c.dropout_enc);
    get("dropout_mha", c.dropout_mha);
    get("dropout_pff", c.dropout_pff);
    get("dropout_sdp", c.dropout_sdp);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("decay_rate", c.decay_rate);
    get("decay_step", c.decay_step);
    get("label_smoothing", c.label_smoothing);
    get("multi_label", c.multi_label);
    get("tucker_source_norm", c.tucker_source_norm);
    get("epochs", c.epochs);
    get("seed", c.seed);
    get("eval_every", c.eval_every);
    get("early_stopping_patience", c.early_stopping_patience);
    get("eval_batch_size", c.eval_batch_size);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config", 0, e.what());
  }
  c.dataset = canonical_dataset_name(c.dataset);
  return c;
}

ModelConfig load_config(const std::filesystem::path& path, const ModelConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), base);
}

void save_config(const ModelConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << config_to_json(config);
}

std::uint64_t config_hash(const ModelConfig& config) {
  ordered_json j = to_json_object(config);
  // Schedule-only fields may change on resume without changing the model.
  for (const char* key : {"epochs", "eval_every", "early_stopping_patience", "eval_batch_size"}) j.erase(key);
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace kge
