#include "kge/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "kge/error.h"

namespace kge {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'K', 'G', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::ostream& os, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof bytes)) throw IoError("truncated tensor file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t parse_hex(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

void write_tensor_file(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) put_le<std::uint64_t>(out, d);
    for (float v : t->values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::pair<std::string, Tensor<float>>> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + " is not a tensor file");
  if (get_le<std::uint32_t>(in) != kVersion) throw IoError("unsupported tensor file version in " + path.string());
  const std::uint32_t count = get_le<std::uint32_t>(in);
  std::vector<std::pair<std::string, Tensor<float>>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_le<std::uint32_t>(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw IoError("truncated tensor file");
    Shape shape(get_le<std::uint32_t>(in));
    for (auto& d : shape) d = get_le<std::uint64_t>(in);
    Tensor<float> t(shape);
    for (auto& v : t.values()) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& dir, Trainer& trainer, std::uint64_t dataset_hash) {
  std::filesystem::create_directories(dir);
  Model<float>& model = trainer.model();
  AdamState<float>& adam = trainer.optimizer();

  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  json entries = json::array();
  const auto add = [&](const std::string& name, const Tensor<float>* t, const char* kind) {
    tensors.emplace_back(name, t);
    entries.push_back({{"name", name}, {"shape", t->shape()}, {"kind", kind}});
  };
  const auto params = model.parameters();
  for (const auto* p : params) add(p->name, &p->value, "parameter");
  for (const auto& [name, t] : model.buffers()) add(name, t, "buffer");
  for (std::size_t i = 0; i < adam.first_moment.size(); ++i) {
    add("adam.m/" + params[i]->name, &adam.first_moment[i], "adam_first_moment");
    add("adam.v/" + params[i]->name, &adam.second_moment[i], "adam_second_moment");
  }
  write_tensor_file(dir / "tensors.bin", tensors);

  const ModelConfig& cfg = model.config();
  json manifest;
  manifest["format"] = "kge-checkpoint";
  manifest["version"] = kVersion;
  manifest["config"] = json::parse(config_to_json(cfg));
  manifest["config_hash"] = hex64(config_hash(cfg));
  manifest["dataset_hash"] = hex64(dataset_hash);
  manifest["entity_count"] = model.entity_count();
  manifest["relation_count"] = model.relation_count();
  manifest["epoch"] = trainer.epoch();
  manifest["seed"] = cfg.seed;
  manifest["initializer"] = "xavier_uniform; tucker core uniform(-1, 1); norms gamma=1 beta=0; biases 0";
  manifest["rng_state"] = trainer.rng().state();
  manifest["adam"] = {{"step", adam.step},
                      {"beta1", adam.options.beta1},
                      {"beta2", adam.options.beta2},
                      {"eps", adam.options.eps}};
  manifest["tensors"] = entries;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

namespace {

CheckpointInfo info_from_manifest(const json& manifest) {
  if (manifest.value("format", "") != "kge-checkpoint") throw IoError("not a kge checkpoint manifest");
  CheckpointInfo info;
  info.config = config_from_json(manifest.at("config").dump());
  info.config_hash = parse_hex(manifest.at("config_hash").get<std::string>());
  info.dataset_hash = parse_hex(manifest.at("dataset_hash").get<std::string>());
  info.entity_count = manifest.at("entity_count").get<std::size_t>();
  info.relation_count = manifest.at("relation_count").get<std::size_t>();
  info.epoch = manifest.at("epoch").get<std::size_t>();
  info.initializer = manifest.value("initializer", "");
  const std::uint64_t recomputed = config_hash(info.config);
  if (recomputed != info.config_hash) {
    throw IoError("checkpoint config hash " + hex64(info.config_hash) + " does not match recomputed " +
                  hex64(recomputed));
  }
  return info;
}

json read_manifest(const std::filesystem::path& dir) {
  try {
    return json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  try {
    return info_from_manifest(read_manifest(dir));
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_manifest(dir);
  LoadedCheckpoint loaded;
  try {
    loaded.info = info_from_manifest(manifest);
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  loaded.trainer = std::make_unique<Trainer>(loaded.info.config, loaded.info.entity_count, loaded.info.relation_count);
  Trainer& trainer = *loaded.trainer;
  Model<float>& model = trainer.model();

  std::map<std::string, Tensor<float>> stored;
  for (auto& [name, t] : read_tensor_file(dir / "tensors.bin")) stored.emplace(std::move(name), std::move(t));
  const auto take = [&](const std::string& name, Tensor<float>& dst) {
    auto it = stored.find(name);
    if (it == stored.end()) throw IoError("checkpoint lacks tensor " + name);
    if (it->second.shape() != dst.shape()) {
      throw IoError("checkpoint tensor " + name + " has shape " + shape_string(it->second.shape()) + ", expected " +
                    shape_string(dst.shape()));
    }
    dst = std::move(it->second);
  };
  const auto params = model.parameters();
  for (auto* p : params) take(p->name, p->value);
  for (auto& [name, t] : model.buffers()) take(name, *t);

  AdamState<float>& adam = trainer.optimizer();
  const json& a = manifest.at("adam");
  adam.step = a.at("step").get<std::int64_t>();
  adam.options.beta1 = a.at("beta1").get<double>();
  adam.options.beta2 = a.at("beta2").get<double>();
  adam.options.eps = a.at("eps").get<double>();
  if (adam.step > 0) {
    for (auto* p : params) {
      adam.first_moment.emplace_back(p->value.shape());
      adam.second_moment.emplace_back(p->value.shape());
      take("adam.m/" + p->name, adam.first_moment.back());
      take("adam.v/" + p->name, adam.second_moment.back());
    }
  }
  trainer.rng().set_state(manifest.at("rng_state").get<std::string>());
  trainer.set_epoch(loaded.info.epoch);
  return loaded;
}

}  // namespace kge
