#include <cmath>
#include <fstream>

#include "astws/attention.hpp"
#include "json.hpp"

namespace astws {
namespace {

constexpr const char* kFormat = "astws-attention";
constexpr int kVersion = 1;

}  // namespace

// Layout (version 1):
// {
//   "format": "astws-attention", "version": 1, "taps": m, "seed": s,
//   "options": {"window_frames": L, "context_frames": C, "compression": p},
//   "tensors": {"<name>": {"shape": [n], "data": [...]}, ...}
// }
// Tensor names and shapes are those of AttentionParams::for_each; doubles
// are written with round-trip precision.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  checkpoint.params.validate();
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["taps"] = checkpoint.params.taps;
  j["seed"] = checkpoint.seed;
  j["options"] = {{"window_frames", checkpoint.options.window_frames},
                  {"context_frames", checkpoint.options.context_frames},
                  {"compression", checkpoint.options.compression}};
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  checkpoint.params.for_each([&](std::string_view name, const std::vector<double>& t) {
    tensors[std::string(name)] = {{"shape", {t.size()}}, {"data", t}};
  });
  j["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  auto field = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) {
      throw ConfigError("checkpoint " + path + ": missing field '" + key + "'");
    }
    return obj.at(key);
  };
  if (field(j, "format") != kFormat) {
    throw ConfigError("checkpoint " + path + ": unknown format");
  }
  if (field(j, "version") != kVersion) {
    throw ConfigError("checkpoint " + path + ": unsupported version " +
                      field(j, "version").dump());
  }
  Checkpoint ck;
  try {
    ck.seed = field(j, "seed").get<std::uint64_t>();
    const auto& opt = field(j, "options");
    ck.options.window_frames = field(opt, "window_frames").get<int>();
    ck.options.context_frames = field(opt, "context_frames").get<int>();
    ck.options.compression = field(opt, "compression").get<double>();
    ck.params = AttentionParams::zeros(field(j, "taps").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path + ": " + e.what());
  }

  const auto& tensors = field(j, "tensors");
  ck.params.for_each([&](std::string_view name, std::vector<double>& t) {
    const std::string key(name);
    if (!tensors.contains(key)) {
      throw ConfigError("checkpoint " + path + ": missing tensor '" + key + "'");
    }
    const auto& data = field(tensors.at(key), "data");
    if (!data.is_array() || data.size() != t.size()) {
      throw ConfigError("checkpoint " + path + ": tensor '" + key +
                        "' has the wrong shape");
    }
    for (size_t i = 0; i < t.size(); ++i) {
      // NaN and infinity serialize as null.
      if (!data[i].is_number()) {
        throw ConfigError("checkpoint " + path + ": tensor '" + key +
                          "' contains non-finite values");
      }
      t[i] = data[i].get<double>();
    }
  });
  try {
    ck.params.validate();
    ck.options.validate();
  } catch (const std::exception& e) {
    throw ConfigError("checkpoint " + path + ": " + e.what());
  }
  return ck;
}

}  // namespace astws
