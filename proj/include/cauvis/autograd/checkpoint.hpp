#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cauvis/autograd/tape.hpp"
#include "cauvis/numerics/cmat_io.hpp"

// On disk a checkpoint is <dir>/manifest.json next to <dir>/params/, which
// holds one CMAT1 file per parameter named "<id>.cmat".
namespace cauvis::ad {

inline constexpr const char* kCheckpointFormat = "cauvis-checkpoint-1";

struct Checkpoint {
  ParameterStore params;
  nlohmann::json config;
  std::size_t step = 0;
};

inline void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& params,
                            const nlohmann::json& config, std::size_t step) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "params", ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["step"] = step;
  manifest["config"] = config;
  auto& plist = manifest["parameters"] = nlohmann::json::array();
  for (const auto& [id, p] : params) {
    const std::string file = "params/" + id + ".cmat";
    cmat::save(dir / file, p.value);
    plist.push_back({{"id", id},
                     {"rows", p.value.rows()},
                     {"cols", p.value.cols()},
                     {"trainable", p.trainable},
                     {"file", file}});
  }
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("no checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw IoError("unsupported checkpoint format in " + dir.string());
  }
  Checkpoint ck;
  ck.step = manifest.at("step").get<std::size_t>();
  ck.config = manifest.at("config");
  for (const auto& entry : manifest.at("parameters")) {
    Matrix value = cmat::load(dir / entry.at("file").get<std::string>());
    if (value.rows() != entry.at("rows").get<std::size_t>() ||
        value.cols() != entry.at("cols").get<std::size_t>()) {
      throw IoError("checkpoint parameter " + entry.at("id").get<std::string>() +
                    " does not match its manifest shape");
    }
    ck.params.add(entry.at("id").get<std::string>(), std::move(value),
                  entry.at("trainable").get<bool>());
  }
  return ck;
}

}  // namespace cauvis::ad
