#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "mdl/audio/normalizer.hpp"
#include "mdl/model/sequence_model.hpp"

namespace mdl::model {

// A trained model bundled with the normalizer it was trained against.
struct Checkpoint {
  std::unique_ptr<SequenceModel<float>> model;
  audio::Normalizer normalizer;
  nlohmann::json meta = nlohmann::json::object();  // step, validation metrics, ...
};

// MDLC: magic, u32 version, string header JSON {"model": config, "meta": ...},
// u32 parameter count, per parameter (string name, u32 rank, rank x u32 dims,
// f32 data), then the embedded MDLN normalizer bytes to the end of the file.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const SequenceModel<float>& model, const audio::Normalizer& normalizer,
                                            const nlohmann::json& meta = nlohmann::json::object());
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const SequenceModel<float>& model,
                     const audio::Normalizer& normalizer, const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mdl::model
