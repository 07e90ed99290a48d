#include "mdl/model/checkpoint.hpp"

#include "mdl/binary_io.hpp"

namespace mdl::model {

std::vector<std::uint8_t> encode_checkpoint(const SequenceModel<float>& model, const audio::Normalizer& normalizer,
                                            const nlohmann::json& meta) {
  io::ByteWriter w;
  w.put_magic("MDLC");
  w.put(kCheckpointVersion);
  const nlohmann::json header = {{"model", model.config().to_json()}, {"meta", meta}};
  w.put_string(header.dump());
  const auto& params = model.parameters().named();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put_span<float>(t.data());
  }
  w.put_bytes(audio::encode_normalizer(normalizer));
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MDLC");
  const auto version_at = r.offset();
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(v), version_at);
  }
  const auto header_at = r.offset();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("checkpoint header: ") + e.what(), header_at);
  }
  Checkpoint ck;
  ModelConfig config;
  try {
    config = ModelConfig::from_json(header.at("model"));
    if (header.contains("meta")) ck.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("checkpoint header: ") + e.what(), header_at);
  }

  ParameterSet<float> stored;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.get_string();
    const auto rank_at = r.offset();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw DecodeError("bad parameter rank for " + name, rank_at);
    ad::Shape shape(rank);
    for (auto& d : shape) {
      const auto at = r.offset();
      d = r.get<std::uint32_t>();
      if (d == 0) throw DecodeError("zero extent in parameter " + name, at);
    }
    auto t = stored.add(name, shape);
    r.get_span<float>(t.data());
  }

  try {
    ck.model = make_model<float>(config, 0);
    ck.model->load_values(stored);
  } catch (const std::logic_error& e) {
    throw DecodeError(std::string("checkpoint parameters: ") + e.what(), r.offset());
  }
  ck.normalizer = audio::decode_normalizer(r.get_bytes(r.remaining()));
  if (ck.normalizer.dim() != config.feature_dim) {
    throw DecodeError("normalizer dimension does not match model feature dimension", r.offset());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const SequenceModel<float>& model,
                     const audio::Normalizer& normalizer, const nlohmann::json& meta) {
  io::write_file(path, encode_checkpoint(model, normalizer, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return io::decode_file(path, [](auto bytes) { return decode_checkpoint(bytes); }); }

}  // namespace mdl::model
