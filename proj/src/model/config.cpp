#include "mdl/model/config.hpp"

#include "mdl/error.hpp"

namespace mdl::model {

std::string to_string(Variant v) { return v == Variant::kTransformer ? "transformer" : "mamba"; }

Variant parse_variant(const std::string& s) {
  if (s == "transformer") return Variant::kTransformer;
  if (s == "mamba") return Variant::kMamba;
  throw InputError("unknown model variant \"" + s + "\" (expected transformer or mamba)");
}

ModelConfig ModelConfig::transformer_default(std::size_t position_vocab) {
  ModelConfig c;
  c.variant = Variant::kTransformer;
  c.position_vocab = position_vocab;
  return c;
}

ModelConfig ModelConfig::mamba_default() {
  ModelConfig c;
  c.variant = Variant::kMamba;
  c.window = 120;
  return c;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvariantError(std::string("model config: ") + what);
  };
  require(layers > 0, "layers must be positive");
  require(embed_dim > 0, "embed_dim must be positive");
  require(ff_dim > 0, "ff_dim must be positive");
  require(window > 0, "window must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(feature_dim > 0 && pose_dim > 0, "feature/pose dims must be positive");
  if (variant == Variant::kTransformer) {
    require(heads > 0 && embed_dim % heads == 0, "embed_dim must be divisible by heads");
    require(position_vocab > 0, "position_vocab must be positive");
  } else {
    require(state_size > 0 && expand > 0 && conv_width > 0, "mamba sizes must be positive");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", to_string(variant)}, {"layers", layers},         {"embed_dim", embed_dim},
          {"heads", heads},                {"ff_dim", ff_dim},         {"dropout", dropout},
          {"window", window},              {"vocab_size", position_vocab}, {"state_size", state_size},
          {"expand", expand},              {"conv_width", conv_width}, {"feature_dim", feature_dim},
          {"pose_dim", pose_dim}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (parse_variant(j.at("variant").get<std::string>()) == Variant::kMamba) c = mamba_default();
    c.layers = j.value("layers", c.layers);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.heads = j.value("heads", c.heads);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.dropout = j.value("dropout", c.dropout);
    c.window = j.value("window", c.window);
    c.position_vocab = j.value("vocab_size", c.position_vocab);
    c.state_size = j.value("state_size", c.state_size);
    c.expand = j.value("expand", c.expand);
    c.conv_width = j.value("conv_width", c.conv_width);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.pose_dim = j.value("pose_dim", c.pose_dim);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
  return c;
}

}  // namespace mdl::model
