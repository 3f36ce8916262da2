#include "tempov/backbone/config.hpp"

#include "tempov/core/error.hpp"

namespace tempov::backbone {

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("encoder config: " + m); };
  if (in_channels != 6) fail("in_channels must be 6");
  if (patch_size <= 0) fail("patch_size must be positive");
  if (embed_dim <= 0 || depth <= 0 || num_heads <= 0 || mlp_dim <= 0) fail("sizes must be positive");
  if (embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
  if (num_heads % 2 != 0) fail("num_heads must be even");
  // Each head is split into row and column halves, each rotated in pairs.
  if (head_dim() % 4 != 0) fail("head dimension must be divisible by 4 for 2D rotary encoding");
  if (num_storage_tokens < 0) fail("num_storage_tokens must be non-negative");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) fail("drop_path_rate must lie in [0,1)");
  if (!(rope_base > 0.0)) fail("rope_base must be positive");
}

void EncoderConfig::validate_input(int height, int width) const {
  if (height <= 0 || width <= 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by patch size " + std::to_string(patch_size));
  }
}

EncoderConfig EncoderConfig::toy() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::paper() {
  EncoderConfig c;
  c.patch_size = 16;
  c.embed_dim = 1024;
  c.depth = 24;
  c.num_heads = 16;
  c.mlp_dim = 4096;
  c.num_storage_tokens = 4;
  c.layerscale_init = 1e-5;
  c.drop_path_rate = 0.3;
  c.rope_base = 100.0;
  c.preset = "paper";
  return c;
}

EncoderConfig EncoderConfig::gradcheck() {
  EncoderConfig c;
  c.patch_size = 2;
  c.embed_dim = 16;
  c.depth = 2;
  c.num_heads = 2;
  c.mlp_dim = 32;
  c.num_storage_tokens = 2;
  // Large enough that every branch contributes a measurable gradient.
  c.layerscale_init = 0.5;
  c.drop_path_rate = 0.0;
  c.preset = "gradcheck";
  return c;
}

EncoderConfig EncoderConfig::from_preset(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "paper") return paper();
  if (name == "gradcheck") return gradcheck();
  throw ConfigError("unknown encoder preset '" + name + "'");
}

void ProjectionHeadConfig::validate() const {
  if (!(student_temperature > 0 && teacher_temperature > 0)) {
    throw ConfigError("head temperatures must be positive");
  }
  if (num_prototypes < 2) throw ConfigError("num_prototypes must be at least 2");
  if (!(center_momentum >= 0 && center_momentum < 1)) throw ConfigError("center_momentum must lie in [0,1)");
  if (hidden_dim <= 0 || bottleneck_dim <= 0) throw ConfigError("head sizes must be positive");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"in_channels", c.in_channels},
                     {"patch_size", c.patch_size},
                     {"embed_dim", c.embed_dim},
                     {"depth", c.depth},
                     {"num_heads", c.num_heads},
                     {"mlp_dim", c.mlp_dim},
                     {"num_storage_tokens", c.num_storage_tokens},
                     {"layerscale_init", c.layerscale_init},
                     {"drop_path_rate", c.drop_path_rate},
                     {"rope_base", c.rope_base},
                     {"preset", c.preset}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig base = j.contains("preset") ? EncoderConfig::from_preset(j.at("preset").get<std::string>())
                                            : EncoderConfig{};
  c = base;
  c.in_channels = j.value("in_channels", base.in_channels);
  c.patch_size = j.value("patch_size", base.patch_size);
  c.embed_dim = j.value("embed_dim", base.embed_dim);
  c.depth = j.value("depth", base.depth);
  c.num_heads = j.value("num_heads", base.num_heads);
  c.mlp_dim = j.value("mlp_dim", base.mlp_dim);
  c.num_storage_tokens = j.value("num_storage_tokens", base.num_storage_tokens);
  c.layerscale_init = j.value("layerscale_init", base.layerscale_init);
  c.drop_path_rate = j.value("drop_path_rate", base.drop_path_rate);
  c.rope_base = j.value("rope_base", base.rope_base);
}

void to_json(nlohmann::json& j, const ProjectionHeadConfig& c) {
  j = nlohmann::json{{"kind", c.kind == HeadKind::dino ? "dino" : "ibot"},
                     {"hidden_dim", c.hidden_dim},
                     {"bottleneck_dim", c.bottleneck_dim},
                     {"num_prototypes", c.num_prototypes},
                     {"student_temperature", c.student_temperature},
                     {"teacher_temperature", c.teacher_temperature},
                     {"center_momentum", c.center_momentum}};
}

void from_json(const nlohmann::json& j, ProjectionHeadConfig& c) {
  ProjectionHeadConfig d;
  c.kind = j.value("kind", std::string("dino")) == "ibot" ? HeadKind::ibot : HeadKind::dino;
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.bottleneck_dim = j.value("bottleneck_dim", d.bottleneck_dim);
  c.num_prototypes = j.value("num_prototypes", d.num_prototypes);
  c.student_temperature = j.value("student_temperature", d.student_temperature);
  c.teacher_temperature = j.value("teacher_temperature", d.teacher_temperature);
  c.center_momentum = j.value("center_momentum", d.center_momentum);
}

}  // namespace tempov::backbone
