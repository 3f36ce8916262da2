#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace tempov::backbone {

struct EncoderConfig {
  int in_channels = 6;
  int patch_size = 8;
  int embed_dim = 64;
  int depth = 4;
  int num_heads = 4;
  int mlp_dim = 256;
  int num_storage_tokens = 4;
  double layerscale_init = 1e-5;
  double drop_path_rate = 0.1;
  double rope_base = 100.0;
  std::string preset = "toy";

  // Throws ConfigError when any invariant is violated.
  void validate() const;
  void validate_input(int height, int width) const;

  int head_dim() const noexcept { return embed_dim / num_heads; }
  int patch_dim() const noexcept { return in_channels * patch_size * patch_size; }
  int num_prefix_tokens() const noexcept { return 1 + num_storage_tokens; }

  // 64-wide, 4 blocks, 8-pixel patches: trainable on one CPU core.
  static EncoderConfig toy();
  // ViT-L/16 layout used for the published model; constructible, never trained here.
  static EncoderConfig paper();
  // Tiny float64 model for finite-difference checks (8×8 tiles).
  static EncoderConfig gradcheck();
  static EncoderConfig from_preset(const std::string& name);
};

enum class HeadKind { dino, ibot };

struct ProjectionHeadConfig {
  HeadKind kind = HeadKind::dino;
  int hidden_dim = 256;
  int bottleneck_dim = 32;
  int num_prototypes = 256;
  double student_temperature = 0.1;
  double teacher_temperature = 0.04;
  double center_momentum = 0.9;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const ProjectionHeadConfig& c);
void from_json(const nlohmann::json& j, ProjectionHeadConfig& c);

}  // namespace tempov::backbone
