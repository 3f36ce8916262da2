#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "tempov/backbone/encoder.hpp"
#include "tempov/backbone/heads.hpp"
#include "tempov/core/checkpoint.hpp"

namespace tempov::data {
void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);
}  // namespace tempov::data

namespace tempov::backbone {

// Manifest keys written: "encoder_config", "norm_stats", "lora" (null or
// {rank, scale, targets}). Blobs are named "encoder.<param path>".
template <typename T>
void store_encoder(Checkpoint& ck, const Encoder<T>& enc);
template <typename T>
Encoder<T> restore_encoder(const Checkpoint& ck);

// Blobs "<prefix>.fc1.weight" ... "<prefix>.prototypes"; config under manifest[prefix].
template <typename T>
void store_projection_head(Checkpoint& ck, const std::string& prefix, const ProjectionHead<T>& head);
template <typename T>
ProjectionHead<T> restore_projection_head(const Checkpoint& ck, const std::string& prefix, int in_dim);

// Blobs "regression.mean.weight", ...; floor under manifest["regression"].
template <typename T>
void store_regression_head(Checkpoint& ck, const RegressionHead<T>& head);
template <typename T>
RegressionHead<T> restore_regression_head(const Checkpoint& ck, int in_dim);

}  // namespace tempov::backbone
