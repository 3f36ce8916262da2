#include "tempov/backbone/serialize.hpp"

#include "tempov/core/error.hpp"

namespace tempov::data {

void to_json(nlohmann::json& j, const NormStats& s) { j = {{"mean", s.mean}, {"std", s.stddev}}; }

void from_json(const nlohmann::json& j, NormStats& s) {
  s.mean = j.at("mean").get<std::array<double, kNumBands>>();
  s.stddev = j.at("std").get<std::array<double, kNumBands>>();
}

}  // namespace tempov::data

namespace tempov::backbone {

namespace {

template <typename M, typename F>
void visit_const(const M& model, F&& f) {
  // visit() only hands out references; nothing is modified here.
  const_cast<M&>(model).visit(std::forward<F>(f));
}

template <typename M, typename F>
void visit_const(const M& model, const std::string& prefix, F&& f) {
  const_cast<M&>(model).visit(prefix, std::forward<F>(f));
}

}  // namespace

template <typename T>
void store_encoder(Checkpoint& ck, const Encoder<T>& enc) {
  ck.manifest["encoder_config"] = enc.config();
  ck.manifest["norm_stats"] = enc.norm_stats();
  const auto& blocks = enc.weights().blocks;
  if (!blocks.empty() && (blocks[0].lora_q || blocks[0].lora_v)) {
    const auto& l = blocks[0].lora_q ? *blocks[0].lora_q : *blocks[0].lora_v;
    std::vector<std::string> targets;
    if (blocks[0].lora_q) targets.push_back("q");
    if (blocks[0].lora_v) targets.push_back("v");
    ck.manifest["lora"] = {{"rank", l.rank()}, {"scale", static_cast<double>(l.scale)}, {"targets", targets}};
  } else {
    ck.manifest["lora"] = nullptr;
  }
  visit_const(enc, [&](const std::string& name, Param<T>& p) { ck.add("encoder." + name, p.value); });
}

template <typename T>
Encoder<T> restore_encoder(const Checkpoint& ck) {
  if (!ck.manifest.contains("encoder_config")) throw IoError("checkpoint has no encoder");
  const auto cfg = ck.manifest.at("encoder_config").get<EncoderConfig>();
  cfg.validate();
  Encoder<T> enc(cfg, 0);
  enc.set_norm_stats(ck.manifest.at("norm_stats").get<data::NormStats>());
  const auto& lora = ck.manifest.value("lora", nlohmann::json());
  if (!lora.is_null()) {
    const T scale = static_cast<T>(lora.at("scale").get<double>());
    auto& blocks = enc.weights().blocks;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      for (const char* t : {"q", "v"}) {
        const std::string base = "encoder.blocks." + std::to_string(i) + ".attn." + t;
        if (!ck.has(base + ".lora_a")) continue;
        const Blob& a = ck.blob(base + ".lora_a");
        const Blob& b = ck.blob(base + ".lora_b");
        LoraWeights<T> w{Param<T>(a.shape.at(0), a.shape.at(1)), Param<T>(b.shape.at(0), b.shape.at(1)), scale};
        (std::string(t) == "q" ? blocks[i].lora_q : blocks[i].lora_v) = std::move(w);
      }
    }
  }
  enc.visit([&](const std::string& name, Param<T>& p) { ck.read_into("encoder." + name, p.value); });
  return enc;
}

template <typename T>
void store_projection_head(Checkpoint& ck, const std::string& prefix, const ProjectionHead<T>& head) {
  ck.manifest[prefix] = head.cfg;
  visit_const(head, prefix, [&](const std::string& name, Param<T>& p) { ck.add(name, p.value); });
}

template <typename T>
ProjectionHead<T> restore_projection_head(const Checkpoint& ck, const std::string& prefix, int in_dim) {
  if (!ck.manifest.contains(prefix)) throw IoError("checkpoint has no head '" + prefix + "'");
  Rng rng(0);
  ProjectionHead<T> head(ck.manifest.at(prefix).get<ProjectionHeadConfig>(), in_dim, rng);
  head.visit(prefix, [&](const std::string& name, Param<T>& p) { ck.read_into(name, p.value); });
  return head;
}

template <typename T>
void store_regression_head(Checkpoint& ck, const RegressionHead<T>& head) {
  ck.manifest["regression"] = {{"variance_floor", head.variance_floor}};
  visit_const(head, "regression", [&](const std::string& name, Param<T>& p) { ck.add(name, p.value); });
}

template <typename T>
RegressionHead<T> restore_regression_head(const Checkpoint& ck, int in_dim) {
  if (!ck.manifest.contains("regression")) throw IoError("checkpoint has no regression head");
  RegressionHead<T> head(in_dim);
  head.variance_floor = ck.manifest.at("regression").at("variance_floor").get<double>();
  head.visit("regression", [&](const std::string& name, Param<T>& p) { ck.read_into(name, p.value); });
  return head;
}

#define TEMPOV_INSTANTIATE(T)                                                                     \
  template void store_encoder<T>(Checkpoint&, const Encoder<T>&);                                 \
  template Encoder<T> restore_encoder<T>(const Checkpoint&);                                      \
  template void store_projection_head<T>(Checkpoint&, const std::string&, const ProjectionHead<T>&); \
  template ProjectionHead<T> restore_projection_head<T>(const Checkpoint&, const std::string&, int); \
  template void store_regression_head<T>(Checkpoint&, const RegressionHead<T>&);                  \
  template RegressionHead<T> restore_regression_head<T>(const Checkpoint&, int);

TEMPOV_INSTANTIATE(float)
TEMPOV_INSTANTIATE(double)
#undef TEMPOV_INSTANTIATE

}  // namespace tempov::backbone
