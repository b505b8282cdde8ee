#pragma once

#include <map>
#include <string>

#include "panofc/io.hpp"
#include "panofc/random.hpp"
#include "panofc/tensor.hpp"

namespace panofc {

// Named collection of trainable tensors plus per-tensor Adam state.
// Iteration order is the lexicographic name order of std::map, which
// keeps every whole-store operation deterministic.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Shape shape) {
    if (params_.count(name))
      throw ConfigError(str("parameter '", name, "' already exists"));
    auto [it, ok] = params_.emplace(name, Tensor(std::move(shape), 0.0, true));
    (void)ok;
    return it->second;
  }

  // U[-bound, bound] initialization.
  Tensor& create_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
    Tensor& t = create(name, std::move(shape));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError(str("unknown parameter '", name, "'"));
    return it->second;
  }

  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError(str("unknown parameter '", name, "'"));
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Tensor>& tensors() { return params_; }
  const std::map<std::string, Tensor>& tensors() const { return params_; }

  size_t count() const { return params_.size(); }

  long long total_elements() const {
    long long n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  struct AdamSlot {
    long long step = 0;
    std::vector<double> m, v;
  };

  AdamSlot& adam_slot(const std::string& name) {
    AdamSlot& s = adam_[name];
    const Tensor& t = at(name);
    if (s.m.size() != t.values().size()) {
      s.m.assign(t.values().size(), 0.0);
      s.v.assign(t.values().size(), 0.0);
      s.step = 0;
    }
    return s;
  }

  void reset_adam() { adam_.clear(); }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, AdamSlot> adam_;
};

inline double global_grad_norm(const ParamStore& store) {
  double acc = 0.0;
  for (const auto& [name, t] : store.tensors())
    for (double g : t.grad()) acc += g * g;
  return std::sqrt(acc);
}

// Scales all gradients by max_norm / norm when the global norm exceeds
// max_norm; otherwise leaves them untouched.
inline void clip_gradients(ParamStore& store, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError(str("clip_gradients: max_norm must be > 0"));
  double norm = global_grad_norm(store);
  if (norm <= max_norm) return;
  double s = max_norm / norm;
  for (auto& [name, t] : store.tensors())
    for (double& g : t.grad()) g *= s;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // <= 0 disables clipping
};

// One bias-corrected Adam step over every parameter in the store.
// Gradients must be finite; they are consumed (zeroed) by the step.
// Parameters with requires_grad off are frozen and skipped entirely.
inline void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (auto& [name, t] : store.tensors())
    for (double g : t.grad())
      if (!std::isfinite(g))
        throw TrainError(str("non-finite gradient in parameter '", name, "'"));
  if (cfg.clip_norm > 0.0) clip_gradients(store, cfg.clip_norm);
  for (auto& [name, t] : store.tensors()) {
    if (!t.requires_grad()) continue;
    auto& slot = store.adam_slot(name);
    ++slot.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.step));
    auto& vals = t.values();
    auto& grads = t.grad();
    for (size_t i = 0; i < vals.size(); ++i) {
      double g = grads[i];
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = slot.m[i] / bc1;
      double vhat = slot.v[i] / bc2;
      vals[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.zero_grad();
}

// ---------------------------------------------------------------------------
// Weights file: magic "PFW1", tensor count, then per tensor the name
// (u64 length + UTF-8 bytes), rank (u64), dims (u64 each) and row-major
// f64 data, everything little-endian.  Optimizer state is not stored.
// ---------------------------------------------------------------------------

inline void save_tensors(const std::map<std::string, Tensor>& tensors,
                         const std::string& path) {
  BinaryWriter w;
  w.magic("PFW1");
  w.u64(tensors.size());
  for (const auto& [name, t] : tensors) {
    w.u64(name.size());
    w.bytes(name.data(), name.size());
    w.u64(static_cast<uint64_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) w.u64(static_cast<uint64_t>(t.dim(i)));
    for (double v : t.values()) w.f64(v);
  }
  w.write_file(path);
}

inline std::map<std::string, Tensor> load_tensors(const std::string& path) {
  BinaryReader r = BinaryReader::from_file(path);
  r.magic("PFW1", "weights");
  uint64_t count = r.u64();
  std::map<std::string, Tensor> out;
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t name_len = r.u64();
    std::string name;
    name.reserve(name_len);
    for (uint64_t j = 0; j < name_len; ++j) name.push_back(static_cast<char>(r.u8()));
    uint64_t rank = r.u64();
    if (rank < 1 || rank > 4)
      throw FormatError(str("weights tensor '", name, "': bad rank ", rank,
                            " at byte ", r.offset()));
    Shape shape;
    for (uint64_t j = 0; j < rank; ++j) {
      uint64_t d = r.u64();
      if (d == 0 || d > (1ULL << 31))
        throw FormatError(str("weights tensor '", name, "': bad extent ", d,
                              " at byte ", r.offset()));
      shape.push_back(static_cast<int>(d));
    }
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (double& v : data) v = r.f64();
    if (out.count(name))
      throw FormatError(str("duplicate tensor '", name, "' in weights file"));
    out.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  r.expect_end("weights file");
  return out;
}

// Copies loaded tensors into an already-shaped store, insisting on an
// exact name/shape match for every parameter.
inline void load_params_into(ParamStore& store, const std::map<std::string, Tensor>& loaded,
                             const std::string& what) {
  for (auto& [name, t] : store.tensors()) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw FormatError(str(what, ": missing tensor '", name, "'"));
    if (it->second.shape() != t.shape())
      throw FormatError(str(what, ": tensor '", name, "' has shape ",
                            shape_str(it->second.shape()), ", expected ",
                            shape_str(t.shape())));
    t.values() = it->second.values();
  }
}

inline void save_weights(const ParamStore& store, const std::string& path,
                         const std::map<std::string, Tensor>& meta = {}) {
  std::map<std::string, Tensor> all = store.tensors();
  for (const auto& [name, t] : meta) {
    if (all.count(name))
      throw ConfigError(str("metadata tensor '", name, "' collides with a parameter"));
    all.emplace(name, t);
  }
  save_tensors(all, path);
}

}  // namespace panofc
