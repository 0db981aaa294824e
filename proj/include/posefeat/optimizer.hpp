#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "posefeat/embedder.hpp"
#include "posefeat/errors.hpp"

namespace posefeat {

enum class OptimizerRule { kSgd, kAdam, kAdamW };

inline const char* to_string(OptimizerRule r) {
  switch (r) {
    case OptimizerRule::kSgd: return "sgd";
    case OptimizerRule::kAdam: return "adam";
    case OptimizerRule::kAdamW: return "adamw";
  }
  return "?";
}

inline OptimizerRule optimizer_rule_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerRule::kSgd;
  if (s == "adam") return OptimizerRule::kAdam;
  if (s == "adamw") return OptimizerRule::kAdamW;
  throw InvalidArgument("unknown optimizer '" + s + "' (expected sgd, adam or adamw)");
}

struct OptimizerConfig {
  OptimizerRule rule = OptimizerRule::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;  // AdamW only

  void validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw InvalidArgument("optimizer betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw InvalidArgument("optimizer epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  }
};

/// Moment buffers for a fixed list of parameter blocks.
class OptimState {
 public:
  OptimState() = default;
  explicit OptimState(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t step_count() const noexcept { return steps_; }

  /// One update of every block; params[k] pairs with grads[k].
  void step(const std::vector<ParamBlock>& params, const std::vector<ParamBlock>& grads, double lr) {
    if (params.size() != grads.size()) throw InvalidArgument("optimizer: parameter/gradient block counts differ");
    if (!(lr >= 0.0)) throw InvalidArgument("optimizer: learning rate must be >= 0");
    if (m_.empty() && cfg_.rule != OptimizerRule::kSgd) {
      for (const auto& p : params) {
        m_.emplace_back(p.values.size(), 0.0);
        v_.emplace_back(p.values.size(), 0.0);
      }
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].values.size() != grads[k].values.size())
        throw InvalidArgument("optimizer: shape mismatch in block " + params[k].name);
      if (!m_.empty() && m_[k].size() != params[k].values.size())
        throw InvalidArgument("optimizer: moment buffer shape mismatch in block " + params[k].name);
      for (double g : grads[k].values)
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter block " + params[k].name);
    }
    ++steps_;
    if (cfg_.rule == OptimizerRule::kSgd) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].values;
        auto g = grads[k].values;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      }
      return;
    }
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    const bool decoupled = cfg_.rule == OptimizerRule::kAdamW && cfg_.weight_decay != 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k].values;
      auto g = grads[k].values;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (decoupled) p[i] -= lr * cfg_.weight_decay * p[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

enum class ScheduleKind { kExponential, kCosine };

struct Schedule {
  ScheduleKind kind = ScheduleKind::kCosine;
  double lr_start = 1e-3;  // lr0 for exponential
  double lr_end = 1e-4;    // cosine only
  double gamma = 0.99;     // exponential only

  static Schedule exponential(double lr0, double gamma) { return {ScheduleKind::kExponential, lr0, lr0, gamma}; }
  static Schedule cosine(double lr_start, double lr_end) { return {ScheduleKind::kCosine, lr_start, lr_end, 1.0}; }

  void validate() const {
    if (!(lr_start > 0.0)) throw InvalidArgument("schedule: lr_start must be > 0");
    if (kind == ScheduleKind::kCosine && !(lr_end > 0.0)) throw InvalidArgument("schedule: lr_end must be > 0");
    if (kind == ScheduleKind::kExponential && !(gamma > 0.0 && gamma <= 1.0))
      throw InvalidArgument("schedule: gamma must lie in (0, 1]");
  }
};

inline double lr_at(const Schedule& s, int epoch, int total_epochs) {
  if (epoch < 0 || total_epochs < 0 || epoch > total_epochs)
    throw InvalidArgument("lr_at: need 0 <= epoch <= total_epochs");
  if (s.kind == ScheduleKind::kExponential) return s.lr_start * std::pow(s.gamma, epoch);
  if (total_epochs == 0) return s.lr_start;
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return s.lr_end + 0.5 * (s.lr_start - s.lr_end) * (1.0 + std::cos(phase));
}

}  // namespace posefeat
