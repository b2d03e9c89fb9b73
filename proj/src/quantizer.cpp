/* Copyright 2026 The sqakd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "sqakd/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sqakd/ops.hpp"

namespace sqakd {

const char* ToString(QuantizerKind kind) {
  switch (kind) {
    case QuantizerKind::kPact: return "pact";
    case QuantizerKind::kEwgs: return "ewgs";
    case QuantizerKind::kDorefa: return "dorefa";
    case QuantizerKind::kLsq: return "lsq";
  }
  return "?";
}

const char* ToString(QuantTarget target) {
  return target == QuantTarget::kWeights ? "weights" : "activations";
}

const char* ToString(BackwardKind kind) {
  switch (kind) {
    case BackwardKind::kSte: return "ste";
    case BackwardKind::kEwgs: return "ewgs";
    case BackwardKind::kCustom: return "custom";
  }
  return "?";
}

QuantizerKind ParseQuantizerKind(const std::string& name) {
  if (name == "pact") return QuantizerKind::kPact;
  if (name == "ewgs") return QuantizerKind::kEwgs;
  if (name == "dorefa") return QuantizerKind::kDorefa;
  if (name == "lsq") return QuantizerKind::kLsq;
  throw ConfigError("unknown quantizer '" + name + "'");
}

QuantTarget ParseQuantTarget(const std::string& name) {
  if (name == "weights") return QuantTarget::kWeights;
  if (name == "activations") return QuantTarget::kActivations;
  throw ConfigError("unknown quantizer target '" + name + "'");
}

BackwardKind ParseBackwardKind(const std::string& name) {
  if (name == "ste") return BackwardKind::kSte;
  if (name == "ewgs") return BackwardKind::kEwgs;
  throw ConfigError("unknown backward rule '" + name + "'");
}

void BackwardRule::Validate() const {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw ConfigError("backward delta must be a finite non-negative value");
  }
  if (kind == BackwardKind::kCustom && !custom_mu) {
    throw ConfigError("custom backward rule without a mu function");
  }
}

template <typename T>
std::vector<T> EstimatorBackward(std::span<const T> upstream,
                                 std::span<const T> clipped,
                                 std::span<const T> levels,
                                 const BackwardRule& rule) {
  std::vector<T> out(upstream.begin(), upstream.end());
  if (rule.kind == BackwardKind::kSte) return out;
  const T delta = static_cast<T>(rule.delta);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T g = upstream[i];
    T mu;
    if (rule.kind == BackwardKind::kEwgs) {
      const T sign = g > T(0) ? T(1) : (g < T(0) ? T(-1) : T(0));
      mu = delta * sign * g;
    } else {
      mu = static_cast<T>(rule.custom_mu(static_cast<double>(g)));
    }
    out[i] = g + mu * (clipped[i] - levels[i]);
  }
  return out;
}

std::size_t RequiredParamCount(QuantizerKind kind) {
  switch (kind) {
    case QuantizerKind::kPact: return 1;
    case QuantizerKind::kEwgs: return 2;
    case QuantizerKind::kDorefa: return 0;
    case QuantizerKind::kLsq: return 1;
  }
  return 0;
}

std::pair<int, int> LsqBounds(QuantTarget target, int bits) {
  if (target == QuantTarget::kActivations) return {0, (1 << bits) - 1};
  return {-(1 << (bits - 1)), (1 << (bits - 1)) - 1};
}

template <typename T>
bool QuantizerSpec<T>::initialized() const {
  if (params.size() != RequiredParamCount(kind)) return false;
  return std::all_of(params.begin(), params.end(),
                     [](const Tensor<T>& p) { return p.defined(); });
}

template <typename T>
void QuantizerSpec<T>::Validate() const {
  if (bits < 1 || bits > 8) {
    throw ConfigError("bit width must be in [1, 8], got " +
                      std::to_string(bits));
  }
  backward.Validate();
  if (!initialized()) {
    throw ConfigError(std::string(ToString(kind)) + " quantizer expects " +
                      std::to_string(RequiredParamCount(kind)) +
                      " initialized parameters");
  }
  for (const auto& p : params) {
    if (p.size() != 1 || !std::isfinite(p[0])) {
      throw NumericError("quantizer parameter is not a finite scalar");
    }
  }
  switch (kind) {
    case QuantizerKind::kPact:
      if (!(params[0][0] > T(0))) {
        throw NumericError("PACT clip value must be positive");
      }
      break;
    case QuantizerKind::kEwgs:
      if (params[0][0] == params[1][0]) {
        throw NumericError("EWGS interval is degenerate (p1 == p2)");
      }
      break;
    case QuantizerKind::kLsq:
      if (!(params[0][0] > T(0))) {
        throw NumericError("LSQ step size must be positive");
      }
      break;
    case QuantizerKind::kDorefa:
      break;
  }
}

template <typename T>
std::pair<T, T> QuantizerSpec<T>::OutputRange() const {
  const bool weights = target == QuantTarget::kWeights;
  switch (kind) {
    case QuantizerKind::kPact: {
      const T m = params.at(0)[0];
      return {weights ? -m : T(0), m};
    }
    case QuantizerKind::kEwgs:
    case QuantizerKind::kDorefa:
      return {weights ? T(-1) : T(0), T(1)};
    case QuantizerKind::kLsq: {
      const auto [qn, qp] = LsqBounds(target, bits);
      const T s = params.at(0)[0];
      return {static_cast<T>(qn) * s, static_cast<T>(qp) * s};
    }
  }
  return {T(0), T(0)};
}

template <typename T>
QuantizerSpec<T> MakeQuantizer(QuantizerKind kind, QuantTarget target,
                               int bits, BackwardRule rule) {
  QuantizerSpec<T> spec;
  spec.kind = kind;
  spec.target = target;
  spec.bits = bits;
  spec.backward = std::move(rule);
  if (bits < 1 || bits > 8) {
    throw ConfigError("bit width must be in [1, 8], got " +
                      std::to_string(bits));
  }
  spec.backward.Validate();
  return spec;
}

template <typename T>
void SetQuantizerParams(QuantizerSpec<T>& spec, std::vector<T> values) {
  if (values.size() != RequiredParamCount(spec.kind)) {
    throw ConfigError(std::string(ToString(spec.kind)) + " quantizer takes " +
                      std::to_string(RequiredParamCount(spec.kind)) +
                      " parameters, got " + std::to_string(values.size()));
  }
  spec.params.clear();
  for (const T v : values) spec.params.push_back(Tensor<T>::Scalar(v, true));
}

template <typename T>
void InitializeQuantizer(QuantizerSpec<T>& spec, std::span<const T> sample,
                         const QuantizerInit& init) {
  if (sample.empty()) throw DataError(DataFault::kEmpty, "empty calibration sample");
  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  T lo = *lo_it, hi = *hi_it;
  T mean_abs = 0;
  for (const T v : sample) mean_abs += std::abs(v);
  mean_abs /= static_cast<T>(sample.size());
  switch (spec.kind) {
    case QuantizerKind::kPact: {
      T m = static_cast<T>(init.pact_activation_clip);
      if (spec.target == QuantTarget::kWeights) m = std::max(std::abs(lo), std::abs(hi));
      SetQuantizerParams<T>(spec, {std::max(m, T(1e-3))});
      break;
    }
    case QuantizerKind::kEwgs:
      if (hi - lo < T(1e-3)) hi = lo + T(1e-3);
      SetQuantizerParams<T>(spec, {lo, hi});
      break;
    case QuantizerKind::kLsq: {
      const int qp = std::max(1, LsqBounds(spec.target, spec.bits).second);
      const T s = T(2) * mean_abs / std::sqrt(static_cast<T>(qp));
      SetQuantizerParams<T>(spec, {std::max(s, T(1e-6))});
      break;
    }
    case QuantizerKind::kDorefa:
      SetQuantizerParams<T>(spec, {});
      break;
  }
}

namespace {

template <typename T>
T RoundHalfAway(T v) {
  return std::round(v);
}

template <typename T>
std::vector<T> ClipValues(std::span<const T> x, const QuantizerSpec<T>& spec) {
  std::vector<T> xc(x.size());
  const bool weights = spec.target == QuantTarget::kWeights;
  switch (spec.kind) {
    case QuantizerKind::kPact: {
      const T m = spec.params[0][0];
      for (std::size_t i = 0; i < x.size(); ++i) {
        xc[i] = weights
                    ? T(0.5) * (std::abs(x[i] + m) - std::abs(x[i] - m))
                    : T(0.5) * (std::abs(x[i]) - std::abs(x[i] - m) + m);
      }
      break;
    }
    case QuantizerKind::kEwgs: {
      const T p1 = spec.params[0][0], p2 = spec.params[1][0];
      const T width = p2 - p1;
      for (std::size_t i = 0; i < x.size(); ++i) {
        xc[i] = std::clamp((x[i] - p1) / width, T(0), T(1));
      }
      break;
    }
    case QuantizerKind::kDorefa: {
      if (!weights) {
        for (std::size_t i = 0; i < x.size(); ++i) xc[i] = std::clamp(x[i], T(0), T(1));
        break;
      }
      T max_tanh = 0;
      for (const T v : x) max_tanh = std::max(max_tanh, std::abs(std::tanh(v)));
      if (max_tanh == T(0)) {
        throw NumericError("DoReFa weight quantizer on an all-zero tensor");
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        xc[i] = std::tanh(x[i]) / (T(2) * max_tanh) + T(0.5);
      }
      break;
    }
    case QuantizerKind::kLsq: {
      const T s = spec.params[0][0];
      const auto [qn, qp] = LsqBounds(spec.target, spec.bits);
      for (std::size_t i = 0; i < x.size(); ++i) {
        xc[i] = std::clamp(x[i] / s, static_cast<T>(qn), static_cast<T>(qp));
      }
      break;
    }
  }
  return xc;
}

// Nearest grid point in the clip domain.
template <typename T>
std::vector<T> LevelValues(std::span<const T> xc, const QuantizerSpec<T>& spec) {
  if (spec.bits < 1) throw ConfigError("bit width must be at least 1");
  const T n = static_cast<T>(spec.max_level());
  std::vector<T> r(xc.size());
  switch (spec.kind) {
    case QuantizerKind::kPact: {
      const T m = spec.params[0][0];
      if (spec.target == QuantTarget::kWeights) {
        for (std::size_t i = 0; i < xc.size(); ++i) {
          const T k = RoundHalfAway(n * (xc[i] + m) / (T(2) * m));
          r[i] = -m + (k / n) * (T(2) * m);
        }
      } else {
        for (std::size_t i = 0; i < xc.size(); ++i) {
          const T k = RoundHalfAway(n * xc[i] / m);
          r[i] = (k / n) * m;
        }
      }
      break;
    }
    case QuantizerKind::kEwgs:
    case QuantizerKind::kDorefa:
      for (std::size_t i = 0; i < xc.size(); ++i) r[i] = RoundHalfAway(n * xc[i]) / n;
      break;
    case QuantizerKind::kLsq:
      for (std::size_t i = 0; i < xc.size(); ++i) r[i] = RoundHalfAway(xc[i]);
      break;
  }
  return r;
}

// Output map applied to clip-domain levels; returns the values and the slope.
template <typename T>
std::pair<std::vector<T>, T> OutputValues(std::span<const T> r,
                                          const QuantizerSpec<T>& spec) {
  std::vector<T> out(r.begin(), r.end());
  const bool weights = spec.target == QuantTarget::kWeights;
  switch (spec.kind) {
    case QuantizerKind::kEwgs:
      if (!weights) return {out, T(1)};
      for (auto& v : out) v = T(2) * (v - T(0.5));
      return {out, T(2)};
    case QuantizerKind::kDorefa:
      if (!weights) return {out, T(1)};
      for (auto& v : out) v = T(2) * v - T(1);
      return {out, T(2)};
    case QuantizerKind::kLsq: {
      const T s = spec.params[0][0];
      for (auto& v : out) v *= s;
      return {out, s};
    }
    case QuantizerKind::kPact:
      return {out, T(1)};
  }
  return {out, T(1)};
}

template <typename T>
void CheckKind(const QuantizerSpec<T>& spec, QuantizerKind kind) {
  if (spec.kind != kind) {
    throw ConfigError(std::string("expected a ") + ToString(kind) +
                      " quantizer, got " + ToString(spec.kind));
  }
}

}  // namespace

template <typename T>
Tensor<T> Clip(const Tensor<T>& x, const QuantizerSpec<T>& spec) {
  spec.Validate();
  return Tensor<T>(x.shape(), ClipValues<T>(x.data(), spec));
}

template <typename T>
Tensor<T> RoundQ(const Tensor<T>& clipped, const QuantizerSpec<T>& spec) {
  if (spec.bits < 1) throw ConfigError("bit width must be at least 1");
  spec.Validate();
  auto r = LevelValues<T>(clipped.data(), spec);
  return Tensor<T>(clipped.shape(), OutputValues<T>(r, spec).first);
}

template <typename T>
ClipGradients<T> ClipBackward(const Tensor<T>& x, const QuantizerSpec<T>& spec,
                              std::span<const T> gc) {
  spec.Validate();
  if (gc.size() != x.size()) {
    throw DimensionError("clip backward: gradient size mismatch");
  }
  const auto X = x.data();
  const std::size_t n = X.size();
  ClipGradients<T> out;
  out.input.assign(n, T(0));
  out.params.assign(spec.params.size(), T(0));
  const bool weights = spec.target == QuantTarget::kWeights;
  switch (spec.kind) {
    case QuantizerKind::kPact: {
      const T m = spec.params[0][0];
      const T lo = weights ? -m : T(0);
      for (std::size_t i = 0; i < n; ++i) {
        if (X[i] >= lo && X[i] <= m) {
          out.input[i] = gc[i];
        } else if (X[i] > m) {
          out.params[0] += gc[i];
        } else if (weights) {
          out.params[0] -= gc[i];
        }
      }
      break;
    }
    case QuantizerKind::kEwgs: {
      const T p1 = spec.params[0][0], p2 = spec.params[1][0];
      const T width = p2 - p1;
      const T width2 = width * width;
      for (std::size_t i = 0; i < n; ++i) {
        const T u = (X[i] - p1) / width;
        if (u < T(0) || u > T(1)) continue;
        out.input[i] = gc[i] / width;
        out.params[0] += gc[i] * (X[i] - p2) / width2;
        out.params[1] -= gc[i] * (X[i] - p1) / width2;
      }
      break;
    }
    case QuantizerKind::kDorefa: {
      if (!weights) {
        for (std::size_t i = 0; i < n; ++i) {
          if (X[i] >= T(0) && X[i] <= T(1)) out.input[i] = gc[i];
        }
        break;
      }
      std::vector<T> t(n);
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = std::tanh(X[i]);
        if (std::abs(t[i]) > std::abs(t[arg])) arg = i;
      }
      const T M = std::abs(t[arg]);
      if (M == T(0)) throw NumericError("DoReFa weight quantizer on an all-zero tensor");
      // x_c = t / (2M) + 1/2 with M = max|tanh(x)| also depending on x.
      T through_max = 0;
      for (std::size_t i = 0; i < n; ++i) {
        out.input[i] = gc[i] * (T(1) - t[i] * t[i]) / (T(2) * M);
        through_max -= gc[i] * t[i] / (T(2) * M * M);
      }
      const T sign = t[arg] > T(0) ? T(1) : T(-1);
      out.input[arg] += through_max * sign * (T(1) - t[arg] * t[arg]);
      break;
    }
    case QuantizerKind::kLsq: {
      const T s = spec.params[0][0];
      const auto [qn, qp] = LsqBounds(spec.target, spec.bits);
      for (std::size_t i = 0; i < n; ++i) {
        const T u = X[i] / s;
        if (u < static_cast<T>(qn) || u > static_cast<T>(qp)) continue;
        out.input[i] = gc[i] / s;
        out.params[0] -= gc[i] * X[i] / (s * s);
      }
      break;
    }
  }
  return out;
}

template <typename T>
Tensor<T> Quantize(const Tensor<T>& x, const QuantizerSpec<T>& spec) {
  spec.Validate();
  std::vector<Tensor<T>> inputs{x};
  inputs.insert(inputs.end(), spec.params.begin(), spec.params.end());

  auto forward = [spec](std::span<const Tensor<T>> in) {
    const Tensor<T>& input = in[0];
    auto xc = ClipValues<T>(input.data(), spec);
    auto r = LevelValues<T>(xc, spec);
    auto [out, slope] = OutputValues<T>(r, spec);
    ops::ForwardResult<T> result;
    result.output = Tensor<T>(input.shape(), std::move(out));
    result.saved = {std::move(xc), std::move(r), {slope}};
    return result;
  };

  auto backward = [spec, x](std::span<const T> upstream,
                            const std::vector<std::vector<T>>& saved) {
    const auto& xc = saved[0];
    const auto& r = saved[1];
    const T slope = saved[2][0];
    std::vector<T> g_level(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) g_level[i] = slope * upstream[i];
    const auto gc = EstimatorBackward<T>(g_level, xc, r, spec.backward);
    auto clip_grads = ClipBackward<T>(x, spec, gc);

    if (spec.kind == QuantizerKind::kLsq) {
      // x_q = r * s also depends on s directly; LSQ scales the step-size
      // gradient by 1/sqrt(numel * Q_P).
      T direct = 0;
      for (std::size_t i = 0; i < upstream.size(); ++i) direct += upstream[i] * r[i];
      const int qp = std::max(1, LsqBounds(spec.target, spec.bits).second);
      const T scale = T(1) / std::sqrt(static_cast<T>(upstream.size()) *
                                       static_cast<T>(qp));
      clip_grads.params[0] = (clip_grads.params[0] + direct) * scale;
    }

    CheckFinite<T>(clip_grads.input, "quantizer backward");
    CheckFinite<T>(clip_grads.params, "quantizer backward");
    std::vector<std::vector<T>> grads;
    grads.push_back(std::move(clip_grads.input));
    for (const T g : clip_grads.params) grads.push_back({g});
    return grads;
  };

  return ops::MakeCustomGradOp<T>(forward, backward)(std::move(inputs));
}

template <typename T>
Tensor<T> QuantizeDorefa(const Tensor<T>& x, const QuantizerSpec<T>& spec) {
  CheckKind(spec, QuantizerKind::kDorefa);
  return Quantize(x, spec);
}

template <typename T>
Tensor<T> QuantizeLsq(const Tensor<T>& x, const QuantizerSpec<T>& spec) {
  CheckKind(spec, QuantizerKind::kLsq);
  return Quantize(x, spec);
}

#define SQAKD_INSTANTIATE_QUANTIZER(T)                                        \
  template struct QuantizerSpec<T>;                                           \
  template std::vector<T> EstimatorBackward(std::span<const T>,               \
                                            std::span<const T>,               \
                                            std::span<const T>,               \
                                            const BackwardRule&);             \
  template QuantizerSpec<T> MakeQuantizer(QuantizerKind, QuantTarget, int,    \
                                          BackwardRule);                      \
  template void SetQuantizerParams(QuantizerSpec<T>&, std::vector<T>);        \
  template void InitializeQuantizer(QuantizerSpec<T>&, std::span<const T>,    \
                                    const QuantizerInit&);                    \
  template Tensor<T> Clip(const Tensor<T>&, const QuantizerSpec<T>&);         \
  template Tensor<T> RoundQ(const Tensor<T>&, const QuantizerSpec<T>&);       \
  template ClipGradients<T> ClipBackward(const Tensor<T>&,                    \
                                         const QuantizerSpec<T>&,             \
                                         std::span<const T>);                 \
  template Tensor<T> Quantize(const Tensor<T>&, const QuantizerSpec<T>&);     \
  template Tensor<T> QuantizeDorefa(const Tensor<T>&,                         \
                                    const QuantizerSpec<T>&);                 \
  template Tensor<T> QuantizeLsq(const Tensor<T>&, const QuantizerSpec<T>&);

SQAKD_INSTANTIATE_QUANTIZER(float)
SQAKD_INSTANTIATE_QUANTIZER(double)

#undef SQAKD_INSTANTIATE_QUANTIZER

}  // namespace sqakd
