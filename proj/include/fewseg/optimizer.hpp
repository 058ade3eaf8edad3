// Copyright 2026 The fewseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>

#include "fewseg/model.hpp"

namespace fewseg {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moment estimates, shaped like the parameters.
template <typename T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams<T>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected adaptive-moment step.
template <typename T>
void adam_update(ModelParams<T>& params, const ModelParams<T>& grad, AdamState<T>& state, double lr,
                 const AdamSettings& settings = {}) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(settings.beta1), b2 = static_cast<T>(settings.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(settings.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(settings.beta2, t)));
  const T eps = static_cast<T>(settings.epsilon), rate = static_cast<T>(lr);

  auto update = [&](std::vector<ParamArray<T>>& p, const std::vector<ParamArray<T>>& g, std::vector<ParamArray<T>>& m,
                    std::vector<ParamArray<T>>& v) {
    for (std::size_t a = 0; a < p.size(); ++a) {
      auto& pv = p[a].values;
      const auto& gv = g[a].values;
      auto& mv = m[a].values;
      auto& vv = v[a].values;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        mv[i] = b1 * mv[i] + (T{1} - b1) * gv[i];
        vv[i] = b2 * vv[i] + (T{1} - b2) * gv[i] * gv[i];
        pv[i] -= rate * (mv[i] * c1) / (std::sqrt(vv[i] * c2) + eps);
      }
    }
  };
  update(params.encoder, grad.encoder, state.m.encoder, state.v.encoder);
  update(params.relation, grad.relation, state.m.relation, state.v.relation);
  update(params.decoder, grad.decoder, state.m.decoder, state.v.decoder);
}

}  // namespace fewseg
