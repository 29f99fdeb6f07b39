// Copyright (c) the RGB-JND Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rgbjnd/aic.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "rgbjnd/iqa.h"

namespace rgbjnd {
namespace aic {
namespace {

// Published assignment, row n-1 serves group n. Groups 1 and 4 coincide.
const std::array<std::array<const char*, 3>, 5> kDefaultTriples = {{
    {"ms_ssim", "dists", "gmsd"},
    {"ssim", "dists", "gmsd"},
    {"ms_ssim", "gmsd", "fsim"},
    {"ms_ssim", "dists", "gmsd"},
    {"ms_ssim", "ssim", "gmsd"},
}};

const char* const kCanonicalNames[5] = {"ms_ssim", "ssim", "dists", "gmsd",
                                        "fsim"};

// Built-in lookup that mirrors the registry's alias rules without
// throwing; plugin and unknown names fall through to evaluation time.
std::optional<iqa::MetricId> TryBuiltin(const std::string& name) {
  for (int i = 0; i < 5; ++i) {
    if (name == kCanonicalNames[i]) return static_cast<iqa::MetricId>(i);
  }
  if (name.size() == 2 && name[0] == 'm' && name[1] >= '1' &&
      name[1] <= '5') {
    return static_cast<iqa::MetricId>(name[1] - '1');
  }
  return std::nullopt;
}

void RequireGroup(int group, const char* who) {
  if (group < 1 || group > 5) {
    throw ParameterError(std::string(who) + ": group must be in 1..5, got " +
                         std::to_string(group));
  }
}

// Canonicalizes names and enforces the structural invariants shared by
// every combo: 1..5 group id, positive finite weights, no repeated
// metric once aliases are resolved.
IqaCombo Canonicalize(const IqaCombo& c, const char* who) {
  RequireGroup(c.group, who);
  IqaCombo out = c;
  for (int i = 0; i < 3; ++i) {
    if (out.metrics[i].empty()) {
      throw ConfigError(std::string(who) + ": empty metric name");
    }
    if (auto id = TryBuiltin(out.metrics[i])) {
      out.metrics[i] = iqa::MetricName(*id);
    }
    if (!(std::isfinite(out.weights[i]) && out.weights[i] > 0.0)) {
      throw ConfigError(std::string(who) + ": weight for " + out.metrics[i] +
                        " must be positive and finite");
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (out.metrics[i] == out.metrics[j]) {
        throw ConfigError(std::string(who) + ": metric " + out.metrics[i] +
                          " repeats in the triple");
      }
    }
  }
  return out;
}

std::string Trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitCsv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(Trim(tok));
  return out;
}

[[noreturn]] void LineError(const std::string& path, int lineno,
                            const std::string& msg) {
  throw ConfigError(path + ":" + std::to_string(lineno) + ": " + msg);
}

}  // namespace

IqaCombo MakeCombo(int group, const std::array<std::string, 3>& metrics,
                   const std::array<double, 3>& weights) {
  IqaCombo c;
  c.group = group;
  c.metrics = metrics;
  c.weights = weights;
  return Canonicalize(c, "MakeCombo");
}

IqaCombo ComboFor(int group) {
  RequireGroup(group, "ComboFor");
  IqaCombo c;
  c.group = group;
  for (int i = 0; i < 3; ++i) c.metrics[i] = kDefaultTriples[group - 1][i];
  return c;
}

double PerceptualLoss(const IqaCombo& combo, const Tensor& o, const Tensor& d,
                      Tensor* grad) {
  IqaCombo c = Canonicalize(combo, "PerceptualLoss");
  std::array<iqa::MetricId, 3> ids;
  for (int i = 0; i < 3; ++i) {
    auto id = TryBuiltin(c.metrics[i]);
    if (!id) {
      // Unknown names raise RegistryError here. Registered plugins are
      // evaluation-only, so any non-built-in name is rejected.
      iqa::MetricDifferentiable(c.metrics[i]);
      throw ConfigError("PerceptualLoss: metric " + c.metrics[i] +
                        " is not differentiable and cannot join a combo");
    }
    ids[i] = *id;
  }
  RequireSameShape(o, d, "perceptual loss inputs");

  double loss = 0.0;
  std::vector<double> acc;
  if (grad) acc.assign(d.size(), 0.0);
  for (int i = 0; i < 3; ++i) {
    Tensor gi;
    iqa::MetricScore s =
        iqa::EvaluateMetric(ids[i], o, d, grad ? &gi : nullptr);
    loss += c.weights[i] * s.distance;
    if (grad) {
      const float* g = gi.data();
      for (size_t q = 0; q < acc.size(); ++q) acc[q] += c.weights[i] * g[q];
    }
  }
  if (grad) {
    *grad = Tensor(d.c(), d.h(), d.w());
    for (size_t q = 0; q < acc.size(); ++q) {
      grad->data()[q] = static_cast<float>(acc[q]);
    }
  }
  return loss;
}

ComboTable::ComboTable() {
  for (int n = 1; n <= 5; ++n) rows_[n - 1] = ComboFor(n);
}

const IqaCombo& ComboTable::Get(int group) const {
  RequireGroup(group, "ComboTable::Get");
  return rows_[group - 1];
}

void ComboTable::Set(int group, const std::array<std::string, 3>& metrics,
                     const std::array<double, 3>& weights) {
  IqaCombo combo = MakeCombo(group, metrics, weights);  // validates group
  rows_[group - 1] = combo;
}

ComboTable LoadComboTable(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open combo table file: " + path);
  ComboTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      LineError(path, lineno,
                "expected 'group = metric, metric, metric [: w, w, w]'");
    }
    std::string lhs = Trim(line.substr(0, eq));
    int group = 0;
    try {
      size_t used = 0;
      group = std::stoi(lhs, &used);
      if (used != lhs.size()) throw std::invalid_argument(lhs);
    } catch (const std::exception&) {
      LineError(path, lineno, "bad group id '" + lhs + "'");
    }
    std::string rhs = line.substr(eq + 1);
    std::string names_part = rhs;
    std::array<double, 3> weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    size_t colon = rhs.find(':');
    if (colon != std::string::npos) {
      names_part = rhs.substr(0, colon);
      std::vector<std::string> wtoks = SplitCsv(rhs.substr(colon + 1));
      if (wtoks.size() != 3) {
        LineError(path, lineno, "expected exactly 3 weights");
      }
      for (int i = 0; i < 3; ++i) {
        try {
          size_t used = 0;
          weights[i] = std::stod(wtoks[i], &used);
          if (used != wtoks[i].size()) throw std::invalid_argument(wtoks[i]);
        } catch (const std::exception&) {
          LineError(path, lineno, "bad weight '" + wtoks[i] + "'");
        }
      }
    }
    std::vector<std::string> names = SplitCsv(names_part);
    if (names.size() != 3) {
      LineError(path, lineno, "expected exactly 3 metric names");
    }
    try {
      table.Set(group, {names[0], names[1], names[2]}, weights);
    } catch (const Error& e) {
      LineError(path, lineno, e.what());
    }
  }
  return table;
}

int MajorityGroup(const std::vector<int>& groups) {
  if (groups.empty()) {
    throw ParameterError("MajorityGroup: empty group list");
  }
  int counts[6] = {0, 0, 0, 0, 0, 0};
  for (int g : groups) {
    RequireGroup(g, "MajorityGroup");
    ++counts[g];
  }
  int best = 1;
  for (int g = 2; g <= 5; ++g) {
    if (counts[g] > counts[best]) best = g;
  }
  return best;
}

}  // namespace aic
}  // namespace rgbjnd
