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

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rgbjnd {

// Error taxonomy. The CLI maps these onto process exit codes, so every
// throwing code path must pick the class that matches the failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/image shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value outside its documented range (window sizes, levels, weights).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Broken or missing input data (empty datasets, unreadable files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Operation invoked on an object in the wrong state (frozen/unfrozen model).
class StateError : public Error {
 public:
  using Error::Error;
};

// Metric / saliency registry misuse (unknown name, duplicate registration).
class RegistryError : public Error {
 public:
  using Error::Error;
};

// Invalid or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Noise-level calibration failed (degenerate map, unreachable target).
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse; reserved for the CLI layer.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Deterministic PRNG (PCG-XSH-RR 64/32). The standard <random> distributions
// are not bit-reproducible across library implementations, so all sampling
// used by the toolkit goes through this class instead.
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed, uint64_t stream = 0) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    NextU32();
    state_ += seed;
    NextU32();
  }

  uint32_t NextU32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t NextU64() {
    uint64_t hi = NextU32();
    return (hi << 32) | NextU32();
  }

  // Uniform double in [0, 1), 53 random bits.
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  float UniformF() { return static_cast<float>(Uniform()); }

  // Standard normal via Box-Muller; second deviate cached.
  double Normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - Uniform();  // (0, 1]
    double u2 = Uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n). Multiply-shift map; the O(2^-32) bias is
  // irrelevant here and the result is platform-stable.
  int UniformInt(int n) {
    return static_cast<int>((static_cast<uint64_t>(NextU32()) *
                             static_cast<uint64_t>(n)) >>
                            32);
  }

  bool Bit() { return (NextU32() & 1u) != 0; }

  // ±1 with equal probability; used for sign-randomized noise injection.
  float Sign() { return Bit() ? 1.0f : -1.0f; }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent seed from a master seed and a purpose tag, so the
// different random streams of a run (init, shuffling, crops, injection)
// never alias. SplitMix64 finalizer.
inline uint64_t DeriveSeed(uint64_t master, uint64_t purpose) {
  uint64_t z = master + 0x9e3779b97f4a7c15ULL * (purpose + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rgbjnd
