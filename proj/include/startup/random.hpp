// Copyright 2026 The startup-fsl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef STARTUP_RANDOM_HPP_
#define STARTUP_RANDOM_HPP_

#include <cstdint>
#include <cstring>
#include <random>
#include <string_view>

#include "startup/diffcore.hpp"

namespace startup {

using Rng = std::mt19937_64;

// Independent stream seed for (base, stream). splitmix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Incremental FNV-1a, used for bundle and protocol fingerprints.
class Fingerprint {
 public:
  Fingerprint& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001B3ULL;
    }
    return *this;
  }
  Fingerprint& u64(std::uint64_t v) { return bytes(&v, sizeof v); }
  Fingerprint& f64(double v) { return bytes(&v, sizeof v); }
  Fingerprint& str(std::string_view s) {
    u64(s.size());
    return bytes(s.data(), s.size());
  }
  Fingerprint& matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    return bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace startup

#endif  // STARTUP_RANDOM_HPP_
