//
// Copyright 2026 The psibudget Authors
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
//
#ifndef PSIBUDGET_RANDOM_HPP
#define PSIBUDGET_RANDOM_HPP

#include <openssl/rand.h>

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>

namespace psibudget {

// Source of randomness handed explicitly to every mechanism.
//
// Production code can only obtain the cryptographically secure mode. The
// seeded and zero-noise modes exist only when PSIBUDGET_TESTING is defined,
// so a deterministic source can never reach a real release.
class RandomSource {
 public:
  enum class Mode { kSecure, kSeeded, kZeroNoise };

  static RandomSource Secure() { return RandomSource(Mode::kSecure, 0); }

#ifdef PSIBUDGET_TESTING
  static RandomSource Seeded(std::uint64_t seed) {
    return RandomSource(Mode::kSeeded, seed);
  }
  static RandomSource ZeroNoise() { return RandomSource(Mode::kZeroNoise, 0); }
#endif

  Mode mode() const { return mode_; }
  bool zero_noise() const { return mode_ == Mode::kZeroNoise; }

  std::uint64_t NextBits() {
    switch (mode_) {
      case Mode::kSecure: {
        std::uint64_t bits = 0;
        unsigned char buf[sizeof(bits)];
        if (RAND_bytes(buf, sizeof(buf)) != 1) {
          throw std::runtime_error("secure random generator failed");
        }
        std::memcpy(&bits, buf, sizeof(bits));
        return bits;
      }
      case Mode::kSeeded:
        return engine_();
      case Mode::kZeroNoise:
        break;
    }
    return 0;
  }

  // Uniform double strictly inside (0, 1), 53 bits of resolution.
  double Uniform() {
    const std::uint64_t top = NextBits() >> 11;
    return (static_cast<double>(top) + 0.5) * 0x1.0p-53;
  }

 private:
  RandomSource(Mode mode, std::uint64_t seed) : mode_(mode), engine_(seed) {}

  Mode mode_;
  std::mt19937_64 engine_;
};

}  // namespace psibudget

#endif  // PSIBUDGET_RANDOM_HPP
