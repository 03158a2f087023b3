// Copyright 2026 The ibcomm Authors
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

#include <charconv>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ibcomm {

// Number of discrete CPU levels an agent chooses from.
inline constexpr int kNumCpuLevels = 6;

// Tolerance (GHz) under which a grant counts as exactly the share.
inline constexpr double kExactShareTolerance = 1e-6;

// How agents use the message channel.
//  - kEmergent: the agent picks a symbol from an alphabet of arbitrary meaning.
//  - kPredefined: a fixed 3-symbol code describes the agent's grant.
//  - kSilent: no channel at all.
class MessagePolicy {
 public:
  enum class Kind { kEmergent, kPredefined, kSilent };

  static MessagePolicy emergent(int alphabet_size) {
    if (alphabet_size < 2) {
      throw std::invalid_argument("emergent alphabet size must be >= 2, got " +
                                  std::to_string(alphabet_size));
    }
    return MessagePolicy(Kind::kEmergent, alphabet_size);
  }
  static MessagePolicy predefined() {
    return MessagePolicy(Kind::kPredefined, 3);
  }
  static MessagePolicy silent() { return MessagePolicy(Kind::kSilent, 0); }

  // Accepts "emergent:<k>", "predefined", "silent".
  static MessagePolicy parse(std::string_view text) {
    if (text == "predefined") return predefined();
    if (text == "silent") return silent();
    constexpr std::string_view kPrefix = "emergent:";
    if (text.substr(0, kPrefix.size()) == kPrefix) {
      auto digits = text.substr(kPrefix.size());
      int k = 0;
      auto [ptr, ec] =
          std::from_chars(digits.data(), digits.data() + digits.size(), k);
      if (ec != std::errc() || ptr != digits.data() + digits.size()) {
        throw std::invalid_argument("bad alphabet size in policy '" +
                                    std::string(text) + "'");
      }
      return emergent(k);
    }
    throw std::invalid_argument(
        "unknown comm policy '" + std::string(text) +
        "' (expected emergent:<k>, predefined or silent)");
  }

  Kind kind() const { return kind_; }
  bool is_silent() const { return kind_ == Kind::kSilent; }
  // Symbols in the alphabet; 0 for the silent policy.
  int alphabet_size() const { return alphabet_size_; }

  // Canonical text form, the inverse of parse().
  std::string to_string() const {
    switch (kind_) {
      case Kind::kEmergent:
        return "emergent:" + std::to_string(alphabet_size_);
      case Kind::kPredefined:
        return "predefined";
      case Kind::kSilent:
        return "silent";
    }
    return {};
  }
  // Form safe for file names ("emergent3", "predefined", "silent").
  std::string file_tag() const {
    return kind_ == Kind::kEmergent ? "emergent" + std::to_string(alphabet_size_)
                                    : to_string();
  }

  friend bool operator==(const MessagePolicy&, const MessagePolicy&) = default;

 private:
  MessagePolicy(Kind kind, int alphabet_size)
      : kind_(kind), alphabet_size_(alphabet_size) {}

  Kind kind_;
  int alphabet_size_;
};

// Message factor of the joint action space. The silent policy keeps a single
// dummy symbol so joint-action arithmetic stays uniform.
inline int message_factor(const MessagePolicy& policy) {
  return policy.is_silent() ? 1 : policy.alphabet_size();
}

inline int action_space_size(const MessagePolicy& policy) {
  return kNumCpuLevels * message_factor(policy);
}

// Observation length: served traffic, allocation gap, one one-hot block per
// peer.
inline std::size_t observation_size(const MessagePolicy& policy,
                                    std::size_t n_peers) {
  return 2 + n_peers * static_cast<std::size_t>(policy.alphabet_size());
}

// Fixed 3-symbol code: 0 above share, 1 below share, 2 at share.
inline int predefined_message(double granted_ghz, double share_ghz) {
  if (granted_ghz > share_ghz + kExactShareTolerance) return 0;
  if (granted_ghz < share_ghz - kExactShareTolerance) return 1;
  return 2;
}

// Concatenates one one-hot block per peer, in peer-id order. Symbol 0 doubles
// as the "nothing received yet" marker after a reset.
inline std::vector<double> encode_inbound(std::span<const int> peer_symbols,
                                          int alphabet_size) {
  std::vector<double> out(peer_symbols.size() *
                              static_cast<std::size_t>(alphabet_size),
                          0.0);
  if (alphabet_size == 0) return out;
  for (std::size_t p = 0; p < peer_symbols.size(); ++p) {
    const int s = peer_symbols[p];
    if (s < 0 || s >= alphabet_size) {
      throw std::out_of_range("message symbol " + std::to_string(s) +
                              " outside alphabet of size " +
                              std::to_string(alphabet_size));
    }
    out[p * static_cast<std::size_t>(alphabet_size) +
        static_cast<std::size_t>(s)] = 1.0;
  }
  return out;
}

}  // namespace ibcomm
