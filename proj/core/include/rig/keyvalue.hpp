#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Flat `key = value` text: one pair per line, `#` starts a comment.
namespace rig::kv {

using Pairs = std::vector<std::pair<std::string, std::string>>;

/// Throws std::invalid_argument on lines without '=' or duplicate keys.
Pairs parse(std::string_view text);
std::string format(const Pairs& pairs);

/// Typed access that remembers which keys were consumed, so callers can
/// reject typos with `require_all_used`.
class Reader {
 public:
  explicit Reader(Pairs pairs) : pairs_(std::move(pairs)), used_(pairs_.size(), false) {}

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  std::size_t get_size(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(get_u64(key, fallback));
  }
  bool get_bool(const std::string& key, bool fallback);
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         const std::vector<std::size_t>& fallback);

  /// Throws std::invalid_argument naming the first key nobody asked for.
  void require_all_used() const;

 private:
  const std::string* lookup(const std::string& key);

  Pairs pairs_;
  std::vector<bool> used_;
};

}  // namespace rig::kv
