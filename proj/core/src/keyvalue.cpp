#include "rig/keyvalue.hpp"

#include <charconv>
#include <stdexcept>

namespace rig::kv {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Pairs parse(std::string_view text) {
  Pairs out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    for (const auto& [k, v] : out) {
      if (k == key) throw std::invalid_argument("duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::string format(const Pairs& pairs) {
  std::string out;
  for (const auto& [k, v] : pairs) out += k + "=" + v + "\n";
  return out;
}

bool Reader::has(const std::string& key) const {
  for (const auto& p : pairs_) {
    if (p.first == key) return true;
  }
  return false;
}

const std::string* Reader::lookup(const std::string& key) {
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (pairs_[i].first == key) {
      used_[i] = true;
      return &pairs_[i].second;
    }
  }
  return nullptr;
}

std::string Reader::get_string(const std::string& key, const std::string& fallback) {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

double Reader::get_double(const std::string& key, double fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v->size()) {
    throw std::invalid_argument("key '" + key + "': not a number: '" + *v + "'");
  }
  return out;
}

std::uint64_t Reader::get_u64(const std::string& key, std::uint64_t fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) {
    throw std::invalid_argument("key '" + key + "': not a non-negative integer: '" + *v + "'");
  }
  return out;
}

bool Reader::get_bool(const std::string& key, bool fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw std::invalid_argument("key '" + key + "': expected true/false, got '" + *v + "'");
}

std::vector<std::size_t> Reader::get_size_list(const std::string& key,
                                               const std::vector<std::size_t>& fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  std::string_view rest = *v;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (item.empty()) continue;
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), n);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw std::invalid_argument("key '" + key + "': bad list entry '" + std::string(item) + "'");
    }
    out.push_back(n);
  }
  return out;
}

void Reader::require_all_used() const {
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (!used_[i]) throw std::invalid_argument("unknown key '" + pairs_[i].first + "'");
  }
}

}  // namespace rig::kv
