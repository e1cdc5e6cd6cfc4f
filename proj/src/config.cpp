#include "trapdoor/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "trapdoor/error.hpp"

namespace trapdoor {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text, std::string origin) {
  KeyValueFile kv;
  kv.origin_ = std::move(origin);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::ConfigError, kv.origin_ + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(Errc::ConfigError, kv.origin_ + ":" + std::to_string(line_no) + ": empty key");
    auto& slot = kv.values_[key];
    if (slot.empty()) kv.order_.push_back(key);
    slot.push_back(std::move(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second.back();
}

std::vector<std::string> KeyValueFile::get_all(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? std::vector<std::string>{} : it->second;
}

std::string KeyValueFile::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw Error(Errc::ConfigError, origin_ + ": missing key '" + key + "'");
  return *v;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, origin_ + ": '" + key + "' is not a number: " + *v);
  }
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    throw Error(Errc::ConfigError, origin_ + ": '" + key + "' is not a non-negative integer: " + *v);
  return out;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw Error(Errc::ConfigError, origin_ + ": '" + key + "' is not a boolean: " + *v);
}

void KeyValueFile::reject_unknown(const std::vector<std::string_view>& known) const {
  for (const auto& key : order_) {
    bool ok = false;
    for (auto k : known) {
      if (key == k || (!k.empty() && k.back() == '.' && key.rfind(k, 0) == 0)) {
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(Errc::ConfigError, origin_ + ": unknown key '" + key + "'");
  }
}

}  // namespace trapdoor
