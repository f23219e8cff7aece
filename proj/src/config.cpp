#include "bspde/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bspde/errors.hpp"

namespace bspde {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<double> parse_number(const std::string& token) {
  const std::string t = trim(token);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string canonical_value(const std::string& value) {
  // Numeric tokens between separators are normalised so 1e-3 and 0.001 agree.
  std::string out;
  std::string token;
  auto flush = [&] {
    const std::string t = trim(token);
    if (auto v = parse_number(t)) {
      char buf[32];
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, *v);
      out.append(buf, ptr);
    } else {
      out += t;
    }
    token.clear();
  };
  for (char c : trim(value)) {
    if (c == ',' || c == ';' || c == ':' || c == '@' || c == '+' || c == ' ' || c == '\t') {
      // '+' inside an exponent belongs to the number
      if (c == '+' && !token.empty() && (token.back() == 'e' || token.back() == 'E') && parse_number(token + "0")) {
        token += c;
        continue;
      }
      flush();
      if (c != ' ' && c != '\t') out += c;
    } else {
      token += c;
    }
  }
  flush();
  return out;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ConfigSection::set(const std::string& key, const std::string& value, int line) {
  if (entries_.count(key)) {
    std::ostringstream msg;
    msg << source_ << ":" << line << ": duplicate key '" << key << "' in experiment '" << id_ << "' (first set on line "
        << entries_.at(key).line << ")";
    throw ConfigError(msg.str());
  }
  entries_[key] = Entry{value, line};
}

void ConfigSection::fail(const std::string& key, const std::string& message) const {
  std::ostringstream msg;
  const auto it = entries_.find(key);
  msg << source_ << ":" << (it != entries_.end() ? it->second.line : line_) << ": experiment '" << id_ << "', key '"
      << key << "': " << message;
  throw ConfigError(msg.str());
}

const ConfigSection::Entry& ConfigSection::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "required key is missing");
  used_.insert(key);
  return it->second;
}

std::string ConfigSection::require_string(const std::string& key) const {
  const std::string v = entry(key).value;
  if (v.empty()) fail(key, "value is empty");
  return v;
}

double ConfigSection::require_double(const std::string& key) const {
  const std::string v = entry(key).value;
  const auto d = parse_number(v);
  if (!d) fail(key, "expected a finite number, got '" + v + "'");
  return *d;
}

long long ConfigSection::require_int(const std::string& key) const {
  const std::string v = entry(key).value;
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) fail(key, "expected an integer, got '" + v + "'");
  return out;
}

std::string ConfigSection::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? require_string(key) : fallback;
}

double ConfigSection::get_double(const std::string& key, double fallback) const {
  return has(key) ? require_double(key) : fallback;
}

long long ConfigSection::get_int(const std::string& key, long long fallback) const {
  return has(key) ? require_int(key) : fallback;
}

std::optional<double> ConfigSection::optional_double(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return require_double(key);
}

void ConfigSection::reject_unused() const {
  for (const auto& [key, e] : entries_)
    if (!used_.count(key)) fail(key, "unknown key for kind '" + (has("kind") ? entries_.at("kind").value : "?") + "'");
}

std::uint64_t ConfigSection::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  feed(id_);
  feed("\n");
  for (const auto& [key, e] : entries_) {
    feed(key);
    feed("=");
    feed(canonical_value(e.value));
    feed("\n");
  }
  return h;
}

Config parse_config(const std::string& text, const std::string& source) {
  Config cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  ConfigSection* current = nullptr;
  std::set<std::string> ids;
  auto error = [&](const std::string& message) {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + message);
  };
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (const auto hash = s.find('#'); hash != std::string::npos) s.erase(hash);
    s = trim(s);
    // ';' separates list items inside values, so it only comments out whole lines
    if (s.empty() || s.front() == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') error("unterminated section header");
      const std::string header = trim(s.substr(1, s.size() - 2));
      const std::string prefix = "experiment";
      if (header.rfind(prefix, 0) != 0) error("section must be [experiment <id>], got [" + header + "]");
      const std::string id = trim(header.substr(prefix.size()));
      if (id.empty() || header.size() == prefix.size() || !std::isspace(static_cast<unsigned char>(header[prefix.size()])))
        error("section must be [experiment <id>]");
      for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
          error("experiment id '" + id + "' may only contain letters, digits, '-', '_' and '.'");
      if (!ids.insert(id).second) error("duplicate experiment id '" + id + "'");
      cfg.experiments.emplace_back(id, source, line);
      current = &cfg.experiments.back();
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) error("expected 'key = value', got '" + s + "'");
    if (!current) error("key outside of any [experiment <id>] section");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) error("empty key");
    for (char c : key)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) error("invalid key name '" + key + "'");
    current->set(key, trim(s.substr(eq + 1)), line);
  }
  if (cfg.experiments.empty()) throw ConfigError(source + ": no [experiment <id>] sections");
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

}  // namespace bspde
