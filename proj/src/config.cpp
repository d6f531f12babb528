#include "refjac/config.hpp"

#include "refjac/errors.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace refjac {

namespace {

class TomlParser {
 public:
  explicit TomlParser(const std::string& text) : s_(text) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    for (;;) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') fail("arrays of tables are not supported");
        skip_inline_space();
        const auto path = parse_key_path();
        skip_inline_space();
        expect(']');
        table = &root;
        for (const auto& part : path) {
          Json& next = (*table)[part];
          if (next.is_null()) next = Json::object();
          if (!next.is_object()) fail("'" + part + "' is both a value and a table");
          table = &next;
        }
      } else {
        const auto path = parse_key_path();
        skip_inline_space();
        expect('=');
        skip_inline_space();
        Json value = parse_value();
        assign(*table, path, std::move(value));
      }
      end_of_statement();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  void skip_inline_space() {
    while (peek() == ' ' || peek() == '\t' || peek() == '\r') ++pos_;
  }

  // Whitespace, comments and newlines (inside arrays and between statements).
  void skip_all_space() {
    for (;;) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      return;
    }
  }

  void skip_blank_lines() { skip_all_space(); }

  void end_of_statement() {
    skip_inline_space();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n') fail("unexpected text after value");
    ++pos_;
    ++line_;
  }

  std::string parse_key() {
    if (peek() == '"') return parse_basic_string();
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> path{parse_key()};
    for (;;) {
      skip_inline_space();
      if (peek() != '.') return path;
      ++pos_;
      skip_inline_space();
      path.push_back(parse_key());
    }
  }

  void assign(Json& table, const std::vector<std::string>& path, Json value) {
    Json* t = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      Json& next = (*t)[path[i]];
      if (next.is_null()) next = Json::object();
      if (!next.is_object()) fail("'" + path[i] + "' is not a table");
      t = &next;
    }
    if (t->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*t)[path.back()] = std::move(value);
  }

  std::string parse_basic_string() {
    expect('"');
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      const char e = s_[pos_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
  }

  std::string parse_literal_string() {
    expect('\'');
    const std::size_t start = pos_;
    while (!eof() && peek() != '\'' && peek() != '\n') ++pos_;
    if (peek() != '\'') fail("unterminated string");
    std::string out = s_.substr(start, pos_ - start);
    ++pos_;
    return out;
  }

  Json parse_array() {
    expect('[');
    Json arr = Json::array();
    for (;;) {
      skip_all_space();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_all_space();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  Json parse_inline_table() {
    expect('{');
    Json t = Json::object();
    skip_inline_space();
    if (peek() == '}') {
      ++pos_;
      return t;
    }
    for (;;) {
      skip_inline_space();
      const auto path = parse_key_path();
      skip_inline_space();
      expect('=');
      skip_inline_space();
      assign(t, path, parse_value());
      skip_inline_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect('}');
      return t;
    }
  }

  Json parse_scalar_word() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string_view("+-._").find(peek()) !=
                                                                               std::string_view::npos)) {
      ++pos_;
    }
    std::string word = s_.substr(start, pos_ - start);
    if (word.empty()) fail("expected a value");
    if (word == "true") return true;
    if (word == "false") return false;
    std::string digits;
    for (char c : word) {
      if (c != '_') digits.push_back(c);
    }
    if (digits == "inf" || digits == "+inf") return std::numeric_limits<double>::infinity();
    if (digits == "-inf") return -std::numeric_limits<double>::infinity();
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    const char* first = digits.data() + (digits[0] == '+' ? 1 : 0);
    const char* last = digits.data() + digits.size();
    if (!is_float) {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && p == last) return v;
    } else {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && p == last) return v;
    }
    fail("cannot parse value '" + word + "'");
  }

  Json parse_value() {
    switch (peek()) {
      case '"': return parse_basic_string();
      case '\'': return parse_literal_string();
      case '[': return parse_array();
      case '{': return parse_inline_table();
      default: return parse_scalar_word();
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace

Json parse_toml(const std::string& text) { return TomlParser(text).parse(); }

Json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return Json::parse(buf.str());
    } catch (const Json::exception& e) {
      throw ConfigError("config " + path.string() + ": " + e.what());
    }
  }
  return parse_toml(buf.str());
}

}  // namespace refjac
