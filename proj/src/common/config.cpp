#include "qs/config.hpp"

#include <cctype>
#include <string>
#include <vector>

#include "qs/digest.hpp"
#include "qs/error.hpp"

namespace qs {
namespace {

using nlohmann::json;

class TomlLineParser {
 public:
  TomlLineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  std::vector<std::string> key_path() {
    std::vector<std::string> parts;
    while (true) {
      skip_ws();
      if (peek() == '"' || peek() == '\'') {
        parts.push_back(string_value());
      } else {
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                    s_[pos_] == '_' || s_[pos_] == '-')) {
          ++pos_;
        }
        if (start == pos_) fail("expected key");
        parts.emplace_back(s_.substr(start, pos_ - start));
      }
      skip_ws();
      if (peek() != '.') break;
      ++pos_;
    }
    return parts;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  json value() {
    skip_ws();
    char c = peek();
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') return array_value();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '+' || s_[pos_] == '-' || s_[pos_] == '.' ||
                                s_[pos_] == '_')) {
      ++pos_;
    }
    std::string token;
    for (char ch : s_.substr(start, pos_ - start)) {
      if (ch != '_') token.push_back(ch);
    }
    if (token.empty()) fail("expected value");
    bool is_float = token.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        double d = std::stod(token, &used);
        if (used != token.size()) fail("bad number");
        return d;
      }
      long long v = std::stoll(token, &used);
      if (used != token.size()) fail("bad number");
      return v;
    } catch (const std::logic_error&) {
      fail("bad value '" + token + "'");
    }
    return nullptr;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string string_value() {
    char quote = s_[pos_++];
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (quote == '"' && c == '\\' && pos_ < s_.size()) {
        char e = s_[pos_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: out.push_back(e); break;
        }
      } else {
        out.push_back(c);
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json array_value() {
    ++pos_;
    json arr = json::array();
    while (true) {
      skip_ws();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']'");
      }
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::InvalidConfig, "toml line " + std::to_string(line_) + ": " + what);
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

json& descend(json& root, const std::vector<std::string>& path, std::size_t count) {
  json* node = &root;
  for (std::size_t i = 0; i < count; ++i) {
    json& child = (*node)[path[i]];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) {
      throw Error(ErrorCode::InvalidConfig, "toml key '" + path[i] + "' is not a table");
    }
    node = &child;
  }
  return *node;
}

}  // namespace

json parse_toml(std::string_view text) {
  json root = json::object();
  std::vector<std::string> table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    TomlLineParser p(line, line_no);
    if (!p.at_end_or_comment()) {
      if (p.peek() == '[') {
        p.expect('[');
        table = p.key_path();
        p.expect(']');
        descend(root, table, table.size());
      } else {
        auto key = p.key_path();
        p.expect('=');
        json v = p.value();
        if (!p.at_end_or_comment()) {
          throw Error(ErrorCode::InvalidConfig,
                      "toml line " + std::to_string(line_no) + ": trailing characters");
        }
        json& tbl = descend(root, table, table.size());
        json& parent = descend(tbl, key, key.size() - 1);
        parent[key.back()] = std::move(v);
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return root;
}

json load_config(const std::filesystem::path& path) {
  std::string text = read_file(path);
  auto ext = path.extension().string();
  if (ext == ".toml") return parse_toml(text);
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config root must be an object");
    return j;
  } catch (const json::parse_error& e) {
    if (ext == ".json") throw Error(ErrorCode::InvalidConfig, e.what());
    return parse_toml(text);
  }
}

void merge_config(json& base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge_config(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

}  // namespace qs
