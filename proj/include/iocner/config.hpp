#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>

#include "iocner/error.hpp"
#include "iocner/trainer.hpp"

namespace iocner {

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& text, const std::string& where) {
  T v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError(where + "invalid number '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& text, const std::string& where) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError(where + "invalid boolean '" + text + "'");
}

}  // namespace detail

// Applies one `key = value` setting to `cfg`.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value,
                             const std::string& where = "") {
  using detail::parse_number;
  if (key == "learning_rate") cfg.learning_rate = parse_number<double>(value, where);
  else if (key == "clip_norm") cfg.clip_norm = parse_number<double>(value, where);
  else if (key == "dropout") cfg.dropout = parse_number<double>(value, where);
  else if (key == "max_epochs") cfg.max_epochs = parse_number<int>(value, where);
  else if (key == "patience") cfg.patience = parse_number<int>(value, where);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, where);
  else if (key == "workers") cfg.workers = parse_number<int>(value, where);
  else if (key == "token_dim") cfg.dims.token_dim = parse_number<int>(value, where);
  else if (key == "char_dim") cfg.dims.char_dim = parse_number<int>(value, where);
  else if (key == "char_hidden") cfg.dims.char_hidden = parse_number<int>(value, where);
  else if (key == "word_hidden") cfg.dims.word_hidden = parse_number<int>(value, where);
  else if (key == "attention_dim") cfg.dims.attention = parse_number<int>(value, where);
  else if (key == "ffn_hidden") cfg.dims.ffn_hidden = parse_number<int>(value, where);
  else if (key == "use_features") cfg.dims.use_features = detail::parse_bool(value, where);
  else throw ParseError(where + "unknown configuration key '" + key + "'");
}

// Line-oriented `key = value`; '#' starts a comment.
inline void parse_train_config(std::istream& in, TrainConfig& cfg, const std::string& source = "<config>") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected 'key = value'");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), where);
  }
}

inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  parse_train_config(in, base, path);
  return base;
}

inline std::string format_train_config(const TrainConfig& cfg) {
  auto num = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  std::ostringstream out;
  out << "learning_rate = " << num(cfg.learning_rate) << '\n'
      << "clip_norm = " << num(cfg.clip_norm) << '\n'
      << "dropout = " << num(cfg.dropout) << '\n'
      << "max_epochs = " << cfg.max_epochs << '\n'
      << "patience = " << cfg.patience << '\n'
      << "seed = " << cfg.seed << '\n'
      << "workers = " << cfg.workers << '\n'
      << "token_dim = " << cfg.dims.token_dim << '\n'
      << "char_dim = " << cfg.dims.char_dim << '\n'
      << "char_hidden = " << cfg.dims.char_hidden << '\n'
      << "word_hidden = " << cfg.dims.word_hidden << '\n'
      << "attention_dim = " << cfg.dims.attention << '\n'
      << "ffn_hidden = " << cfg.dims.ffn_hidden << '\n'
      << "use_features = " << (cfg.dims.use_features ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace iocner
