#include <charconv>
#include <functional>
#include <map>
#include <set>

#include "kgfuse/config.hpp"
#include "kgfuse/error.hpp"
#include "kgfuse/io.hpp"

namespace kgfuse {

namespace {

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> parse;
  std::function<std::string(const RunConfig&)> format;
};

struct BadValue {
  std::string what;
};

template <typename T>
T parse_number(std::string_view text) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw BadValue{std::is_integral_v<T> ? "expected a non-negative integer" : "expected a number"};
  }
  return value;
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw BadValue{"expected true or false"};
}

template <typename T>
Key size_key(std::string name, T RunConfig::*group, std::size_t T::*field) {
  return {name,
          [group, field](RunConfig& c, std::string_view v) {
            (c.*group).*field = parse_number<std::size_t>(v);
          },
          [group, field](const RunConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename T>
Key real_key(std::string name, T RunConfig::*group, double T::*field) {
  return {name,
          [group, field](RunConfig& c, std::string_view v) {
            (c.*group).*field = parse_number<double>(v);
          },
          [group, field](const RunConfig& c) { return format_double((c.*group).*field); }};
}

template <typename F>
auto rethrow_as_bad_value(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw BadValue{e.what()};
  }
}

const std::vector<Key>& key_table() {
  using E = EncoderConfig;
  using T = TrainConfig;
  static const std::vector<Key> keys = {
      size_key("d", &RunConfig::encoder, &E::dim),
      size_key("heads", &RunConfig::encoder, &E::heads),
      size_key("L", &RunConfig::encoder, &E::layers),
      real_key("dropout", &RunConfig::encoder, &E::dropout),
      {"fusion",
       [](RunConfig& c, std::string_view v) {
         c.encoder.fusion = rethrow_as_bad_value([&] { return parse_fusion(v); });
       },
       [](const RunConfig& c) { return std::string(fusion_name(c.encoder.fusion)); }},
      {"activation",
       [](RunConfig& c, std::string_view v) {
         c.encoder.activation = rethrow_as_bad_value([&] { return parse_activation(v); });
       },
       [](const RunConfig& c) { return std::string(activation_name(c.encoder.activation)); }},
      {"final_activation",
       [](RunConfig& c, std::string_view v) {
         c.encoder.final_activation = rethrow_as_bad_value([&] { return parse_activation(v); });
       },
       [](const RunConfig& c) {
         return std::string(activation_name(c.encoder.final_activation));
       }},
      size_key("hops", &RunConfig::encoder, &E::hops),
      size_key("fanout", &RunConfig::encoder, &E::fanout),
      real_key("lr", &RunConfig::train, &T::lr),
      real_key("tau", &RunConfig::train, &T::tau),
      real_key("lambda", &RunConfig::train, &T::lambda),
      size_key("E1", &RunConfig::train, &T::epochs_pretrain),
      size_key("E2", &RunConfig::train, &T::epochs_finetune),
      size_key("batch", &RunConfig::train, &T::batch),
      size_key("k_neg", &RunConfig::train, &T::k_neg),
      size_key("bank", &RunConfig::train, &T::bank),
      size_key("patience", &RunConfig::train, &T::patience),
      size_key("k_attr", &RunConfig::train, &T::k_attr),
      size_key("path_len", &RunConfig::train, &T::path_len),
      size_key("max_paths", &RunConfig::train, &T::max_paths),
      size_key("neg_ratio", &RunConfig::train, &T::neg_ratio),
      {"rec_loss",
       [](RunConfig& c, std::string_view v) {
         c.train.rec_loss = rethrow_as_bad_value([&] { return parse_rec_loss(v); });
       },
       [](const RunConfig& c) { return std::string(rec_loss_name(c.train.rec_loss)); }},
      {"freeze_encoders",
       [](RunConfig& c, std::string_view v) { c.train.freeze_encoders = parse_bool(v); },
       [](const RunConfig& c) { return std::string(c.train.freeze_encoders ? "true" : "false"); }},
      {"seed",
       [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>(v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
  };
  return keys;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return names;
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  std::map<std::string_view, const Key*> by_name;
  for (const auto& k : key_table()) by_name[k.name] = &k;

  RunConfig config;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  auto fail = [&](std::size_t line, const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
  };
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = by_name.find(key);
    if (it == by_name.end()) fail(line_no, "unknown key '" + key + "'");
    if (auto [prev, fresh] = seen.emplace(key, line_no); !fresh) {
      fail(line_no, "key '" + key + "' already set on line " + std::to_string(prev->second));
    }
    if (value.empty()) fail(line_no, "missing value for '" + key + "'");
    try {
      it->second->parse(config, value);
    } catch (const BadValue& e) {
      fail(line_no, "bad value '" + std::string(value) + "' for '" + key + "': " + e.what);
    }
  }

  try {
    config.encoder.validate();
    config.train.validate();
  } catch (const ConfigError& e) {
    // Point at the offending line when the message names a set key.
    const std::string msg = e.what();
    for (const auto& [key, line] : seen) {
      if (msg.starts_with(key + " ") || msg.find(" " + key + " ") != std::string::npos) {
        fail(line, msg);
      }
    }
    throw ConfigError(source + ": " + msg);
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : key_table()) out += k.name + " = " + k.format(config) + '\n';
  return out;
}

}  // namespace kgfuse
