#include "msv/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <system_error>


namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T number(std::string_view v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("not a number: '" + std::string(v) + "'");
  }
  return out;
}

real real_value(std::string_view v) { return static_cast<real>(number<double>(v)); }

std::size_t count(std::string_view v) {
  const auto n = number<std::size_t>(v);
  if (n == 0) throw ConfigError("expected a positive integer, got '" + std::string(v) + "'");
  return n;
}

bool boolean(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + std::string(v) + "'");
}

std::vector<std::string_view> split(std::string_view v, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = v.find(sep, start);
    out.push_back(trim(v.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

// Shortest form at the build's own precision, so 1e-3 stays "0.001".
std::string fmt(real v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}
std::string fmt(bool v) { return v ? "true" : "false"; }

// Keyed table of every addressable setting; std::map keeps format_config
// output sorted.
const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"num_classes",
       {[](RunConfig& c, std::string_view v) { c.model.num_classes = count(v); },
        [](const RunConfig& c) { return std::to_string(c.model.num_classes); }}},
      {"task",
       {[](RunConfig& c, std::string_view v) {
          if (v == "binary") c.model.task = Task::kBinary;
          else if (v == "multiclass") c.model.task = Task::kMulticlass;
          else throw ConfigError("task must be binary or multiclass");
        },
        [](const RunConfig& c) { return std::string(task_name(c.model.task)); }}},
      {"in_channels",
       {[](RunConfig& c, std::string_view v) { c.model.in_channels = count(v); },
        [](const RunConfig& c) { return std::to_string(c.model.in_channels); }}},
      {"channels",
       {[](RunConfig& c, std::string_view v) {
          const auto parts = split(v, ',');
          if (parts.size() != kEncoderStages) {
            throw ConfigError("channels needs " + std::to_string(kEncoderStages) + " entries");
          }
          for (std::size_t i = 0; i < parts.size(); ++i) c.model.channels[i] = count(parts[i]);
        },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < kEncoderStages; ++i) {
            s += (i ? "," : "") + std::to_string(c.model.channels[i]);
          }
          return s;
        }}},
      {"windows",
       {[](RunConfig& c, std::string_view v) {
          const auto parts = split(v, ',');
          if (parts.size() != kDecoderStages) {
            throw ConfigError("windows needs " + std::to_string(kDecoderStages) + " entries");
          }
          for (std::size_t i = 0; i < parts.size(); ++i) {
            const auto mn = split(parts[i], 'x');
            if (mn.size() != 2) throw ConfigError("window must look like 7x7");
            c.model.windows[i] = {count(mn[0]), count(mn[1])};
          }
        },
        [](const RunConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < kDecoderStages; ++i) {
            s += (i ? "," : "") + std::to_string(c.model.windows[i][0]) + "x" +
                 std::to_string(c.model.windows[i][1]);
          }
          return s;
        }}},
      {"d_state",
       {[](RunConfig& c, std::string_view v) { c.model.d_state = count(v); },
        [](const RunConfig& c) { return std::to_string(c.model.d_state); }}},
      {"expand",
       {[](RunConfig& c, std::string_view v) { c.model.expand = count(v); },
        [](const RunConfig& c) { return std::to_string(c.model.expand); }}},
      {"conv_width",
       {[](RunConfig& c, std::string_view v) { c.model.conv_width = count(v); },
        [](const RunConfig& c) { return std::to_string(c.model.conv_width); }}},
      {"msaa_placement",
       {[](RunConfig& c, std::string_view v) {
          if (v == "middle") c.model.msaa_placement = MsaaPlacement::kMiddle;
          else if (v == "top") c.model.msaa_placement = MsaaPlacement::kTop;
          else throw ConfigError("msaa_placement must be middle or top");
        },
        [](const RunConfig& c) {
          return std::string(c.model.msaa_placement == MsaaPlacement::kMiddle ? "middle" : "top");
        }}},
      {"msaa_pooling",
       {[](RunConfig& c, std::string_view v) {
          if (v == "local") c.model.msaa_pooling = MsaaPooling::kLocal;
          else if (v == "channel") c.model.msaa_pooling = MsaaPooling::kChannel;
          else throw ConfigError("msaa_pooling must be local or channel");
        },
        [](const RunConfig& c) {
          return std::string(c.model.msaa_pooling == MsaaPooling::kLocal ? "local" : "channel");
        }}},
      {"use_lms",
       {[](RunConfig& c, std::string_view v) { c.model.use_lms = boolean(v); },
        [](const RunConfig& c) { return fmt(c.model.use_lms); }}},
      {"use_aux",
       {[](RunConfig& c, std::string_view v) { c.model.use_aux = boolean(v); },
        [](const RunConfig& c) { return fmt(c.model.use_aux); }}},
      {"use_msaa",
       {[](RunConfig& c, std::string_view v) { c.model.use_msaa = boolean(v); },
        [](const RunConfig& c) { return fmt(c.model.use_msaa); }}},
      {"seed",
       {[](RunConfig& c, std::string_view v) { c.model.seed = number<std::uint64_t>(v); },
        [](const RunConfig& c) { return std::to_string(c.model.seed); }}},
      {"epsilon",
       {[](RunConfig& c, std::string_view v) { c.model.epsilon = real_value(v); },
        [](const RunConfig& c) { return fmt(c.model.epsilon); }}},
      {"dice_smooth",
       {[](RunConfig& c, std::string_view v) { c.model.dice_smooth = real_value(v); },
        [](const RunConfig& c) { return fmt(c.model.dice_smooth); }}},
      {"xce_weight",
       {[](RunConfig& c, std::string_view v) { c.model.xce_weight = real_value(v); },
        [](const RunConfig& c) { return fmt(c.model.xce_weight); }}},
      {"dice_weight",
       {[](RunConfig& c, std::string_view v) { c.model.dice_weight = real_value(v); },
        [](const RunConfig& c) { return fmt(c.model.dice_weight); }}},
      {"lr",
       {[](RunConfig& c, std::string_view v) { c.train.adam.lr = real_value(v); },
        [](const RunConfig& c) { return fmt(c.train.adam.lr); }}},
      {"beta1",
       {[](RunConfig& c, std::string_view v) { c.train.adam.beta1 = real_value(v); },
        [](const RunConfig& c) { return fmt(c.train.adam.beta1); }}},
      {"beta2",
       {[](RunConfig& c, std::string_view v) { c.train.adam.beta2 = real_value(v); },
        [](const RunConfig& c) { return fmt(c.train.adam.beta2); }}},
      {"adam_eps",
       {[](RunConfig& c, std::string_view v) { c.train.adam.eps = real_value(v); },
        [](const RunConfig& c) { return fmt(c.train.adam.eps); }}},
      {"batch_size",
       {[](RunConfig& c, std::string_view v) { c.train.batch_size = count(v); },
        [](const RunConfig& c) { return std::to_string(c.train.batch_size); }}},
      {"steps",
       {[](RunConfig& c, std::string_view v) { c.train.steps = number<std::size_t>(v); },
        [](const RunConfig& c) { return std::to_string(c.train.steps); }}},
      {"log_every",
       {[](RunConfig& c, std::string_view v) { c.train.log_every = count(v); },
        [](const RunConfig& c) { return std::to_string(c.train.log_every); }}},
  };
  return table;
}

}  // namespace

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + std::string(key) + "'");
    }
    try {
      it->second.set(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + " (" +
                        std::string(key) + "): " + e.what());
    }
  }
  base.model.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    out += key + " = " + field.get(config) + "\n";
  }
  return out;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
