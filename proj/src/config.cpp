#include "dcdsm/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "dcdsm/error.hpp"
#include "dcdsm/rng.hpp"

namespace dcdsm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidArgument("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidArgument("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidArgument("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("config key '" + key + "': expected true or false, got '" + v + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define DCDSM_DOUBLE(k, m) \
  Field { k, [](const TrainConfig& c) { return fmt_double(c.m); }, [](TrainConfig& c, const std::string& v) { c.m = to_double(k, v); } }
#define DCDSM_SIZE(k, m) \
  Field { k, [](const TrainConfig& c) { return std::to_string(c.m); }, [](TrainConfig& c, const std::string& v) { c.m = static_cast<decltype(c.m)>(to_uint(k, v)); } }
#define DCDSM_INT(k, m) \
  Field { k, [](const TrainConfig& c) { return std::to_string(c.m); }, [](TrainConfig& c, const std::string& v) { c.m = to_int(k, v); } }
#define DCDSM_BOOL(k, m) \
  Field { k, [](const TrainConfig& c) { return std::string(c.m ? "true" : "false"); }, [](TrainConfig& c, const std::string& v) { c.m = to_bool(k, v); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      Field{"dataset.kind", [](const TrainConfig& c) { return std::string(source_kind_name(c.dataset.kind)); },
            [](TrainConfig& c, const std::string& v) { c.dataset.kind = parse_source_kind(v); }},
      DCDSM_SIZE("dataset.train", dataset.train_count),
      DCDSM_SIZE("dataset.test", dataset.test_count),
      DCDSM_SIZE("dataset.size", dataset.size),
      DCDSM_SIZE("dataset.seed", dataset.seed),
      DCDSM_DOUBLE("dataset.a_min", dataset.a_min),
      DCDSM_DOUBLE("dataset.a_max", dataset.a_max),
      DCDSM_DOUBLE("dataset.tau", dataset.tau),
      DCDSM_INT("schedule.T", T),
      DCDSM_DOUBLE("schedule.beta_start", beta_start),
      DCDSM_DOUBLE("schedule.beta_end", beta_end),
      DCDSM_SIZE("model.base_width", base_width),
      DCDSM_SIZE("model.depth", depth),
      DCDSM_SIZE("model.convs_per_level", convs_per_level),
      DCDSM_SIZE("model.time_embed_dim", time_embed_dim),
      DCDSM_SIZE("wfen.feature_channels", wfen_features),
      DCDSM_SIZE("wfen.unet_width", wfen_width),
      DCDSM_SIZE("wfca.grid_h", wfca_grid_h),
      DCDSM_SIZE("wfca.grid_w", wfca_grid_w),
      DCDSM_SIZE("wfca.hidden", wfca_hidden),
      DCDSM_DOUBLE("gamma", gamma),
      DCDSM_INT("alpha_index", alpha_index),
      DCDSM_DOUBLE("lr", lr),
      DCDSM_DOUBLE("beta1", beta1),
      DCDSM_DOUBLE("beta2", beta2),
      DCDSM_DOUBLE("adam_eps", adam_eps),
      DCDSM_SIZE("batch_size", batch_size),
      DCDSM_SIZE("max_iterations", max_iterations),
      DCDSM_SIZE("patience", patience),
      DCDSM_SIZE("val_interval", val_interval),
      DCDSM_SIZE("val_count", val_count),
      DCDSM_SIZE("seed", seed),
      DCDSM_BOOL("wsm_enabled", wsm_enabled),
      DCDSM_BOOL("clean_reference", clean_reference),
      DCDSM_BOOL("alpha_bar_mean", alpha_bar_mean),
      Field{"wfen_input",
            [](const TrainConfig& c) { return std::string(c.wfen_input == WfenInput::Forward ? "forward" : "reverse"); },
            [](TrainConfig& c, const std::string& v) {
              if (v == "forward") c.wfen_input = WfenInput::Forward;
              else if (v == "reverse") c.wfen_input = WfenInput::Reverse;
              else throw InvalidArgument("config key 'wfen_input': expected forward or reverse, got '" + v + "'");
            }},
  };
  return f;
}

#undef DCDSM_DOUBLE
#undef DCDSM_SIZE
#undef DCDSM_INT
#undef DCDSM_BOOL

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", pos);
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) throw ParseError("config: empty key or value", pos);
      if (!out.emplace(key, value).second) throw ParseError("config: key '" + key + "' given twice", pos);
    }
    pos = end + 1;
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void TrainConfig::validate() const {
  dataset.validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("config: " + what);
  };
  require(T >= 1, "schedule.T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "need 0 < schedule.beta_start <= schedule.beta_end < 1");
  require(base_width >= 1 && depth >= 1 && convs_per_level >= 1,
          "model.base_width, model.depth and model.convs_per_level must be >= 1");
  require(dataset.size % (std::size_t{1} << depth) == 0, "dataset.size must be divisible by 2^model.depth");
  require(time_embed_dim % 2 == 0, "model.time_embed_dim must be even");
  require(wfen_features >= 1 && wfen_width >= 1, "wfen widths must be >= 1");
  require(wfca_grid_h >= 1 && wfca_grid_w >= 1 && (dataset.size / 2) % wfca_grid_h == 0 &&
              (dataset.size / 2) % wfca_grid_w == 0,
          "wfca grid must divide the subband size dataset.size/2");
  require(gamma > 0.0, "gamma must be positive");
  require(alpha_index >= 0 && alpha_index <= 10, "alpha_index must lie in [0, 10]");
  require(lr >= 0.0, "lr must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "beta1 and beta2 must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(val_interval >= 1, "val_interval must be >= 1");
  require(val_count >= 1, "val_count must be >= 1");
  require(dataset.train_count >= 1, "dataset.train must be >= 1");
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(to_text()); }

TrainConfig TrainConfig::parse(const std::string& text) {
  const auto kv = parse_key_values(text);
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const auto& f : fields())
      if (key == f.key) {
        f.set(c, value);
        found = true;
        break;
      }
    if (!found) throw InvalidArgument("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

std::vector<std::pair<std::string, std::string>> TrainConfig::defaults() {
  std::vector<std::pair<std::string, std::string>> out;
  const TrainConfig c;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(c));
  return out;
}

DatasetSpec parse_dataset_spec(const std::string& text) {
  const auto kv = parse_key_values(text);
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    if (key.rfind("dataset.", 0) != 0) throw InvalidArgument("dataset spec: unknown key '" + key + "'");
    bool found = false;
    for (const auto& f : fields())
      if (key == f.key) {
        f.set(c, value);
        found = true;
      }
    if (!found) throw InvalidArgument("dataset spec: unknown key '" + key + "'");
  }
  c.dataset.validate();
  return c.dataset;
}

std::string dataset_spec_text(const DatasetSpec& spec) {
  TrainConfig c;
  c.dataset = spec;
  std::string out;
  for (const auto& f : fields())
    if (std::string_view(f.key).starts_with("dataset.")) out += std::string(f.key) + " = " + f.get(c) + "\n";
  return out;
}

}  // namespace dcdsm
