#include "panet/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace panet::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("config: invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, v);
  }
  if (used != s.size()) bad_value(key, v);
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v);
}

template <typename Parse>
auto parse_enum(std::string_view key, std::string_view v, Parse parse) {
  try {
    return parse(v);
  } catch (const std::exception&) {
    bad_value(key, v);
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define PANET_UINT(key, member)                                                                              \
  {key, {[](TrainConfig& c, std::string_view v) { c.member = static_cast<decltype(c.member)>(to_uint(key, v)); }, \
         [](const TrainConfig& c) { return std::to_string(c.member); }}}
#define PANET_REAL(key, member)                                                        \
  {key, {[](TrainConfig& c, std::string_view v) { c.member = to_double(key, v); }, \
         [](const TrainConfig& c) { return fmt_double(c.member); }}}
#define PANET_BOOL(key, member)                                                      \
  {key, {[](TrainConfig& c, std::string_view v) { c.member = to_bool(key, v); }, \
         [](const TrainConfig& c) { return fmt_bool(c.member); }}}
#define PANET_FUSE(key, member)                                                                           \
  {key, {[](TrainConfig& c, std::string_view v) { c.member = parse_enum(key, v, parse_fuse_mode); }, \
         [](const TrainConfig& c) { return std::string(to_string(c.member)); }}}

// Ordered: to_text emits keys in this order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      PANET_UINT("seed", seed),
      PANET_UINT("steps", steps),
      PANET_REAL("learning_rate", learning_rate),
      PANET_UINT("warmup_steps", warmup_steps),
      PANET_REAL("lr_drop_at", lr_drop_at),
      PANET_REAL("lr_drop_factor", lr_drop_factor),
      PANET_REAL("momentum", momentum),
      PANET_REAL("weight_decay", weight_decay),
      PANET_UINT("images_per_step", images_per_step),
      PANET_UINT("rois_per_image", rois_per_image),
      PANET_REAL("positive_fraction", positive_fraction),
      PANET_UINT("train_scenes", train_scenes),
      PANET_UINT("eval_scenes", eval_scenes),
      PANET_UINT("eval_seed", eval_seed),
      PANET_UINT("image_size", image_size),
      PANET_UINT("max_instances", max_instances),
      PANET_REAL("proposal.jitter", proposal_jitter),
      PANET_UINT("proposal.copies", proposal_copies),
      PANET_UINT("proposal.negatives", proposal_negatives),
      PANET_REAL("eval.jitter", eval_jitter),
      {"backbone.channels",
       {[](TrainConfig& c, std::string_view v) {
          std::array<std::size_t, 4> ch{};
          std::size_t i = 0;
          while (!v.empty()) {
            const auto comma = v.find(',');
            if (i == 4) bad_value("backbone.channels", v);
            ch[i++] = to_uint("backbone.channels", trim(v.substr(0, comma)));
            v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
          }
          if (i != 4) bad_value("backbone.channels", v);
          c.backbone_channels = ch;
        },
        [](const TrainConfig& c) {
          const auto& b = c.backbone_channels;
          return std::to_string(b[0]) + "," + std::to_string(b[1]) + "," + std::to_string(b[2]) + "," +
                 std::to_string(b[3]);
        }}},
      PANET_BOOL("backbone.freeze", backbone_freeze),
      PANET_UINT("pyramid_channels", pyramid_channels),
      PANET_UINT("box.hidden_dim", box_hidden_dim),
      PANET_UINT("mask.conv_channels", mask_conv_channels),
      PANET_UINT("num_classes", num_classes),
      PANET_REAL("level_reference", level_reference),
      PANET_UINT("sampling_ratio", sampling_ratio),
      PANET_BOOL("bpa", bpa),
      PANET_BOOL("afp", afp),
      PANET_BOOL("ff", ff),
      {"hhd",
       {[](TrainConfig& c, std::string_view v) {
          c.box_variant = to_bool("hhd", v) ? BoxVariant::kHeavier : BoxVariant::kTwoFc;
        },
        [](const TrainConfig& c) { return fmt_bool(c.hhd()); }}},
      PANET_BOOL("mbn", mbn),
      PANET_FUSE("box.fusion_mode", box_fusion_mode),
      {"fusion_placement",
       {[](TrainConfig& c, std::string_view v) {
          c.fusion_placement = parse_enum("fusion_placement", v, parse_fusion_placement);
        },
        [](const TrainConfig& c) { return std::string(to_string(c.fusion_placement)); }}},
      PANET_FUSE("mask.fusion_mode", mask_fusion_mode),
      {"mask.fc_branch_start",
       {[](TrainConfig& c, std::string_view v) {
          c.mask_fc_branch_start = parse_enum("mask.fc_branch_start", v, parse_branch_start);
        },
        [](const TrainConfig& c) { return std::string(to_string(c.mask_fc_branch_start)); }}},
      PANET_FUSE("mask.fc_fusion_op", mask_fc_fusion_op),
      PANET_BOOL("heads.per_level_params", per_level_params),
      PANET_BOOL("sync_bn.everywhere", sync_bn_everywhere),
      PANET_UINT("sync_bn.shards", sync_bn_shards),
      PANET_UINT("log_every", log_every),
  };
  return table;
}

#undef PANET_UINT
#undef PANET_REAL
#undef PANET_BOOL
#undef PANET_FUSE

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(steps > 0, "steps must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(lr_drop_at > 0.0 && lr_drop_at <= 1.0, "lr_drop_at must be in (0, 1]");
  require(lr_drop_factor > 0.0, "lr_drop_factor must be positive");
  require(images_per_step > 0, "images_per_step must be positive");
  require(rois_per_image >= 4, "rois_per_image must be >= 4");
  require(positive_fraction > 0.0 && positive_fraction <= 1.0, "positive_fraction must be in (0, 1]");
  require(train_scenes > 0 && eval_scenes > 0, "scene counts must be positive");
  require(image_size > 0 && image_size % 32 == 0, "image_size must be a positive multiple of 32");
  require(max_instances > 0, "max_instances must be positive");
  require(proposal_jitter >= 0.0 && eval_jitter >= 0.0, "jitter must be non-negative");
  for (auto ch : backbone_channels) require(ch > 0, "backbone.channels must be positive");
  require(pyramid_channels > 0 && box_hidden_dim > 0 && mask_conv_channels >= 2, "head widths must be positive");
  require(num_classes > 0, "num_classes must be positive");
  require(level_reference > 0.0, "level_reference must be positive");
  require(sampling_ratio > 0, "sampling_ratio must be positive");
  require(sync_bn_shards > 0 && sync_bn_shards <= images_per_step,
          "sync_bn.shards must be in [1, images_per_step]");
}

void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not key=value");
    }
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + "=" + field.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : fields()) keys.push_back(name);
  return keys;
}

}  // namespace panet::harness
