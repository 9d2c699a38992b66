#include "parsestack/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "parsestack/io.hpp"

namespace pstk {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  fail(cat("config parse error at line ", line, ": ", msg));
}

ConfigDoc::Value parse_scalar(const std::string& tok, int line) {
  ConfigDoc::Value v;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.kind = ConfigDoc::Value::Kind::string;
    v.s = tok.substr(1, tok.size() - 2);
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.kind = ConfigDoc::Value::Kind::boolean;
    v.b = tok == "true";
    return v;
  }
  if (tok.find_first_of(".eE") != std::string::npos &&
      tok.find_first_not_of("+-0123456789.eE") == std::string::npos) {
    try {
      size_t pos = 0;
      v.d = std::stod(tok, &pos);
      if (pos != tok.size()) parse_fail(line, "bad number '" + tok + "'");
      v.kind = ConfigDoc::Value::Kind::real;
      return v;
    } catch (const std::exception&) {
      parse_fail(line, "bad number '" + tok + "'");
    }
  }
  if (tok.find_first_not_of("+-0123456789") == std::string::npos && !tok.empty()) {
    try {
      size_t pos = 0;
      v.i = std::stoll(tok, &pos);
      if (pos != tok.size()) parse_fail(line, "bad integer '" + tok + "'");
      v.kind = ConfigDoc::Value::Kind::integer;
      return v;
    } catch (const std::exception&) {
      parse_fail(line, "bad integer '" + tok + "'");
    }
  }
  parse_fail(line, "cannot parse value '" + tok + "' (quote strings)");
}

ConfigDoc::Value parse_value(const std::string& raw, int line) {
  const std::string tok = trim(raw);
  if (tok.empty()) parse_fail(line, "empty value");
  if (tok.front() == '[') {
    if (tok.back() != ']') parse_fail(line, "unterminated array");
    ConfigDoc::Value v;
    v.kind = ConfigDoc::Value::Kind::array;
    const std::string inner = tok.substr(1, tok.size() - 2);
    std::string cur;
    bool in_string = false;
    for (char c : inner) {
      if (c == '"') in_string = !in_string;
      if (c == ',' && !in_string) {
        if (!trim(cur).empty()) v.items.push_back(parse_scalar(trim(cur), line));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) v.items.push_back(parse_scalar(trim(cur), line));
    return v;
  }
  return parse_scalar(tok, line);
}

double as_real(const ConfigDoc::Value& v, const std::string& where) {
  using K = ConfigDoc::Value::Kind;
  if (v.kind == K::real) return v.d;
  if (v.kind == K::integer) return static_cast<double>(v.i);
  fail("config: expected a number for " + where);
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_fail(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) parse_fail(line_no, "empty section name");
      doc.sections_[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) parse_fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) parse_fail(line_no, "empty key");
    doc.sections_[section][key] = parse_value(line.substr(eq + 1), line_no);
  }
  return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const ConfigDoc::Value* ConfigDoc::find(const std::string& sec,
                                        const std::string& key) const {
  auto s = sections_.find(sec);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

int64_t ConfigDoc::get_int(const std::string& sec, const std::string& key,
                           int64_t def) const {
  const Value* v = find(sec, key);
  if (!v) return def;
  check(v->kind == Value::Kind::integer,
        cat("config: [", sec, "] ", key, " must be an integer"));
  return v->i;
}

double ConfigDoc::get_real(const std::string& sec, const std::string& key,
                           double def) const {
  const Value* v = find(sec, key);
  if (!v) return def;
  return as_real(*v, cat("[", sec, "] ", key));
}

bool ConfigDoc::get_bool(const std::string& sec, const std::string& key,
                         bool def) const {
  const Value* v = find(sec, key);
  if (!v) return def;
  check(v->kind == Value::Kind::boolean,
        cat("config: [", sec, "] ", key, " must be true or false"));
  return v->b;
}

std::string ConfigDoc::get_string(const std::string& sec, const std::string& key,
                                  const std::string& def) const {
  const Value* v = find(sec, key);
  if (!v) return def;
  check(v->kind == Value::Kind::string,
        cat("config: [", sec, "] ", key, " must be a quoted string"));
  return v->s;
}

std::vector<int64_t> ConfigDoc::get_int_array(const std::string& sec,
                                              const std::string& key) const {
  const Value* v = find(sec, key);
  std::vector<int64_t> out;
  if (!v) return out;
  check(v->kind == Value::Kind::array, cat("config: [", sec, "] ", key, " must be an array"));
  for (const Value& it : v->items) {
    check(it.kind == Value::Kind::integer,
          cat("config: [", sec, "] ", key, " must hold integers"));
    out.push_back(it.i);
  }
  return out;
}

std::vector<double> ConfigDoc::get_real_array(const std::string& sec,
                                              const std::string& key) const {
  const Value* v = find(sec, key);
  std::vector<double> out;
  if (!v) return out;
  check(v->kind == Value::Kind::array, cat("config: [", sec, "] ", key, " must be an array"));
  for (const Value& it : v->items) out.push_back(as_real(it, cat("[", sec, "] ", key)));
  return out;
}

std::vector<bool> ConfigDoc::get_bool_array(const std::string& sec,
                                            const std::string& key) const {
  const Value* v = find(sec, key);
  std::vector<bool> out;
  if (!v) return out;
  check(v->kind == Value::Kind::array, cat("config: [", sec, "] ", key, " must be an array"));
  for (const Value& it : v->items) {
    check(it.kind == Value::Kind::boolean,
          cat("config: [", sec, "] ", key, " must hold booleans"));
    out.push_back(it.b);
  }
  return out;
}

void ConfigDoc::require_known(
    const std::map<std::string, std::vector<std::string>>& allowed) const {
  for (const auto& [sec, keys] : sections_) {
    auto a = allowed.find(sec);
    if (a == allowed.end()) fail(cat("config: unknown section [", sec, "]"));
    for (const auto& [key, value] : keys)
      if (std::find(a->second.begin(), a->second.end(), key) == a->second.end())
        fail(cat("config: unknown key '", key, "' in section [", sec, "]"));
  }
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.scene = GeoSceneSpec::defaults();
  // Desk-scale default: 4 blocks, 8x total downsampling, taps from blocks 2
  // and 1 for the medium and fine heads.
  cfg.encoder.blocks = {{16, 1, true}, {32, 1, true}, {64, 1, true}, {64, 1, false}};
  cfg.taps = {0, 2, 1};
  cfg.train = TrainConfig{};
  return cfg;
}

RunConfig RunConfig::from_doc(const ConfigDoc& doc) {
  doc.require_known({
      {"data",
       {"hierarchy", "image_size", "seed", "train_count", "val_count",
        "position_jitter", "scale_jitter", "rotation_jitter_deg", "noise_amp",
        "decoy_prob", "palette"}},
      {"encoder", {"channels", "conv_layers", "downsample"}},
      {"heads", {"head_channels", "head_conv_layers", "taps"}},
      {"train",
       {"epochs", "batch_size", "lr", "momentum", "loss_weights", "seed", "mode",
        "snapshot_every", "eval_every", "lr_decay_at", "lr_decay_factor"}},
  });

  RunConfig cfg = defaults();
  cfg.hierarchy_path = doc.get_string("data", "hierarchy", cfg.hierarchy_path);
  cfg.scene.image_size =
      static_cast<int>(doc.get_int("data", "image_size", cfg.scene.image_size));
  cfg.scene.seed = static_cast<uint64_t>(doc.get_int("data", "seed", 7));
  cfg.train_count = static_cast<int>(doc.get_int("data", "train_count", cfg.train_count));
  cfg.val_count = static_cast<int>(doc.get_int("data", "val_count", cfg.val_count));
  cfg.scene.position_jitter =
      doc.get_real("data", "position_jitter", cfg.scene.position_jitter);
  cfg.scene.scale_jitter = doc.get_real("data", "scale_jitter", cfg.scene.scale_jitter);
  cfg.scene.rotation_jitter_deg =
      doc.get_real("data", "rotation_jitter_deg", cfg.scene.rotation_jitter_deg);
  cfg.scene.noise_amp = doc.get_real("data", "noise_amp", cfg.scene.noise_amp);
  cfg.scene.decoy_prob = doc.get_real("data", "decoy_prob", cfg.scene.decoy_prob);
  if (doc.has("data", "palette")) {
    const std::vector<double> flat = doc.get_real_array("data", "palette");
    check(flat.size() % 3 == 0, "config: [data] palette length must be a multiple of 3");
    cfg.scene.palette.clear();
    for (size_t i = 0; i + 2 < flat.size(); i += 3)
      cfg.scene.palette.push_back({static_cast<float>(flat[i]),
                                   static_cast<float>(flat[i + 1]),
                                   static_cast<float>(flat[i + 2])});
  }

  if (doc.has("encoder", "channels")) {
    const std::vector<int64_t> ch = doc.get_int_array("encoder", "channels");
    std::vector<int64_t> convs;
    std::vector<bool> down;
    if (doc.has("encoder", "conv_layers"))
      convs = doc.get_int_array("encoder", "conv_layers");
    else
      convs.assign(ch.size(), 1);
    if (doc.has("encoder", "downsample")) {
      down = doc.get_bool_array("encoder", "downsample");
    } else {
      down.assign(ch.size(), true);
      if (!down.empty()) down.back() = false;
    }
    check(convs.size() == ch.size() && down.size() == ch.size(),
          "config: [encoder] channels/conv_layers/downsample lengths differ");
    cfg.encoder.blocks.clear();
    for (size_t i = 0; i < ch.size(); ++i)
      cfg.encoder.blocks.push_back({static_cast<int>(ch[i]),
                                    static_cast<int>(convs[i]),
                                    static_cast<bool>(down[i])});
  }

  cfg.head_channels =
      static_cast<int>(doc.get_int("heads", "head_channels", cfg.head_channels));
  cfg.head_conv_layers =
      static_cast<int>(doc.get_int("heads", "head_conv_layers", cfg.head_conv_layers));
  if (doc.has("heads", "taps")) {
    cfg.taps.clear();
    for (int64_t t : doc.get_int_array("heads", "taps"))
      cfg.taps.push_back(static_cast<int>(t));
  }

  cfg.train.epochs = static_cast<int>(doc.get_int("train", "epochs", cfg.train.epochs));
  cfg.train.batch_size =
      static_cast<int>(doc.get_int("train", "batch_size", cfg.train.batch_size));
  cfg.train.lr = doc.get_real("train", "lr", cfg.train.lr);
  cfg.train.momentum = doc.get_real("train", "momentum", cfg.train.momentum);
  if (doc.has("train", "loss_weights"))
    cfg.train.loss_weights = doc.get_real_array("train", "loss_weights");
  cfg.train.seed = static_cast<uint64_t>(doc.get_int("train", "seed", 1));
  cfg.train.mode =
      arch_mode_from_string(doc.get_string("train", "mode", to_string(cfg.train.mode)));
  cfg.train.snapshot_every =
      static_cast<int>(doc.get_int("train", "snapshot_every", cfg.train.snapshot_every));
  cfg.train.eval_every =
      static_cast<int>(doc.get_int("train", "eval_every", cfg.train.eval_every));
  if (doc.has("train", "lr_decay_at"))
    cfg.train.lr_decay_at = doc.get_real_array("train", "lr_decay_at");
  cfg.train.lr_decay_factor =
      doc.get_real("train", "lr_decay_factor", cfg.train.lr_decay_factor);
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  return from_doc(ConfigDoc::parse_file(path));
}

std::string RunConfig::to_toml() const {
  std::ostringstream os;
  os << "[data]\n";
  os << "hierarchy = \"" << hierarchy_path << "\"\n";
  os << "image_size = " << scene.image_size << "\n";
  os << "seed = " << scene.seed << "\n";
  os << "train_count = " << train_count << "\n";
  os << "val_count = " << val_count << "\n";
  os << "position_jitter = " << format_double(scene.position_jitter) << "\n";
  os << "scale_jitter = " << format_double(scene.scale_jitter) << "\n";
  os << "rotation_jitter_deg = " << format_double(scene.rotation_jitter_deg) << "\n";
  os << "noise_amp = " << format_double(scene.noise_amp) << "\n";
  os << "decoy_prob = " << format_double(scene.decoy_prob) << "\n";
  os << "palette = [";
  for (size_t i = 0; i < scene.palette.size(); ++i)
    for (int c = 0; c < 3; ++c)
      os << (i == 0 && c == 0 ? "" : ", ")
         << format_double(static_cast<double>(scene.palette[i][static_cast<size_t>(c)]));
  os << "]\n\n";

  os << "[encoder]\n";
  os << "channels = [";
  for (size_t i = 0; i < encoder.blocks.size(); ++i)
    os << (i ? ", " : "") << encoder.blocks[i].channels;
  os << "]\nconv_layers = [";
  for (size_t i = 0; i < encoder.blocks.size(); ++i)
    os << (i ? ", " : "") << encoder.blocks[i].conv_layers;
  os << "]\ndownsample = [";
  for (size_t i = 0; i < encoder.blocks.size(); ++i)
    os << (i ? ", " : "") << (encoder.blocks[i].downsample ? "true" : "false");
  os << "]\n\n";

  os << "[heads]\n";
  os << "head_channels = " << head_channels << "\n";
  os << "head_conv_layers = " << head_conv_layers << "\n";
  os << "taps = [";
  for (size_t i = 0; i < taps.size(); ++i) os << (i ? ", " : "") << taps[i];
  os << "]\n\n";

  os << "[train]\n";
  os << "epochs = " << train.epochs << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "lr = " << format_double(train.lr) << "\n";
  os << "momentum = " << format_double(train.momentum) << "\n";
  if (!train.loss_weights.empty()) {
    os << "loss_weights = [";
    for (size_t i = 0; i < train.loss_weights.size(); ++i)
      os << (i ? ", " : "") << format_double(train.loss_weights[i]);
    os << "]\n";
  }
  os << "seed = " << train.seed << "\n";
  os << "mode = \"" << to_string(train.mode) << "\"\n";
  os << "snapshot_every = " << train.snapshot_every << "\n";
  os << "eval_every = " << train.eval_every << "\n";
  os << "lr_decay_at = [";
  for (size_t i = 0; i < train.lr_decay_at.size(); ++i)
    os << (i ? ", " : "") << format_double(train.lr_decay_at[i]);
  os << "]\n";
  os << "lr_decay_factor = " << format_double(train.lr_decay_factor) << "\n";
  return os.str();
}

void RunConfig::validate(const LabelHierarchy& h) const {
  scene.validate();
  check(train_count >= 1 && val_count >= 0, "config: dataset counts must be positive");
  encoder.validate();
  check(head_channels > 0 && head_conv_layers >= 1, "config: bad head geometry");
  check(taps.size() == static_cast<size_t>(h.num_levels()),
        cat("config: taps has ", taps.size(), " entries but the hierarchy has ",
            h.num_levels(), " levels"));
  const StackedHeadConfig heads = make_head_config(*this, h);
  heads.validate(encoder, train.mode == ArchMode::standalone ||
                                  train.mode == ArchMode::stack_full
                              ? ArchMode::stack_fc
                              : train.mode);
  train.validate(h.num_levels());
  const int factor = encoder.downsample_factor();
  check(scene.image_size % factor == 0,
        cat("config: image_size ", scene.image_size,
            " must be divisible by the encoder downsampling factor ", factor));
}

LabelHierarchy effective_hierarchy(const LabelHierarchy& full, int levels_used) {
  if (levels_used <= 0 || levels_used >= full.num_levels()) return full;
  LabelHierarchy h;
  h.levels.assign(full.levels.end() - levels_used, full.levels.end());
  validate(h);
  return h;
}

StackedHeadConfig make_head_config(const RunConfig& cfg, const LabelHierarchy& h) {
  StackedHeadConfig heads;
  heads.head_channels = cfg.head_channels;
  heads.head_conv_layers = cfg.head_conv_layers;
  for (int k = 0; k < h.num_levels(); ++k) {
    const int tap = k < static_cast<int>(cfg.taps.size())
                        ? cfg.taps[static_cast<size_t>(k)]
                        : 0;
    heads.levels.push_back({h.num_classes(k), tap});
  }
  return heads;
}

}  // namespace pstk
