#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "parsestack/geoscene.hpp"
#include "parsestack/net.hpp"
#include "parsestack/train.hpp"

namespace pstk {

// TOML-subset document: [section] headers and key = value lines, where value
// is a string, bool, integer, float, or a flat array of those. Parse errors
// carry line numbers.
class ConfigDoc {
 public:
  struct Value {
    enum class Kind { boolean, integer, real, string, array };
    Kind kind = Kind::string;
    bool b = false;
    int64_t i = 0;
    double d = 0.0;
    std::string s;
    std::vector<Value> items;
  };

  static ConfigDoc parse(const std::string& text);
  static ConfigDoc parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;

  int64_t get_int(const std::string& sec, const std::string& key, int64_t def) const;
  double get_real(const std::string& sec, const std::string& key, double def) const;
  bool get_bool(const std::string& sec, const std::string& key, bool def) const;
  std::string get_string(const std::string& sec, const std::string& key,
                         const std::string& def) const;
  std::vector<int64_t> get_int_array(const std::string& sec, const std::string& key) const;
  std::vector<double> get_real_array(const std::string& sec, const std::string& key) const;
  std::vector<bool> get_bool_array(const std::string& sec, const std::string& key) const;

  // Rejects any (section, key) pair not in the allowed list.
  void require_known(
      const std::map<std::string, std::vector<std::string>>& allowed) const;

 private:
  const Value* find(const std::string& sec, const std::string& key) const;
  std::map<std::string, std::map<std::string, Value>> sections_;
};

// The single declarative run configuration: dataset recipe, architecture,
// and training budget. Flag overrides are applied by the CLI before
// validation; every run archives the fully resolved form.
struct RunConfig {
  // [data]
  std::string hierarchy_path = "geoscene.hier";
  GeoSceneSpec scene;  // scene.count is ignored; train/val counts below
  int train_count = 200;
  int val_count = 50;

  // [encoder]
  EncoderConfig encoder;

  // [heads]
  int head_channels = 16;
  int head_conv_layers = 2;
  std::vector<int> taps;  // per level, 1-based encoder block, 0 = none

  // [train]
  TrainConfig train;

  int levels_used = 0;  // 0 = all hierarchy levels; N keeps the finest N

  static RunConfig defaults();
  static RunConfig from_doc(const ConfigDoc& doc);
  static RunConfig load_file(const std::string& path);

  std::string to_toml() const;

  // Whole-config validation against the bound hierarchy.
  void validate(const LabelHierarchy& h) const;
};

// Applies levels_used and returns the hierarchy actually trained on (the
// finest N levels).
LabelHierarchy effective_hierarchy(const LabelHierarchy& full, int levels_used);

StackedHeadConfig make_head_config(const RunConfig& cfg, const LabelHierarchy& h);

}  // namespace pstk
