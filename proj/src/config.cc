#include "zgen/config.h"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>

#include "zgen/error.h"
#include "zgen/table.h"

namespace zgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void RejectUnknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T Get(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

double ParseCutoff(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    if (auto t = ParseIsoDatetime(value.get<std::string>())) return *t;
  }
  throw ConfigError("cutoff must be an ISO-8601 date or epoch seconds");
}

GeneratorKind ParseGenerator(const std::string& text, const std::string& where) {
  if (text == "none") return GeneratorKind::kNone;
  if (text == "gan") return GeneratorKind::kGan;
  if (text == "bootstrap") return GeneratorKind::kBootstrap;
  if (text == "csv") return GeneratorKind::kCsv;
  throw ConfigError(where + ": unknown generator '" + text + "'");
}

std::string GeneratorName(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kNone: return "none";
    case GeneratorKind::kGan: return "gan";
    case GeneratorKind::kBootstrap: return "bootstrap";
    case GeneratorKind::kCsv: return "csv";
  }
  return "none";
}

void RequireFile(const fs::path& path, const std::string& what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw ConfigError(what + " not found: " + path.string());
  }
}

}  // namespace

RunConfig ParseRunConfig(const json& j, const fs::path& base_dir) {
  RejectUnknown(j, {"seed", "data", "split", "augment_rows", "gan", "gbdt", "target_model",
                    "cvae", "outliers", "generate", "protocol", "oos", "oot", "sweep",
                    "correlate", "out_dir"},
                "config");
  RunConfig c;
  c.seed = Get<std::uint64_t>(j, "seed", 42, "config");

  if (!j.contains("data")) throw ConfigError("config: 'data' section is required");
  const json& data = j.at("data");
  RejectUnknown(data, {"schema", "train", "test"}, "data");
  if (!data.contains("schema") || !data.contains("train")) {
    throw ConfigError("data: 'schema' and 'train' are required");
  }
  c.schema = Resolve(base_dir, Get<std::string>(data, "schema", "", "data"));
  c.train = Resolve(base_dir, Get<std::string>(data, "train", "", "data"));
  if (data.contains("test")) c.test = Resolve(base_dir, Get<std::string>(data, "test", "", "data"));

  if (j.contains("split")) {
    const json& s = j.at("split");
    RejectUnknown(s, {"mode", "test_fraction", "train_fraction", "cutoff"}, "split");
    const auto mode = Get<std::string>(s, "mode", "none", "split");
    if (mode == "none") c.split.mode = SplitMode::kNone;
    else if (mode == "oos") c.split.mode = SplitMode::kOutOfSample;
    else if (mode == "oot") c.split.mode = SplitMode::kOutOfTime;
    else if (mode == "cutoff") c.split.mode = SplitMode::kCutoff;
    else throw ConfigError("split: unknown mode '" + mode + "'");
    c.split.test_fraction = Get<double>(s, "test_fraction", 0.33, "split");
    c.split.train_fraction = Get<double>(s, "train_fraction", 0.8, "split");
    if (s.contains("cutoff")) c.split.cutoff = ParseCutoff(s.at("cutoff"));
    if (!(c.split.test_fraction > 0.0 && c.split.test_fraction < 1.0)) {
      throw ConfigError("split: test_fraction must lie in (0, 1)");
    }
    if (!(c.split.train_fraction > 0.0 && c.split.train_fraction < 1.0)) {
      throw ConfigError("split: train_fraction must lie in (0, 1)");
    }
    if (c.split.mode == SplitMode::kCutoff && !c.split.cutoff) {
      throw ConfigError("split: cutoff mode needs a cutoff");
    }
  }
  if (c.split.mode != SplitMode::kNone && c.test) {
    throw ConfigError("config: give either data.test or a split, not both");
  }
  c.augment_rows = Get<std::size_t>(j, "augment_rows", 0, "config");

  if (j.contains("gan")) c.gan = GanConfigFromJson(j.at("gan"));
  ValidateGanConfig(c.gan);
  if (j.contains("gbdt")) c.gbdt = GbdtConfigFromJson(j.at("gbdt"));
  ValidateGbdtConfig(c.gbdt);
  if (j.contains("target_model")) {
    const json& t = j.at("target_model");
    if (t.is_boolean()) {
      c.fit_target_model = t.get<bool>();
    } else {
      c.target_model = GbdtConfigFromJson(t);
    }
  }
  ValidateGbdtConfig(c.target_model);
  if (j.contains("cvae")) {
    const json& v = j.at("cvae");
    if (v.is_boolean()) {
      c.fit_cvae = v.get<bool>();
    } else {
      c.fit_cvae = true;
      c.cvae = CvaeConfigFromJson(v);
    }
  }
  ValidateCvaeConfig(c.cvae);
  if (j.contains("outliers")) {
    c.outliers = OutlierSpecFromJson(j.at("outliers"));
    ValidateOutlierSpec(*c.outliers);
    if (c.outliers->cov_source == CovSource::kFromCvae) c.fit_cvae = true;
  }

  if (j.contains("generate")) {
    const json& g = j.at("generate");
    RejectUnknown(g, {"rows", "filter"}, "generate");
    c.generate_rows = Get<std::size_t>(g, "rows", 4000, "generate");
    c.filter = Get<bool>(g, "filter", true, "generate");
  }

  c.protocol = Get<std::string>(j, "protocol", "oos", "config");
  if (c.protocol != "oos" && c.protocol != "oot" && c.protocol != "sweep" &&
      c.protocol != "correlate") {
    throw ConfigError("config: unknown protocol '" + c.protocol + "'");
  }

  if (j.contains("oos")) {
    const json& o = j.at("oos");
    RejectUnknown(o, {"generator", "synthetic_csv", "iterations", "subsample"}, "oos");
    c.oos_generator = ParseGenerator(Get<std::string>(o, "generator", "none", "oos"), "oos");
    if (o.contains("synthetic_csv")) {
      c.synthetic_csv = Resolve(base_dir, Get<std::string>(o, "synthetic_csv", "", "oos"));
    }
    c.iterations = Get<int>(o, "iterations", 51, "oos");
    c.subsample = Get<double>(o, "subsample", 0.8, "oos");
    if (c.oos_generator == GeneratorKind::kCsv && !c.synthetic_csv) {
      throw ConfigError("oos: csv generator needs synthetic_csv");
    }
    if (c.oos_generator == GeneratorKind::kBootstrap) {
      throw ConfigError("oos: generator must be none, gan or csv");
    }
  }
  if (c.iterations < 1) throw ConfigError("oos: iterations must be positive");
  if (!(c.subsample > 0.0 && c.subsample <= 1.0)) {
    throw ConfigError("oos: subsample must lie in (0, 1]");
  }

  if (j.contains("oot")) {
    const json& o = j.at("oot");
    RejectUnknown(o, {"train_fractions", "pool_rows", "generator", "ratios"}, "oot");
    c.oot.train_fractions = Get<std::vector<double>>(o, "train_fractions", c.oot.train_fractions, "oot");
    c.oot.pool_rows = Get<std::size_t>(o, "pool_rows", c.oot.pool_rows, "oot");
    c.generator = ParseGenerator(Get<std::string>(o, "generator", "gan", "oot"), "oot");
    if (o.contains("ratios")) {
      c.oot.ratios.clear();
      for (const json& r : o.at("ratios")) {
        RejectUnknown(r, {"name", "ratio", "pure_synthetic"}, "oot.ratios");
        MixRatio m;
        m.ratio = Get<double>(r, "ratio", 0.0, "oot.ratios");
        m.pure_synthetic = Get<bool>(r, "pure_synthetic", false, "oot.ratios");
        m.name = Get<std::string>(r, "name", FormatNumber(m.ratio) + ":1", "oot.ratios");
        if (!(m.ratio >= 0.0)) throw ConfigError("oot.ratios: ratio must be non-negative");
        c.oot.ratios.push_back(m);
      }
    }
    for (double f : c.oot.train_fractions) {
      if (!(f > 0.0 && f < 1.0)) throw ConfigError("oot: train fractions must lie in (0, 1)");
    }
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    RejectUnknown(s, {"levels", "datasets", "rows_per_dataset", "cutoff", "train_fraction",
                      "generator"},
                  "sweep");
    c.sweep.levels = Get<std::vector<double>>(s, "levels", c.sweep.levels, "sweep");
    c.sweep.datasets = Get<int>(s, "datasets", c.sweep.datasets, "sweep");
    c.sweep.rows_per_dataset = Get<std::size_t>(s, "rows_per_dataset", c.sweep.rows_per_dataset, "sweep");
    if (s.contains("cutoff")) c.sweep.cutoff = ParseCutoff(s.at("cutoff"));
    c.sweep.train_fraction = Get<double>(s, "train_fraction", c.sweep.train_fraction, "sweep");
    if (s.contains("generator")) {
      c.generator = ParseGenerator(Get<std::string>(s, "generator", "gan", "sweep"), "sweep");
    }
    for (double l : c.sweep.levels) {
      if (!(l >= 0.0 && l <= 100.0)) throw ConfigError("sweep: levels must lie in [0, 100]");
    }
    if (c.sweep.datasets < 1) throw ConfigError("sweep: datasets must be positive");
  }
  if (c.generator == GeneratorKind::kNone || c.generator == GeneratorKind::kCsv) {
    throw ConfigError("oot/sweep generator must be gan or bootstrap");
  }
  if (c.protocol == "sweep" && !c.outliers) {
    throw ConfigError("sweep protocol needs an 'outliers' section");
  }

  if (j.contains("correlate")) {
    const json& r = j.at("correlate");
    RejectUnknown(r, {"synthetic", "scale"}, "correlate");
    for (const auto& p : Get<std::vector<std::string>>(r, "synthetic", {}, "correlate")) {
      c.correlate_synthetic.push_back(Resolve(base_dir, p));
    }
    if (r.contains("scale")) {
      const auto scale = Get<std::vector<double>>(r, "scale", {}, "correlate");
      if (scale.size() != 2) throw ConfigError("correlate.scale must hold two numbers");
      c.heatmap_scale = {scale[0], scale[1]};
    }
    if (!(c.heatmap_scale.lo < c.heatmap_scale.hi)) {
      throw ConfigError("correlate.scale: lo must be below hi");
    }
  }

  c.out_dir = Resolve(base_dir, Get<std::string>(j, "out_dir", "out", "config"));
  c.raw = j;
  return c;
}

void ApplySeedOverride(RunConfig& config, const char* env_value) {
  if (env_value == nullptr || *env_value == '\0') return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env_value, &end, 10);
  if (errno != 0 || *end != '\0' || env_value[0] == '-') {
    throw ConfigError(std::string("ZGEN_SEED is not an unsigned integer: ") + env_value);
  }
  config.seed = v;
}

RunConfig LoadRunConfig(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = ParseRunConfig(j, fs::absolute(path).parent_path());
  c.config_path = path;
  ApplySeedOverride(c, std::getenv("ZGEN_SEED"));
  return c;
}

void ValidateRunConfig(const RunConfig& c) {
  RequireFile(c.schema, "schema file");
  RequireFile(c.train, "data file");
  if (c.test) RequireFile(*c.test, "test data file");
  if (c.synthetic_csv) RequireFile(*c.synthetic_csv, "synthetic data file");
  for (const auto& p : c.correlate_synthetic) RequireFile(p, "synthetic data file");
}

json EffectiveConfig(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"schema", c.schema.filename().string()}, {"train", c.train.filename().string()}};
  if (c.test) j["data"]["test"] = c.test->filename().string();
  const char* modes[] = {"none", "oos", "oot", "cutoff"};
  j["split"] = {{"mode", modes[static_cast<int>(c.split.mode)]},
                {"test_fraction", c.split.test_fraction},
                {"train_fraction", c.split.train_fraction}};
  if (c.split.cutoff) j["split"]["cutoff"] = *c.split.cutoff;
  j["augment_rows"] = c.augment_rows;
  j["gan"] = GanConfigToJson(c.gan);
  j["gbdt"] = GbdtConfigToJson(c.gbdt);
  j["target_model"] = c.fit_target_model ? GbdtConfigToJson(c.target_model) : json(false);
  j["cvae"] = c.fit_cvae ? CvaeConfigToJson(c.cvae) : json(false);
  if (c.outliers) j["outliers"] = OutlierSpecToJson(*c.outliers);
  j["generate"] = {{"rows", c.generate_rows}, {"filter", c.filter}};
  j["protocol"] = c.protocol;
  j["oos"] = {{"generator", GeneratorName(c.oos_generator)},
              {"iterations", c.iterations},
              {"subsample", c.subsample}};
  if (c.synthetic_csv) j["oos"]["synthetic_csv"] = c.synthetic_csv->filename().string();
  json ratios = json::array();
  for (const MixRatio& r : c.oot.ratios) {
    ratios.push_back({{"name", r.name}, {"ratio", r.ratio}, {"pure_synthetic", r.pure_synthetic}});
  }
  j["oot"] = {{"train_fractions", c.oot.train_fractions},
              {"pool_rows", c.oot.pool_rows},
              {"ratios", ratios}};
  j["sweep"] = {{"levels", c.sweep.levels},
                {"datasets", c.sweep.datasets},
                {"rows_per_dataset", c.sweep.rows_per_dataset},
                {"train_fraction", c.sweep.train_fraction}};
  if (c.sweep.cutoff) j["sweep"]["cutoff"] = *c.sweep.cutoff;
  j["generator"] = GeneratorName(c.generator);
  json synth = json::array();
  for (const auto& p : c.correlate_synthetic) synth.push_back(p.filename().string());
  j["correlate"] = {{"synthetic", synth}, {"scale", {c.heatmap_scale.lo, c.heatmap_scale.hi}}};
  return j;
}

}  // namespace zgen
