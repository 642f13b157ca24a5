// zgen command-line frontend.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zgen/config.h"
#include "zgen/corr.h"
#include "zgen/covgen.h"
#include "zgen/cvae.h"
#include "zgen/error.h"
#include "zgen/gan.h"
#include "zgen/gbdt.h"
#include "zgen/harness.h"
#include "zgen/preprocess.h"
#include "zgen/random.h"
#include "zgen/split.h"
#include "zgen/table.h"
#include "zgen/version.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace zgen {
namespace {

void Log(const std::string& line) { std::cerr << "zgen: " << line << "\n"; }

std::string Hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void WriteFile(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << bytes;
  if (!out) throw Error("write failed: " + path.string());
}

std::string FileHash(const fs::path& path) { return Hex(Fnv1a64(ReadFile(path))); }

// Records inputs and outputs of one command; written last.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed, const json& config)
      : command_(std::move(command)), seed_(seed), config_(config) {}

  void Input(const std::string& name, const fs::path& path) { inputs_[name] = FileHash(path); }
  void Output(const fs::path& path) { outputs_[path.filename().string()] = FileHash(path); }

  void Write(const fs::path& path) const {
    json j;
    j["tool"] = "zgen";
    j["version"] = kVersion;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config_hash"] = Hex(Fnv1a64(config_.dump()));
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    WriteFile(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::uint64_t seed_;
  json config_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

struct Data {
  Table train;
  std::optional<Table> test;
};

Data LoadData(const RunConfig& c, Manifest& manifest) {
  const Schema schema = LoadSchema(c.schema);
  manifest.Input("schema", c.schema);
  manifest.Input("train", c.train);
  Data d;
  const Table full = LoadCsv(c.train, schema);
  switch (c.split.mode) {
    case SplitMode::kNone:
      d.train = full;
      if (c.test) {
        manifest.Input("test", *c.test);
        d.test = LoadCsv(*c.test, schema);
      }
      break;
    case SplitMode::kOutOfSample: {
      TrainTest s = SplitOutOfSample(full, c.split.test_fraction, DeriveSeed(c.seed, "split"));
      d.train = std::move(s.train);
      d.test = std::move(s.test);
      break;
    }
    case SplitMode::kOutOfTime: {
      TrainTest s = SplitOutOfTime(full, c.split.train_fraction);
      d.train = std::move(s.train);
      d.test = std::move(s.test);
      break;
    }
    case SplitMode::kCutoff: {
      TrainTest s = SplitAtTime(full, *c.split.cutoff);
      d.train = std::move(s.train);
      d.test = std::move(s.test);
      break;
    }
  }
  return d;
}

// Returns the table the protocols split themselves (oot, sweep).
Table LoadFull(const RunConfig& c, Manifest& manifest) {
  manifest.Input("schema", c.schema);
  manifest.Input("train", c.train);
  return LoadCsv(c.train, LoadSchema(c.schema));
}

RunConfig LoadConfig(const std::string& path) {
  RunConfig c = LoadRunConfig(path);
  ValidateRunConfig(c);
  return c;
}

GanConfig SeededGan(const RunConfig& c) {
  GanConfig g = c.gan;
  g.seed = DeriveSeed(c.seed, "gan");
  return g;
}

GbdtConfig SeededTarget(const RunConfig& c) {
  GbdtConfig g = c.target_model;
  g.seed = DeriveSeed(c.seed, "target-model");
  return g;
}

// Numeric matrix of the outlier columns over complete rows, for the cVAE.
Eigen::MatrixXd OutlierColumns(const Table& t, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    const std::size_t i = t.schema().IndexOf(n);
    if (t.schema().column(i).kind != ColumnKind::kNumeric) {
      throw ConfigError("outlier column is not numeric: " + n);
    }
    idx.push_back(i);
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < t.num_rows(); ++r) {
    bool ok = true;
    for (std::size_t i : idx) ok = ok && !t.is_missing(r, i);
    if (ok) rows.push_back(r);
  }
  Eigen::MatrixXd m(rows.size(), idx.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < idx.size(); ++k) m(r, k) = t.number(rows[r], idx[k]);
  }
  return m;
}

// Replaces a cVAE covariance source by one sampled covariance.
OutlierSpec ResolveCovSource(OutlierSpec spec, const fs::path& cvae_path, std::uint64_t seed,
                             Manifest& manifest) {
  if (spec.cov_source != CovSource::kFromCvae) return spec;
  if (!fs::exists(cvae_path)) throw ConfigError("cvae model not found: " + cvae_path.string());
  manifest.Input("cvae", cvae_path);
  const CvaeModel model = LoadCvae(cvae_path);
  CovMatrix cov = SampleCov(model, DeriveSeed(seed, "cvae-sample"));
  if (cov.columns != spec.columns) {
    throw ConfigError("cvae model columns do not match the outlier columns");
  }
  spec.cov_source = CovSource::kProvided;
  spec.provided = std::move(cov);
  return spec;
}

std::vector<ExtraColumn> MaskColumn(const std::vector<std::uint8_t>& mask) {
  ExtraColumn col{"__outlier", {}};
  col.cells.reserve(mask.size());
  for (auto m : mask) col.cells.push_back(m ? "1" : "0");
  return {col};
}

int Workers(int requested) {
  if (requested > 0) return requested;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// ---- fit ----

void FitCommand(const RunConfig& c) {
  Manifest manifest("fit", c.seed, EffectiveConfig(c));
  Data d = LoadData(c, manifest);
  fs::create_directories(c.out_dir);
  Table gan_train = d.train;
  if (c.augment_rows > d.train.num_rows()) {
    gan_train = AugmentRandom(d.train, c.augment_rows, DeriveSeed(c.seed, "augment"));
  }
  Log("fitting GAN on " + std::to_string(gan_train.num_rows()) + " rows, " +
      std::to_string(c.gan.epochs) + " epochs");
  const GanModel gan = FitGan(gan_train, SeededGan(c));
  const fs::path gan_path = c.out_dir / "gan.model";
  SaveGan(gan_path, gan);
  manifest.Output(gan_path);

  if (c.fit_target_model) {
    Log("fitting target model on " + std::to_string(d.train.num_rows()) + " rows");
    const GbdtModel tm = FitGbdt(d.train, SeededTarget(c));
    const fs::path tm_path = c.out_dir / "target_model.json";
    WriteFile(tm_path, GbdtToJson(tm).dump(1) + "\n");
    manifest.Output(tm_path);
  }
  if (c.fit_cvae) {
    if (!c.outliers) throw ConfigError("cvae fitting needs an 'outliers' section naming columns");
    const Eigen::MatrixXd m = OutlierColumns(d.train, c.outliers->columns);
    std::vector<std::size_t> idx(m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    CvaeConfig cc = c.cvae;
    cc.seed = DeriveSeed(c.seed, "cvae");
    Log("fitting cVAE on " + std::to_string(cc.matrices) + " bootstrap covariances");
    const auto set = BuildTrainingSet(m, idx, c.outliers->columns, cc);
    const CvaeModel model = FitCvae(set, ConditionVector(m, idx), cc);
    if (model.weak_convergence) Log("warning: cVAE loss fell by less than half");
    const fs::path cvae_path = c.out_dir / "cvae.model";
    SaveCvae(cvae_path, model);
    manifest.Output(cvae_path);
  }
  manifest.Write(c.out_dir / "manifest_fit.json");
}

// ---- generate / inject ----

struct GenerateArgs {
  std::string config;
  std::string model;
  std::string output;
  std::string outliers;
  std::string target_model;
  std::string cvae;
  std::optional<std::size_t> rows;
  std::optional<std::uint64_t> seed;
  std::optional<bool> filter;
  bool mask = false;
};

std::uint64_t SeedFromEnvOr(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (flag) return *flag;
  RunConfig tmp;
  tmp.seed = fallback;
  ApplySeedOverride(tmp, std::getenv("ZGEN_SEED"));
  return tmp.seed;
}

OutlierSpec LoadOutlierSpec(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("outlier spec not found: " + path.string());
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("outlier spec " + path.string() + " is not valid JSON: " + e.what());
  }
  OutlierSpec spec = OutlierSpecFromJson(j);
  ValidateOutlierSpec(spec);
  return spec;
}

void GenerateCommand(const GenerateArgs& a) {
  std::optional<RunConfig> cfg;
  if (!a.config.empty()) cfg = LoadConfig(a.config);
  const std::uint64_t seed = cfg ? (a.seed ? *a.seed : cfg->seed) : SeedFromEnvOr(a.seed, 42);
  const fs::path out_dir = cfg ? cfg->out_dir : fs::path(".");
  const fs::path model_path = !a.model.empty() ? fs::path(a.model) : out_dir / "gan.model";
  const fs::path output = !a.output.empty() ? fs::path(a.output) : out_dir / "synthetic.csv";
  const std::size_t rows = a.rows ? *a.rows : (cfg ? cfg->generate_rows : 4000);
  const bool filter = a.filter ? *a.filter : (cfg ? cfg->filter : true);
  std::optional<OutlierSpec> spec;
  if (!a.outliers.empty()) spec = LoadOutlierSpec(a.outliers);
  else if (cfg && cfg->outliers) spec = cfg->outliers;
  fs::path tm_path;
  if (!a.target_model.empty()) tm_path = a.target_model;
  else if (cfg && cfg->fit_target_model) tm_path = out_dir / "target_model.json";
  const fs::path cvae_path = !a.cvae.empty() ? fs::path(a.cvae) : out_dir / "cvae.model";

  json effective = cfg ? EffectiveConfig(*cfg) : json::object();
  effective["generate"] = {{"rows", rows}, {"filter", filter}, {"seed", seed}};
  if (spec) effective["outliers"] = OutlierSpecToJson(*spec);
  Manifest manifest("generate", seed, effective);

  if (!fs::exists(model_path)) throw ConfigError("model file not found: " + model_path.string());
  manifest.Input("model", model_path);
  const GanModel gan = LoadGan(model_path);
  Log("generating " + std::to_string(rows) + " rows");
  GenerateResult gen = Generate(gan, rows, DeriveSeed(seed, "generate"), filter);
  Log("draws " + std::to_string(gen.draws) + ", rejected " + std::to_string(gen.rejected));
  Table table = std::move(gen.table);
  std::vector<std::uint8_t> mask(table.num_rows(), 0);
  if (spec) {
    OutlierSpec s = ResolveCovSource(*spec, cvae_path, seed, manifest);
    s.seed = DeriveSeed(seed, "inject");
    InjectResult inj = Inject(table, s);
    Log("injected " + std::to_string(inj.count) + " outlier rows");
    table = std::move(inj.table);
    mask = std::move(inj.mask);
  }
  if (!tm_path.empty()) {
    if (!fs::exists(tm_path)) throw ConfigError("target model not found: " + tm_path.string());
    manifest.Input("target_model", tm_path);
    const GbdtModel tm = GbdtFromJson(json::parse(ReadFile(tm_path)));
    table = PredictTarget(tm, table, TargetMode::kThreshold);
  }
  if (a.mask) SaveCsv(output, table, MaskColumn(mask));
  else SaveCsv(output, table);
  manifest.Output(output);
  manifest.Write(fs::path(output.string() + ".manifest.json"));
}

struct InjectArgs {
  std::string input;
  std::string schema;
  std::string outliers;
  std::string output;
  std::string cvae;
  std::optional<std::uint64_t> seed;
  bool mask = false;
};

void InjectCommand(const InjectArgs& a) {
  const std::uint64_t seed = SeedFromEnvOr(a.seed, 42);
  for (const auto& [what, p] : {std::pair<std::string, std::string>{"input file", a.input},
                                {"schema file", a.schema}}) {
    if (!fs::exists(p)) throw ConfigError(what + " not found: " + p);
  }
  OutlierSpec spec = LoadOutlierSpec(a.outliers);
  json effective = {{"outliers", OutlierSpecToJson(spec)}, {"seed", seed}};
  Manifest manifest("inject", seed, effective);
  manifest.Input("input", a.input);
  manifest.Input("schema", a.schema);
  const Table table = LoadCsv(a.input, LoadSchema(a.schema));
  spec = ResolveCovSource(spec, a.cvae.empty() ? fs::path("cvae.model") : fs::path(a.cvae), seed,
                          manifest);
  spec.seed = DeriveSeed(seed, "inject");
  const InjectResult inj = Inject(table, spec);
  Log("injected " + std::to_string(inj.count) + " outlier rows");
  if (a.mask) SaveCsv(a.output, inj.table, MaskColumn(inj.mask));
  else SaveCsv(a.output, inj.table);
  manifest.Output(a.output);
  manifest.Write(fs::path(a.output + ".manifest.json"));
}

// ---- evaluate ----

ProtocolOptions Protocol(const RunConfig& c, int workers) {
  ProtocolOptions p;
  p.seed = c.seed;
  p.workers = workers;
  p.iterations = c.iterations;
  p.subsample = c.subsample;
  return p;
}

GeneratorFactory Factory(const RunConfig& c) {
  if (c.generator == GeneratorKind::kBootstrap) return BootstrapFactory();
  GanFactoryOptions o;
  o.gan = c.gan;
  o.target_model = c.target_model;
  o.label_with_target_model = c.fit_target_model;
  o.augment_rows = c.augment_rows;
  o.filter = c.filter;
  return GanFactory(o);
}

void WriteReport(const RunConfig& c, const ExperimentReport& report, Manifest& manifest) {
  ExperimentReport r = report;
  r.provenance["config"] = EffectiveConfig(c);
  r.provenance["config_hash"] = Hex(Fnv1a64(EffectiveConfig(c).dump()));
  r.provenance["version"] = kVersion;
  const fs::path json_path = c.out_dir / ("report_" + r.protocol + ".json");
  const fs::path txt_path = c.out_dir / ("report_" + r.protocol + ".txt");
  WriteFile(json_path, ReportToJson(r).dump(2) + "\n");
  WriteFile(txt_path, RenderReport(r));
  manifest.Output(json_path);
  manifest.Output(txt_path);
  std::cout << RenderReport(r);
}

void CorrelateRun(const RunConfig& c, const Table& real, const std::vector<fs::path>& synthetic,
                  Manifest& manifest);

void EvaluateCommand(const RunConfig& c, int workers) {
  Manifest manifest("evaluate", c.seed, EffectiveConfig(c));
  fs::create_directories(c.out_dir);
  const Evaluator eval = GbdtEvaluator(c.gbdt);
  const ProtocolOptions opts = Protocol(c, workers);
  if (c.protocol == "oos") {
    Data d = LoadData(c, manifest);
    if (!d.test) throw ConfigError("oos protocol needs data.test or a split");
    std::optional<Table> synthetic;
    if (c.oos_generator == GeneratorKind::kCsv) {
      manifest.Input("synthetic", *c.synthetic_csv);
      synthetic = LoadCsv(*c.synthetic_csv, d.train.schema());
    } else if (c.oos_generator == GeneratorKind::kGan) {
      const fs::path synth_path = c.out_dir / "synthetic.csv";
      if (!fs::exists(synth_path)) {
        throw ConfigError("oos with the gan generator needs " + synth_path.string() +
                          " (run fit and generate first)");
      }
      manifest.Input("synthetic", synth_path);
      synthetic = LoadCsv(synth_path, d.train.schema());
    }
    Log("running oos protocol, " + std::to_string(c.iterations) + " iterations");
    WriteReport(c, RunOos(d.train, *d.test, synthetic, eval, opts), manifest);
  } else if (c.protocol == "oot") {
    const Table full = LoadFull(c, manifest);
    Log("running oot protocol");
    WriteReport(c, RunOot(full, Factory(c), eval, c.oot, opts), manifest);
  } else if (c.protocol == "sweep") {
    const Table full = LoadFull(c, manifest);
    const OutlierSpec spec = ResolveCovSource(*c.outliers, c.out_dir / "cvae.model", c.seed, manifest);
    Log("running outlier sweep over " + std::to_string(c.sweep.levels.size()) + " levels");
    WriteReport(c, RunOutlierSweep(full, Factory(c), spec, eval, c.sweep, opts), manifest);
  } else {
    Data d = LoadData(c, manifest);
    CorrelateRun(c, d.train, c.correlate_synthetic, manifest);
  }
  manifest.Write(c.out_dir / ("manifest_evaluate_" + c.protocol + ".json"));
}

// ---- correlate ----

void CorrelateRun(const RunConfig& c, const Table& real, const std::vector<fs::path>& synthetic,
                  Manifest& manifest) {
  if (synthetic.empty()) throw ConfigError("correlate: no synthetic inputs");
  fs::create_directories(c.out_dir);
  const PreprocessPlan plan = FitPreprocess(real);
  const CorrMatrix real_corr = PearsonMatrix(real, plan);
  const fs::path real_csv = c.out_dir / "corr_real.csv";
  {
    std::ostringstream s;
    WriteMatrixCsv(s, real_corr.columns, real_corr.values);
    WriteFile(real_csv, s.str());
    manifest.Output(real_csv);
  }
  std::vector<std::pair<double, std::string>> mads;
  for (std::size_t i = 0; i < synthetic.size(); ++i) {
    const fs::path& p = synthetic[i];
    const std::string name = p.stem().string();
    manifest.Input("synthetic_" + std::to_string(i), p);
    const Table synth = LoadCsv(p, real.schema());
    const CorrMatrix sc = PearsonMatrix(synth, plan);
    for (std::size_t k = 0; k < sc.constant.size(); ++k) {
      if (sc.constant[k]) Log("constant column in " + name + ": " + sc.columns[k]);
    }
    std::ostringstream s;
    WriteMatrixCsv(s, sc.columns, sc.values);
    const fs::path corr_csv = c.out_dir / ("corr_" + name + ".csv");
    WriteFile(corr_csv, s.str());
    manifest.Output(corr_csv);
    const DiffMatrix diff = Diff(real_corr, sc);
    const fs::path stem = c.out_dir / ("corrdiff_real_vs_" + name);
    RenderHeatmap(stem, diff.columns, diff.values, c.heatmap_scale);
    manifest.Output(fs::path(stem.string() + ".csv"));
    manifest.Output(fs::path(stem.string() + ".ppm"));
    mads.emplace_back(diff.mad, name);
  }
  std::stable_sort(mads.begin(), mads.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string lines;
  for (const auto& [mad, name] : mads) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", mad);
    lines += name + " MAD " + buf + "\n";
  }
  std::cout << lines;
  const fs::path mad_path = c.out_dir / "mad.txt";
  WriteFile(mad_path, lines);
  manifest.Output(mad_path);
}

struct CorrelateArgs {
  std::string config;
  std::string real;
  std::string schema;
  std::string out_dir;
  std::vector<std::string> synthetic;
  std::vector<double> scale;
};

void CorrelateCommand(const CorrelateArgs& a) {
  RunConfig c;
  std::vector<fs::path> synthetic;
  Table real;
  std::optional<Manifest> manifest;
  if (!a.config.empty()) {
    c = LoadConfig(a.config);
    manifest.emplace("correlate", c.seed, EffectiveConfig(c));
    real = LoadData(c, *manifest).train;
    synthetic = c.correlate_synthetic;
  } else {
    if (a.real.empty() || a.schema.empty()) {
      throw ConfigError("correlate needs --config or both --real and --schema");
    }
    for (const auto& [what, p] : {std::pair<std::string, std::string>{"real data file", a.real},
                                  {"schema file", a.schema}}) {
      if (!fs::exists(p)) throw ConfigError(what + " not found: " + p);
    }
    c.out_dir = a.out_dir.empty() ? fs::path(".") : fs::path(a.out_dir);
    manifest.emplace("correlate", c.seed, json{{"scale", {c.heatmap_scale.lo, c.heatmap_scale.hi}}});
    manifest->Input("real", a.real);
    manifest->Input("schema", a.schema);
    real = LoadCsv(a.real, LoadSchema(a.schema));
  }
  for (const auto& s : a.synthetic) {
    if (!fs::exists(s)) throw ConfigError("synthetic data file not found: " + s);
    synthetic.emplace_back(s);
  }
  if (!a.out_dir.empty()) c.out_dir = a.out_dir;
  if (!a.scale.empty()) {
    if (a.scale.size() != 2 || !(a.scale[0] < a.scale[1])) {
      throw ConfigError("--scale needs two numbers lo < hi");
    }
    c.heatmap_scale = {a.scale[0], a.scale[1]};
  }
  CorrelateRun(c, real, synthetic, *manifest);
  manifest->Write(c.out_dir / "manifest_correlate.json");
}

// ---- pipeline ----

void PipelineCommand(const RunConfig& c, int workers) {
  FitCommand(c);
  GenerateArgs g;
  g.config = c.config_path.string();
  g.seed = c.seed;
  GenerateCommand(g);
  RunConfig eval = c;
  if (eval.protocol == "oos" && eval.oos_generator == GeneratorKind::kNone) {
    eval.oos_generator = GeneratorKind::kGan;
  }
  if (eval.protocol == "correlate") {
    eval.correlate_synthetic.insert(eval.correlate_synthetic.begin(), c.out_dir / "synthetic.csv");
  }
  EvaluateCommand(eval, workers);
  if (eval.protocol != "correlate") {
    RunConfig corr = c;
    corr.correlate_synthetic.insert(corr.correlate_synthetic.begin(), c.out_dir / "synthetic.csv");
    Manifest manifest("correlate", corr.seed, EffectiveConfig(corr));
    const Table real = LoadData(corr, manifest).train;
    CorrelateRun(corr, real, corr.correlate_synthetic, manifest);
    manifest.Write(corr.out_dir / "manifest_correlate.json");
  }
}

int Main(int argc, char** argv) {
  CLI::App app{"zgen: synthetic tabular data with controlled outliers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int workers = 1;
  app.add_option("--workers", workers, "Worker threads for protocol iterations (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  std::string config;
  auto* fit = app.add_subcommand("fit", "Train the GAN, target model and optional cVAE");
  fit->add_option("-c,--config", config, "Run config (JSON)")->required();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Sample synthetic rows from a trained GAN");
  generate->add_option("-c,--config", gen.config, "Run config (JSON)");
  generate->add_option("-m,--model", gen.model, "GAN model file");
  generate->add_option("-n,--rows", gen.rows, "Rows to generate");
  generate->add_option("-o,--output", gen.output, "Output CSV");
  generate->add_option("--outliers", gen.outliers, "Outlier spec (JSON)");
  generate->add_option("--target-model", gen.target_model, "Target model used for labels");
  generate->add_option("--cvae", gen.cvae, "cVAE model for a cvae covariance source");
  generate->add_option("--seed", gen.seed, "Master seed");
  generate->add_flag("--filter,!--no-filter", gen.filter, "Similarity filter against training rows");
  generate->add_flag("--mask", gen.mask, "Append the __outlier mask column");

  InjectArgs inj;
  auto* inject = app.add_subcommand("inject", "Inject tail outliers into a CSV");
  inject->add_option("-i,--input", inj.input, "Input CSV")->required();
  inject->add_option("-s,--schema", inj.schema, "Schema JSON")->required();
  inject->add_option("--outliers", inj.outliers, "Outlier spec (JSON)")->required();
  inject->add_option("-o,--output", inj.output, "Output CSV")->required();
  inject->add_option("--cvae", inj.cvae, "cVAE model for a cvae covariance source");
  inject->add_option("--seed", inj.seed, "Master seed");
  inject->add_flag("--mask", inj.mask, "Append the __outlier mask column");

  std::string eval_config;
  std::string protocol;
  auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation protocol");
  evaluate->add_option("-c,--config", eval_config, "Run config (JSON)")->required();
  evaluate->add_option("-p,--protocol", protocol, "oos | oot | sweep | correlate")
      ->check(CLI::IsMember({"oos", "oot", "sweep", "correlate"}));

  CorrelateArgs corr;
  auto* correlate = app.add_subcommand("correlate", "Correlation matrices and difference heatmaps");
  correlate->add_option("-c,--config", corr.config, "Run config (JSON)");
  correlate->add_option("--real", corr.real, "Real CSV");
  correlate->add_option("-s,--schema", corr.schema, "Schema JSON");
  correlate->add_option("-o,--out-dir", corr.out_dir, "Output directory");
  correlate->add_option("--scale", corr.scale, "Shared color scale: lo hi")->expected(2);
  correlate->add_option("synthetic", corr.synthetic, "Synthetic CSVs");

  std::string pipe_config;
  auto* pipeline = app.add_subcommand("pipeline", "fit, generate, evaluate and correlate in one go");
  pipeline->add_option("-c,--config", pipe_config, "Run config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const int w = Workers(workers);
    if (*fit) {
      FitCommand(LoadConfig(config));
    } else if (*generate) {
      GenerateCommand(gen);
    } else if (*inject) {
      InjectCommand(inj);
    } else if (*evaluate) {
      RunConfig c = LoadConfig(eval_config);
      if (!protocol.empty()) c.protocol = protocol;
      if (c.protocol == "sweep" && !c.outliers) {
        throw ConfigError("sweep protocol needs an 'outliers' section");
      }
      EvaluateCommand(c, w);
    } else if (*correlate) {
      CorrelateCommand(corr);
    } else if (*pipeline) {
      PipelineCommand(LoadConfig(pipe_config), w);
    }
  } catch (const ConfigError& e) {
    std::cerr << "zgen: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "zgen: error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace
}  // namespace zgen

int main(int argc, char** argv) { return zgen::Main(argc, argv); }
