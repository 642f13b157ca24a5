#include "zgen/gbdt.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "zgen/error.h"
#include "zgen/stats.h"

namespace zgen {

namespace {

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LogLoss(std::span<const double> scores, std::span<const int> labels) {
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    // log(1 + exp(-s)) for positives, log(1 + exp(s)) for negatives.
    const double s = labels[i] == 1 ? -scores[i] : scores[i];
    sum += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  }
  return sum / static_cast<double>(scores.size());
}

bool Trainable(const ColumnSpec& spec, const GbdtConfig& config) {
  if (spec.role == ColumnRole::kTarget || spec.role == ColumnRole::kTimeIndex) {
    return false;
  }
  return config.use_macro || spec.role != ColumnRole::kMacro;
}

std::vector<GbdtFeature> FitFeatures(const Table& table, const GbdtConfig& config) {
  std::vector<GbdtFeature> features;
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    const ColumnSpec& spec = table.schema().column(c);
    if (!Trainable(spec, config)) continue;
    GbdtFeature f;
    f.name = spec.name;
    f.kind = spec.kind;
    const Column& column = table.column(c);
    if (spec.kind == ColumnKind::kCategorical) {
      std::set<std::string> levels;
      for (std::size_t r = 0; r < table.num_rows(); ++r) {
        if (!column.missing[r]) levels.insert(column.labels[r]);
      }
      f.levels.assign(levels.begin(), levels.end());
    } else {
      double lo = 0.0;
      double hi = 0.0;
      bool any = false;
      for (std::size_t r = 0; r < table.num_rows(); ++r) {
        if (column.missing[r]) continue;
        const double v = column.values[r];
        lo = any ? std::min(lo, v) : v;
        hi = any ? std::max(hi, v) : v;
        any = true;
      }
      f.sentinel = any ? lo - 10.0 * (1.0 + hi - lo) : 0.0;
    }
    features.push_back(std::move(f));
  }
  if (features.empty()) throw Error("gbdt: no feature columns");
  return features;
}

int Route(const std::vector<TreeNode>& tree, const double* x) {
  int node = 0;
  while (tree[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& n = tree[static_cast<std::size_t>(node)];
    const double v = x[n.feature];
    bool left;
    if (n.categorical) {
      left = v < 0 ? n.unseen_left : static_cast<int>(v) == n.code;
    } else {
      left = v <= n.threshold;
    }
    node = left ? n.left : n.right;
  }
  return node;
}

struct Candidate {
  double gain = -1.0;
  int feature = -1;
  bool categorical = false;
  double threshold = 0.0;
  int code = 0;
  bool found = false;
};

double Score(double g, double h, double l2) { return g * g / (h + l2); }

// Grows one tree on gradients `g`, hessians `h`.
std::vector<TreeNode> GrowTree(const std::vector<double>& x, std::size_t n,
                               std::size_t num_features,
                               const std::vector<GbdtFeature>& features,
                               const std::vector<std::vector<std::size_t>>& sorted,
                               const std::vector<double>& g,
                               const std::vector<double>& h,
                               const GbdtConfig& config) {
  std::vector<TreeNode> tree(1);
  std::vector<int> node_of(n, 0);
  std::vector<int> frontier = {0};
  const auto min_leaf = static_cast<std::size_t>(config.min_leaf);
  const double l2 = config.l2;

  for (int depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
    const std::size_t count_nodes = tree.size();
    std::vector<double> node_g(count_nodes, 0.0);
    std::vector<double> node_h(count_nodes, 0.0);
    std::vector<std::size_t> node_n(count_nodes, 0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto nd = static_cast<std::size_t>(node_of[r]);
      node_g[nd] += g[r];
      node_h[nd] += h[r];
      ++node_n[nd];
    }
    std::vector<char> splittable(count_nodes, 0);
    for (int nd : frontier) {
      if (node_n[static_cast<std::size_t>(nd)] >= 2 * min_leaf) {
        splittable[static_cast<std::size_t>(nd)] = 1;
      }
    }
    std::vector<Candidate> best(count_nodes);
    auto consider = [&](std::size_t nd, double gl, double hl, std::size_t nl,
                        const Candidate& proto) {
      const std::size_t nr = node_n[nd] - nl;
      if (nl < min_leaf || nr < min_leaf) return;
      const double gr = node_g[nd] - gl;
      const double hr = node_h[nd] - hl;
      const double gain = Score(gl, hl, l2) + Score(gr, hr, l2) -
                          Score(node_g[nd], node_h[nd], l2);
      if (!best[nd].found || gain > best[nd].gain) {
        best[nd] = proto;
        best[nd].gain = gain;
        best[nd].found = true;
      }
    };

    for (std::size_t f = 0; f < num_features; ++f) {
      if (features[f].kind == ColumnKind::kCategorical) {
        const std::size_t codes = features[f].levels.size() + 1;
        std::vector<double> cg(count_nodes * codes, 0.0);
        std::vector<double> ch(count_nodes * codes, 0.0);
        std::vector<std::size_t> cn(count_nodes * codes, 0);
        for (std::size_t r = 0; r < n; ++r) {
          const auto nd = static_cast<std::size_t>(node_of[r]);
          if (!splittable[nd]) continue;
          const auto code = static_cast<std::size_t>(x[r * num_features + f]);
          cg[nd * codes + code] += g[r];
          ch[nd * codes + code] += h[r];
          ++cn[nd * codes + code];
        }
        for (int ndi : frontier) {
          const auto nd = static_cast<std::size_t>(ndi);
          if (!splittable[nd]) continue;
          for (std::size_t code = 0; code < codes; ++code) {
            const std::size_t k = nd * codes + code;
            if (cn[k] == 0) continue;
            Candidate proto;
            proto.feature = static_cast<int>(f);
            proto.categorical = true;
            proto.code = static_cast<int>(code);
            consider(nd, cg[k], ch[k], cn[k], proto);
          }
        }
      } else {
        struct Running {
          double g = 0.0;
          double h = 0.0;
          std::size_t n = 0;
          double prev = 0.0;
        };
        std::vector<Running> run(count_nodes);
        for (std::size_t r : sorted[f]) {
          const auto nd = static_cast<std::size_t>(node_of[r]);
          if (!splittable[nd]) continue;
          const double v = x[r * num_features + f];
          Running& s = run[nd];
          if (s.n > 0 && v != s.prev) {
            Candidate proto;
            proto.feature = static_cast<int>(f);
            proto.threshold = s.prev + 0.5 * (v - s.prev);
            if (!(proto.threshold < v)) proto.threshold = s.prev;
            consider(nd, s.g, s.h, s.n, proto);
          }
          s.g += g[r];
          s.h += h[r];
          ++s.n;
          s.prev = v;
        }
      }
    }

    std::vector<int> next;
    std::vector<char> split_here(count_nodes, 0);
    for (int ndi : frontier) {
      const auto nd = static_cast<std::size_t>(ndi);
      const Candidate& c = best[nd];
      // Zero-gain splits are kept: deeper levels can still separate
      // interactions (XOR) that no single split reveals.
      if (!c.found || c.gain < -1e-12) continue;
      TreeNode& node = tree[nd];
      node.feature = c.feature;
      node.categorical = c.categorical;
      node.threshold = c.threshold;
      node.code = c.code;
      split_here[nd] = 1;
    }
    for (int ndi : frontier) {
      const auto nd = static_cast<std::size_t>(ndi);
      if (!split_here[nd]) continue;
      const int left = static_cast<int>(tree.size());
      tree.emplace_back();
      tree.emplace_back();
      tree[nd].left = left;
      tree[nd].right = left + 1;
      next.push_back(left);
      next.push_back(left + 1);
    }
    if (next.empty()) break;
    std::vector<std::size_t> left_count(tree.size(), 0);
    std::vector<std::size_t> right_count(tree.size(), 0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto nd = static_cast<std::size_t>(node_of[r]);
      if (nd >= count_nodes || !split_here[nd]) continue;
      const TreeNode& node = tree[nd];
      const double v = x[r * num_features + static_cast<std::size_t>(node.feature)];
      const bool left = node.categorical ? static_cast<int>(v) == node.code
                                         : v <= node.threshold;
      node_of[r] = left ? node.left : node.right;
      ++(left ? left_count : right_count)[nd];
    }
    for (std::size_t nd = 0; nd < count_nodes; ++nd) {
      if (split_here[nd] && tree[nd].categorical) {
        tree[nd].unseen_left = left_count[nd] >= right_count[nd];
      }
    }
    frontier = std::move(next);
  }

  std::vector<double> leaf_g(tree.size(), 0.0);
  std::vector<double> leaf_h(tree.size(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    leaf_g[static_cast<std::size_t>(node_of[r])] += g[r];
    leaf_h[static_cast<std::size_t>(node_of[r])] += h[r];
  }
  for (std::size_t nd = 0; nd < tree.size(); ++nd) {
    if (tree[nd].feature < 0) tree[nd].value = -leaf_g[nd] / (leaf_h[nd] + l2);
  }
  return tree;
}

int GetInt(const nlohmann::json& json, const char* key, int fallback) {
  if (!json.contains(key)) return fallback;
  if (!json.at(key).is_number_integer()) {
    throw ConfigError(std::string("gbdt.") + key + " must be an integer");
  }
  return json.at(key).get<int>();
}

}  // namespace

void ValidateGbdtConfig(const GbdtConfig& config) {
  if (config.trees < 0) throw ConfigError("gbdt trees must be non-negative");
  if (config.max_depth < 1 || config.max_depth > 12) {
    throw ConfigError("gbdt max depth must lie in [1, 12]");
  }
  if (!(config.learning_rate > 0.0)) throw ConfigError("gbdt learning rate must be positive");
  if (config.min_leaf < 1) throw ConfigError("gbdt min leaf must be positive");
  if (!(config.l2 >= 0.0)) throw ConfigError("gbdt l2 must be non-negative");
}

nlohmann::json GbdtConfigToJson(const GbdtConfig& config) {
  return {{"trees", config.trees},           {"max_depth", config.max_depth},
          {"learning_rate", config.learning_rate}, {"min_leaf", config.min_leaf},
          {"l2", config.l2},                 {"use_macro", config.use_macro},
          {"seed", config.seed}};
}

GbdtConfig GbdtConfigFromJson(const nlohmann::json& json, GbdtConfig base) {
  if (!json.is_object()) throw ConfigError("gbdt config must be an object");
  try {
    base.trees = GetInt(json, "trees", base.trees);
    base.max_depth = GetInt(json, "max_depth", base.max_depth);
    base.min_leaf = GetInt(json, "min_leaf", base.min_leaf);
    if (json.contains("learning_rate")) base.learning_rate = json.at("learning_rate").get<double>();
    if (json.contains("l2")) base.l2 = json.at("l2").get<double>();
    if (json.contains("use_macro")) base.use_macro = json.at("use_macro").get<bool>();
    if (json.contains("seed")) base.seed = json.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gbdt: ") + e.what());
  }
  ValidateGbdtConfig(base);
  return base;
}

std::vector<double> GbdtFeatureMatrix(const GbdtModel& model, const Table& table) {
  const std::size_t f_count = model.features.size();
  std::vector<double> x(table.num_rows() * f_count);
  for (std::size_t f = 0; f < f_count; ++f) {
    const GbdtFeature& feature = model.features[f];
    const auto c = table.schema().Find(feature.name);
    if (!c) throw Error("gbdt: table lacks feature column " + feature.name);
    const bool categorical = table.schema().column(*c).kind == ColumnKind::kCategorical;
    if (categorical != (feature.kind == ColumnKind::kCategorical)) {
      throw Error("gbdt: column " + feature.name + " changed kind since training");
    }
    const Column& column = table.column(*c);
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      double v;
      if (categorical) {
        if (column.missing[r]) {
          v = 0.0;
        } else {
          const auto it = std::lower_bound(feature.levels.begin(), feature.levels.end(),
                                           column.labels[r]);
          v = it != feature.levels.end() && *it == column.labels[r]
                  ? static_cast<double>(it - feature.levels.begin() + 1)
                  : -1.0;
        }
      } else {
        v = column.missing[r] ? feature.sentinel : column.values[r];
      }
      x[r * f_count + f] = v;
    }
  }
  return x;
}

GbdtModel FitGbdt(const Table& train, const GbdtConfig& config) {
  ValidateGbdtConfig(config);
  const BinaryTarget target = ExtractBinaryTarget(train);
  const std::size_t raw_n = train.num_rows();
  const auto positives =
      static_cast<std::size_t>(std::count(target.labels.begin(), target.labels.end(), 1));
  if (positives == 0 || positives == raw_n) {
    throw Error("gbdt: target has a single class");
  }
  if (raw_n < 2 * static_cast<std::size_t>(config.min_leaf)) {
    throw Error("gbdt: need at least " + std::to_string(2 * config.min_leaf) + " rows");
  }
  GbdtModel model;
  model.config = config;
  model.features = FitFeatures(train, config);
  const std::size_t tc = *train.schema().target();
  model.target = train.schema().column(tc).name;
  model.target_categorical = train.schema().column(tc).kind == ColumnKind::kCategorical;
  model.negative_label = target.negative_label;
  model.positive_label = target.positive_label;

  const std::size_t nf = model.features.size();
  const std::vector<double> raw_x = GbdtFeatureMatrix(model, train);
  // Canonical row order: by label, then feature values.
  std::vector<std::size_t> order(raw_n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (target.labels[a] != target.labels[b]) return target.labels[a] < target.labels[b];
    for (std::size_t f = 0; f < nf; ++f) {
      const double va = raw_x[a * nf + f];
      const double vb = raw_x[b * nf + f];
      if (va != vb) return va < vb;
    }
    return false;
  });
  const std::size_t n = raw_n;
  std::vector<double> x(n * nf);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(raw_x.begin() + static_cast<std::ptrdiff_t>(order[i] * nf), nf,
                x.begin() + static_cast<std::ptrdiff_t>(i * nf));
    y[i] = target.labels[order[i]];
  }
  std::vector<std::vector<std::size_t>> sorted(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    if (model.features[f].kind == ColumnKind::kCategorical) continue;
    sorted[f].resize(n);
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) {
      return x[a * nf + f] < x[b * nf + f];
    });
  }

  const double pos = static_cast<double>(positives);
  model.base_score = std::log(pos / (static_cast<double>(n) - pos));
  std::vector<double> score(n, model.base_score);
  std::vector<double> g(n);
  std::vector<double> h(n);
  model.loss_trace.push_back(LogLoss(score, y));
  for (int t = 0; t < config.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = Sigmoid(score[i]);
      g[i] = p - y[i];
      h[i] = p * (1.0 - p);
    }
    std::vector<TreeNode> tree = GrowTree(x, n, nf, model.features, sorted, g, h, config);
    for (std::size_t i = 0; i < n; ++i) {
      const int leaf = Route(tree, &x[i * nf]);
      score[i] += config.learning_rate * tree[static_cast<std::size_t>(leaf)].value;
    }
    model.trees.push_back(std::move(tree));
    model.loss_trace.push_back(LogLoss(score, y));
  }
  return model;
}

std::vector<double> PredictProba(const GbdtModel& model, const Table& table,
                                 std::optional<int> max_trees) {
  const std::vector<double> x = GbdtFeatureMatrix(model, table);
  const std::size_t nf = model.features.size();
  std::size_t limit = model.trees.size();
  if (max_trees) limit = std::min(limit, static_cast<std::size_t>(std::max(0, *max_trees)));
  std::vector<double> out(table.num_rows());
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < limit; ++t) {
      const std::vector<TreeNode>& tree = model.trees[t];
      s += tree[static_cast<std::size_t>(Route(tree, &x[r * nf]))].value;
    }
    out[r] = Sigmoid(model.base_score + model.config.learning_rate * s);
  }
  return out;
}

std::vector<GbdtConfig> DefaultGrid(const GbdtConfig& base) {
  std::vector<GbdtConfig> grid;
  for (int depth : {3, 4, 6}) {
    for (int trees : {100, 200, 400}) {
      for (double lr : {0.05, 0.1}) {
        GbdtConfig c = base;
        c.max_depth = depth;
        c.trees = trees;
        c.learning_rate = lr;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

GridResult GridSearch(const Table& train, const Table& validation,
                      std::span<const GbdtConfig> grid) {
  if (grid.empty()) throw Error("grid search: empty grid");
  const BinaryTarget truth = ExtractBinaryTarget(validation);
  GridResult result;
  // Boosting is deterministic, so a smaller tree count is a prefix of a
  // larger fit with otherwise equal settings.
  std::map<std::tuple<int, double, int, double, bool>, GbdtModel> fitted;
  for (const GbdtConfig& config : grid) {
    ValidateGbdtConfig(config);
    const auto key = std::make_tuple(config.max_depth, config.learning_rate, config.min_leaf,
                                     config.l2, config.use_macro);
    auto it = fitted.find(key);
    if (it == fitted.end()) {
      int most = config.trees;
      for (const GbdtConfig& other : grid) {
        if (std::make_tuple(other.max_depth, other.learning_rate, other.min_leaf, other.l2,
                            other.use_macro) == key) {
          most = std::max(most, other.trees);
        }
      }
      GbdtConfig big = config;
      big.trees = most;
      it = fitted.emplace(key, FitGbdt(train, big)).first;
    }
    const std::vector<double> p = PredictProba(it->second, validation, config.trees);
    result.points.push_back({config, Auc(p, truth.labels)});
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.points.size(); ++i) {
    const GridPoint& a = result.points[i];
    const GridPoint& b = result.points[best];
    const auto rank = [](const GridPoint& p) {
      return std::make_tuple(-p.auc, p.config.trees, p.config.max_depth, p.config.learning_rate);
    };
    if (rank(a) < rank(b)) best = i;
  }
  result.best = result.points[best].config;
  result.best_auc = result.points[best].auc;
  return result;
}

Table PredictTarget(const GbdtModel& model, const Table& synthetic, TargetMode mode,
                    double threshold) {
  const auto c = synthetic.schema().Find(model.target);
  if (!c) throw Error("predict target: table lacks target column " + model.target);
  const std::vector<double> p = PredictProba(model, synthetic);
  ColumnSpec spec = synthetic.schema().column(*c);
  Column column;
  column.missing.assign(synthetic.num_rows(), 0);
  if (mode == TargetMode::kProba) {
    spec.kind = ColumnKind::kNumeric;
    column.values = p;
  } else if (model.target_categorical) {
    spec.kind = ColumnKind::kCategorical;
    for (double v : p) column.labels.push_back(v >= threshold ? model.positive_label
                                                              : model.negative_label);
  } else {
    spec.kind = ColumnKind::kNumeric;
    for (double v : p) column.values.push_back(v >= threshold ? 1.0 : 0.0);
  }
  return synthetic.WithColumn(*c, spec, std::move(column));
}

nlohmann::json GbdtToJson(const GbdtModel& model) {
  nlohmann::json features = nlohmann::json::array();
  for (const GbdtFeature& f : model.features) {
    features.push_back({{"name", f.name},
                        {"kind", std::string(ToString(f.kind))},
                        {"sentinel", f.sentinel},
                        {"levels", f.levels}});
  }
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : tree) {
      if (n.feature < 0) {
        nodes.push_back({{"leaf", n.value}});
      } else if (n.categorical) {
        nodes.push_back({{"feature", n.feature}, {"code", n.code},
                         {"unseen_left", n.unseen_left}, {"left", n.left},
                         {"right", n.right}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold},
                         {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"format", "zgen-gbdt"},
          {"version", 1},
          {"config", GbdtConfigToJson(model.config)},
          {"target", model.target},
          {"target_categorical", model.target_categorical},
          {"negative_label", model.negative_label},
          {"positive_label", model.positive_label},
          {"base_score", model.base_score},
          {"features", features},
          {"loss_trace", model.loss_trace},
          {"trees", trees}};
}

GbdtModel GbdtFromJson(const nlohmann::json& json) {
  GbdtModel model;
  try {
    if (json.at("format") != "zgen-gbdt" || json.at("version") != 1) {
      throw Error("gbdt: unsupported model format");
    }
    model.config = GbdtConfigFromJson(json.at("config"));
    model.target = json.at("target").get<std::string>();
    model.target_categorical = json.at("target_categorical").get<bool>();
    model.negative_label = json.at("negative_label").get<std::string>();
    model.positive_label = json.at("positive_label").get<std::string>();
    model.base_score = json.at("base_score").get<double>();
    for (const auto& f : json.at("features")) {
      GbdtFeature feature;
      feature.name = f.at("name").get<std::string>();
      feature.kind = ParseColumnKind(f.at("kind").get<std::string>());
      feature.sentinel = f.at("sentinel").get<double>();
      feature.levels = f.at("levels").get<std::vector<std::string>>();
      model.features.push_back(std::move(feature));
    }
    model.loss_trace = json.at("loss_trace").get<std::vector<double>>();
    for (const auto& t : json.at("trees")) {
      std::vector<TreeNode> tree;
      for (const auto& n : t) {
        TreeNode node;
        if (n.contains("leaf")) {
          node.value = n.at("leaf").get<double>();
        } else {
          node.feature = n.at("feature").get<int>();
          node.left = n.at("left").get<int>();
          node.right = n.at("right").get<int>();
          if (n.contains("code")) {
            node.categorical = true;
            node.code = n.at("code").get<int>();
            node.unseen_left = n.at("unseen_left").get<bool>();
          } else {
            node.threshold = n.at("threshold").get<double>();
          }
        }
        tree.push_back(node);
      }
      for (const TreeNode& node : tree) {
        const auto size = static_cast<int>(tree.size());
        if (node.feature >= 0 &&
            (node.left <= 0 || node.left >= size || node.right <= 0 || node.right >= size ||
             node.feature >= static_cast<int>(model.features.size()))) {
          throw Error("gbdt: malformed tree");
        }
      }
      if (tree.empty()) throw Error("gbdt: empty tree");
      model.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gbdt: malformed model: ") + e.what());
  }
  return model;
}

void WriteScores(std::ostream& out, std::span<const double> scores) {
  out << "row,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << ',' << FormatNumber(scores[i]) << '\n';
  }
}

}  // namespace zgen
