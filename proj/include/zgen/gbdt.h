#ifndef ZGEN_GBDT_H_
#define ZGEN_GBDT_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "zgen/table.h"

namespace zgen {

struct GbdtConfig {
  int trees = 200;
  int max_depth = 4;
  double learning_rate = 0.1;
  int min_leaf = 5;
  double l2 = 1.0;
  // Macro columns take part in training unless this is false.
  bool use_macro = true;
  std::uint64_t seed = 0;

  bool operator==(const GbdtConfig&) const = default;
};

void ValidateGbdtConfig(const GbdtConfig& config);
nlohmann::json GbdtConfigToJson(const GbdtConfig& config);
GbdtConfig GbdtConfigFromJson(const nlohmann::json& json, GbdtConfig base = {});

// How one table column is fed to the trees. Numeric and datetime features
// fill missing cells with `sentinel`; categorical features use code 0 for
// MISSING and 1..k for `levels`, and -1 for labels unseen at fit time.
struct GbdtFeature {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  double sentinel = 0.0;
  std::vector<std::string> levels;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  bool categorical = false;
  double threshold = 0.0;  // numeric: x <= threshold goes left
  int code = 0;            // categorical: code == this goes left
  bool unseen_left = false;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf log-odds increment (before learning rate)
};

struct GbdtModel {
  GbdtConfig config;
  std::vector<GbdtFeature> features;
  std::string target;
  std::string negative_label;
  std::string positive_label;
  bool target_categorical = true;
  double base_score = 0.0;
  std::vector<std::vector<TreeNode>> trees;
  // Mean training logistic loss after 0, 1, ..., trees trees.
  std::vector<double> loss_trace;
};

// Logistic boosting with Newton leaf weights w = -G / (H + l2), level-wise
// exact greedy splits. Training rows are put into a canonical order first,
// so row permutations of `train` give identical models.
GbdtModel FitGbdt(const Table& train, const GbdtConfig& config);

// Feature matrix (rows x features) under the model's feature encoding.
std::vector<double> GbdtFeatureMatrix(const GbdtModel& model, const Table& table);

// sigma(base + lr * sum of leaf values) over the first `max_trees` trees
// (all when absent).
std::vector<double> PredictProba(const GbdtModel& model, const Table& table,
                                 std::optional<int> max_trees = std::nullopt);

struct GridPoint {
  GbdtConfig config;
  double auc = 0.0;
};

struct GridResult {
  GbdtConfig best;
  double best_auc = 0.0;
  std::vector<GridPoint> points;  // grid order
};

// depth {3, 4, 6} x trees {100, 200, 400} x lr {0.05, 0.1}.
std::vector<GbdtConfig> DefaultGrid(const GbdtConfig& base = {});

// Highest validation AUC wins; ties go to fewer trees, then shallower, then
// lower learning rate, then grid order.
GridResult GridSearch(const Table& train, const Table& validation,
                      std::span<const GbdtConfig> grid);

enum class TargetMode { kProba, kThreshold };

// Replaces the target column of `synthetic` with model output. Proba mode
// makes the column numeric; threshold mode writes the model's class labels.
Table PredictTarget(const GbdtModel& model, const Table& synthetic,
                    TargetMode mode, double threshold = 0.5);

nlohmann::json GbdtToJson(const GbdtModel& model);
GbdtModel GbdtFromJson(const nlohmann::json& json);

// "row,score" CSV.
void WriteScores(std::ostream& out, std::span<const double> scores);

}  // namespace zgen

#endif  // ZGEN_GBDT_H_
