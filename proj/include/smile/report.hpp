#pragma once

#include <string>
#include <vector>

#include "smile/eval.hpp"

namespace smile::report {

/// Per-fold cross-validation table plus mean/sd summary rows.
/// Columns: fold,n_test,accuracy,macro_f1,test_subjects
std::string cross_val_csv(const eval::CrossValResult& cv);

/// Columns: variant,mean_cv_accuracy
std::string ablation_csv(const eval::AblationResult& ab);

/// Square matrix M(u,v) = acc(u) - acc(v) with variant row/column labels.
std::string improvement_csv(const eval::AblationResult& ab);

/// Self-contained SVG renderings (no plotting dependency).
std::string bar_chart_svg(const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::string& title);
std::string heatmap_svg(const std::vector<std::string>& labels, const ad::Mat& values,
                        const std::string& title);

}  // namespace smile::report
