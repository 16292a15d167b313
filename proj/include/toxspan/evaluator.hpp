#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toxspan/bow_tagger.hpp"
#include "toxspan/corpus.hpp"

namespace toxspan {

struct EvalResult {
  std::vector<double> per_row_f1;
  double mean_f1 = 0.0;  // arithmetic mean; 0 for an empty corpus
};

// Per-instance character-offset F1. Both sets empty scores 1.0, exactly one
// empty scores 0.0, otherwise 2*|pred n gold| / (|pred| + |gold|).
double instance_f1(const OffsetSet& pred, const OffsetSet& gold);

// Scores one prediction per corpus row, aligned by index. Throws
// std::invalid_argument on a length mismatch.
EvalResult evaluate(const std::vector<OffsetSet>& preds, const Corpus& corpus);

// Mean F1 for reports: percentage with 2 decimals ("65.13").
std::string format_mean_f1(double mean_f1);

struct GridResult {
  std::vector<std::int64_t> freq_axis;
  std::vector<double> ratio_axis;
  // f1[i][j] = mean F1 at (freq_axis[i], ratio_axis[j]), values in [0, 1].
  std::vector<std::vector<double>> f1;
};

struct GridCell {
  std::int64_t min_freq = 0;
  double min_ratio = 0.0;
  double mean_f1 = 0.0;
};

// First cell (row-major) attaining the maximum mean F1.
GridCell best_cell(const GridResult& grid);

// Sweeps the BoW thresholds: builds the dictionary once from `train`, then
// scores bow_tag over `eval_set` for every (freq, ratio) cell. Cells are
// independent and may run on `workers` threads (0 = hardware concurrency);
// the resulting matrix is bit-identical for any worker count.
GridResult grid_search(const Corpus& train, const Corpus& eval_set,
                       const std::vector<std::int64_t>& freq_axis,
                       const std::vector<double>& ratio_axis,
                       unsigned workers = 1);

// Like grid_search, but each cell scores union_spans(bow, fixed_preds[row])
// instead of the bare BoW prediction. fixed_preds must align with eval_set
// by row index.
GridResult grid_search_combined(const Corpus& train, const Corpus& eval_set,
                                const std::vector<OffsetSet>& fixed_preds,
                                const std::vector<std::int64_t>& freq_axis,
                                const std::vector<double>& ratio_axis,
                                unsigned workers = 1);

// Matrix CSV with ratio values as column headers and frequencies as row
// labels, for external heatmap plotting.
std::string write_grid_csv(const GridResult& grid);

}  // namespace toxspan
