#include "toxspan/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "toxspan/combiner.hpp"
#include "toxspan/span_model.hpp"

namespace toxspan {

double instance_f1(const OffsetSet& pred, const OffsetSet& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  OffsetSet common;
  std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(),
                        std::back_inserter(common));
  return 2.0 * static_cast<double>(common.size()) /
         static_cast<double>(pred.size() + gold.size());
}

EvalResult evaluate(const std::vector<OffsetSet>& preds, const Corpus& corpus) {
  if (preds.size() != corpus.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(preds.size()) +
                                " predictions for " + std::to_string(corpus.size()) +
                                " rows");
  }
  EvalResult result;
  result.per_row_f1.reserve(preds.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double f1 = instance_f1(preds[i], corpus.rows[i].gold_offsets);
    result.per_row_f1.push_back(f1);
    sum += f1;
  }
  result.mean_f1 = preds.empty() ? 0.0 : sum / static_cast<double>(preds.size());
  return result;
}

std::string format_mean_f1(double mean_f1) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", mean_f1 * 100.0);
  return buf;
}

GridCell best_cell(const GridResult& grid) {
  GridCell best;
  bool first = true;
  for (std::size_t i = 0; i < grid.freq_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.ratio_axis.size(); ++j) {
      if (first || grid.f1[i][j] > best.mean_f1) {
        best = GridCell{grid.freq_axis[i], grid.ratio_axis[j], grid.f1[i][j]};
        first = false;
      }
    }
  }
  return best;
}

namespace {

// Tokenization, normalization, and bleep checks do not depend on the
// thresholds, so they are done once per row and shared by all cells.
struct PreparedRow {
  std::vector<TokenSpan> tokens;
  std::vector<std::string> normalized;
  std::vector<bool> bleeped;
  const OffsetSet* gold = nullptr;
  const OffsetSet* fixed = nullptr;
};

std::vector<PreparedRow> prepare_rows(const Corpus& eval_set,
                                      const std::vector<OffsetSet>* fixed_preds) {
  std::vector<PreparedRow> rows(eval_set.size());
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    PreparedRow& row = rows[i];
    row.tokens = tokenize(eval_set.rows[i].text);
    row.normalized.reserve(row.tokens.size());
    row.bleeped.reserve(row.tokens.size());
    for (const TokenSpan& tok : row.tokens) {
      row.normalized.push_back(normalize_word(tok.surface));
      row.bleeped.push_back(is_bleeped(tok.surface));
    }
    row.gold = &eval_set.rows[i].gold_offsets;
    if (fixed_preds != nullptr) {
      row.fixed = &(*fixed_preds)[i];
    }
  }
  return rows;
}

double score_cell(const ToxicDictionary& dict, const TaggerParams& params,
                  const std::vector<PreparedRow>& rows) {
  auto toxic_words = select_toxic_words(dict, params);
  double sum = 0.0;
  for (const PreparedRow& row : rows) {
    std::vector<bool> toxic(row.tokens.size());
    for (std::size_t t = 0; t < row.tokens.size(); ++t) {
      toxic[t] = row.bleeped[t] || toxic_words.count(row.normalized[t]) > 0;
    }
    OffsetSet pred = spans_from_labels(row.tokens, labels_from_toxic_flags(toxic));
    if (row.fixed != nullptr) {
      pred = union_spans(pred, *row.fixed);
    }
    sum += instance_f1(pred, *row.gold);
  }
  return rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
}

GridResult run_grid(const Corpus& train, const Corpus& eval_set,
                    const std::vector<OffsetSet>* fixed_preds,
                    const std::vector<std::int64_t>& freq_axis,
                    const std::vector<double>& ratio_axis, unsigned workers) {
  if (freq_axis.empty() || ratio_axis.empty()) {
    throw std::invalid_argument("grid_search: axes must be nonempty");
  }
  if (fixed_preds != nullptr && fixed_preds->size() != eval_set.size()) {
    throw std::invalid_argument("grid_search_combined: " +
                                std::to_string(fixed_preds->size()) +
                                " fixed predictions for " +
                                std::to_string(eval_set.size()) + " rows");
  }

  GridResult grid;
  grid.freq_axis = freq_axis;
  grid.ratio_axis = ratio_axis;
  grid.f1.assign(freq_axis.size(), std::vector<double>(ratio_axis.size(), 0.0));

  const ToxicDictionary dict = build_dictionary(train);
  const auto rows = prepare_rows(eval_set, fixed_preds);

  const std::size_t cells = freq_axis.size() * ratio_axis.size();
  if (workers == 0) {
    workers = std::max(1u, std::thread::hardware_concurrency());
  }
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cells));

  auto worker = [&](std::atomic<std::size_t>& next) {
    for (std::size_t cell = next.fetch_add(1); cell < cells; cell = next.fetch_add(1)) {
      std::size_t i = cell / ratio_axis.size();
      std::size_t j = cell % ratio_axis.size();
      grid.f1[i][j] = score_cell(dict, TaggerParams{freq_axis[i], ratio_axis[j]}, rows);
    }
  };

  if (workers <= 1) {
    std::atomic<std::size_t> next{0};
    worker(next);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] { worker(next); });
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }
  return grid;
}

}  // namespace

GridResult grid_search(const Corpus& train, const Corpus& eval_set,
                       const std::vector<std::int64_t>& freq_axis,
                       const std::vector<double>& ratio_axis, unsigned workers) {
  return run_grid(train, eval_set, nullptr, freq_axis, ratio_axis, workers);
}

GridResult grid_search_combined(const Corpus& train, const Corpus& eval_set,
                                const std::vector<OffsetSet>& fixed_preds,
                                const std::vector<std::int64_t>& freq_axis,
                                const std::vector<double>& ratio_axis,
                                unsigned workers) {
  return run_grid(train, eval_set, &fixed_preds, freq_axis, ratio_axis, workers);
}

std::string write_grid_csv(const GridResult& grid) {
  std::ostringstream out;
  out << "freq";
  char buf[64];
  for (double ratio : grid.ratio_axis) {
    std::snprintf(buf, sizeof(buf), "%g", ratio);
    out << ',' << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < grid.freq_axis.size(); ++i) {
    out << grid.freq_axis[i];
    for (std::size_t j = 0; j < grid.ratio_axis.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f", grid.f1[i][j]);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace toxspan
