// Acceptance suite: one pass/fail line per criterion.
//
// Criteria 1-4 need the public SemEval-2021 Task 5 CSVs (tsd_train.csv and
// tsd_test.csv) in $TOXSPAN_DATA_DIR (default ./data); without them those
// criteria are reported as SKIP. Criteria 5-11 always run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "toxspan/bow_tagger.hpp"
#include "toxspan/char_tagger.hpp"
#include "toxspan/combiner.hpp"
#include "toxspan/corpus.hpp"
#include "toxspan/evaluator.hpp"
#include "toxspan/span_model.hpp"

using namespace toxspan;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool ok,
            const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << name;
  if (!detail.empty()) {
    std::cout << " (" << detail << ")";
  }
  std::cout << "\n";
  if (!ok) ++failures;
}

void skip(int criterion, const std::string& name, const std::string& why) {
  std::cout << "SKIP criterion " << criterion << ": " << name << " (" << why << ")\n";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Dataset {
  bool available = false;
  Corpus train;
  Corpus test;
};

Dataset load_dataset() {
  Dataset data;
  const char* env = std::getenv("TOXSPAN_DATA_DIR");
  fs::path dir = env != nullptr ? fs::path(env) : fs::path("data");
  fs::path train_path = dir / "tsd_train.csv";
  fs::path test_path = dir / "tsd_test.csv";
  if (!fs::exists(train_path) || !fs::exists(test_path)) {
    return data;
  }
  data.train = parse_dataset(read_file(train_path));
  data.test = parse_dataset(read_file(test_path));
  data.available = true;
  return data;
}

// ---- criteria 1-4: dataset fidelity ----------------------------------

const char* kDatasetHint = "tsd_train.csv/tsd_test.csv not found in "
                           "$TOXSPAN_DATA_DIR (default ./data)";

void criterion_1_dictionary(const Dataset& data) {
  const std::string name = "dictionary fidelity on the full training set";
  if (!data.available) {
    skip(1, name, kDatasetHint);
    return;
  }
  ToxicDictionary dict = build_dictionary(data.train);
  struct Expect {
    const char* word;
    std::int64_t freq;
    double ratio;  // < 0 when only the count is pinned
  };
  const Expect expectations[] = {
      {"stupid", 973, 0.78},  {"idiot", 557, 0.84},  {"idiots", 353, 0.81},
      {"stupidity", 223, 0.77}, {"moron", 147, 0.71}, {"idiotic", 98, 0.74},
      {"hypocrite", 75, 0.88},  {"shit", 56, 0.72},   {"scum", 52, 0.70},
      {"hypocrites", 44, 0.76},
  };
  std::string detail;
  bool ok = true;
  for (const Expect& e : expectations) {
    auto it = dict.entries.find(e.word);
    if (it == dict.entries.end()) {
      ok = false;
      detail += std::string(e.word) + " missing; ";
      continue;
    }
    if (it->second.total_freq != e.freq) {
      ok = false;
      detail += std::string(e.word) + " freq " +
                std::to_string(it->second.total_freq) + " != " +
                std::to_string(e.freq) + "; ";
    }
    if (std::abs(it->second.toxicity_ratio() - e.ratio) > 0.01) {
      ok = false;
      detail += std::string(e.word) + " ratio " +
                std::to_string(it->second.toxicity_ratio()) + " !~ " +
                std::to_string(e.ratio) + "; ";
    }
  }
  // Top of the frequency ranking among ratio-qualified words.
  auto top = top_k_by_frequency(dict, 3, 0.7);
  const char* head[] = {"stupid", "idiot", "idiots"};
  for (std::size_t i = 0; i < 3; ++i) {
    if (top.size() <= i || top[i].word != head[i]) {
      ok = false;
      detail += "top-3 ranking mismatch; ";
      break;
    }
  }
  report(1, name, ok, detail);
}

void criterion_2_selection(const Dataset& data) {
  const std::string name = "params (40, 0.7) select exactly the 10 listed words";
  if (!data.available) {
    skip(2, name, kDatasetHint);
    return;
  }
  ToxicDictionary dict = build_dictionary(data.train);
  auto selected = select_toxic_words(dict, {40, 0.7});
  std::set<std::string> expected = {"stupid",    "idiot",   "idiots", "stupidity",
                                    "moron",     "idiotic", "hypocrite", "shit",
                                    "scum",      "hypocrites"};
  std::set<std::string> actual(selected.begin(), selected.end());
  std::string detail;
  if (actual != expected) {
    for (const auto& w : actual) {
      if (!expected.count(w)) detail += "+" + w + " ";
    }
    for (const auto& w : expected) {
      if (!actual.count(w)) detail += "-" + w + " ";
    }
  }
  report(2, name, actual == expected, detail);
}

double bow_mean_f1(const Corpus& train, const Corpus& test, TaggerParams params) {
  ToxicDictionary dict = build_dictionary(train);
  auto words = select_toxic_words(dict, params);
  std::vector<OffsetSet> preds;
  preds.reserve(test.size());
  for (const auto& row : test.rows) {
    preds.push_back(bow_tag_with_words(row.text, words));
  }
  return evaluate(preds, test).mean_f1;
}

void criterion_3_bow_scores(const Dataset& data) {
  const std::string name = "BoW v1/v2 mean F1 on the official test set";
  if (!data.available) {
    skip(3, name, kDatasetHint);
    return;
  }
  double v1 = bow_mean_f1(data.train, data.test, {40, 0.7}) * 100.0;
  double v2 = bow_mean_f1(data.train, data.test, {20, 0.4}) * 100.0;
  bool ok = std::abs(v1 - 51.75) <= 2.0 && std::abs(v2 - 62.79) <= 2.0;
  char detail[128];
  std::snprintf(detail, sizeof(detail), "v1=%.2f vs 51.75 +/-2.0, v2=%.2f vs 62.79 +/-2.0",
                v1, v2);
  report(3, name, ok, detail);
}

void criterion_4_grid(const Dataset& data) {
  const std::string name = "validation grid argmax at freq 20, ratio 0.3 or 0.4";
  if (!data.available) {
    skip(4, name, kDatasetHint);
    return;
  }
  if (data.train.size() < 7939) {
    report(4, name, false,
           "training set has " + std::to_string(data.train.size()) +
               " rows, expected at least 7939");
    return;
  }
  auto [head, tail] = split_corpus(data.train, 7000);
  Corpus validation;
  validation.rows.assign(tail.rows.begin(), tail.rows.begin() + 939);
  GridResult grid = grid_search(head, validation, {1, 10, 20, 40, 80},
                                {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}, 0);
  GridCell best = best_cell(grid);
  bool ok = best.min_freq == 20 &&
            (std::abs(best.min_ratio - 0.3) < 1e-9 ||
             std::abs(best.min_ratio - 0.4) < 1e-9);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "argmax freq=%lld ratio=%.1f F1=%.2f",
                static_cast<long long>(best.min_freq), best.min_ratio,
                best.mean_f1 * 100.0);
  report(4, name, ok, detail);
}

// ---- criteria 5-11: property based ------------------------------------

OffsetSet subset_from_bits(unsigned bits) {
  OffsetSet out;
  for (int i = 0; i < 6; ++i) {
    if (bits & (1u << i)) out.push_back(i);
  }
  return out;
}

void criterion_5_f1_oracle() {
  bool ok = true;
  std::string detail;
  for (unsigned p = 0; p < 64 && ok; ++p) {
    for (unsigned g = 0; g < 64 && ok; ++g) {
      OffsetSet pred = subset_from_bits(p);
      OffsetSet gold = subset_from_bits(g);
      double expected;
      if (pred.empty() && gold.empty()) {
        expected = 1.0;
      } else if (pred.empty() || gold.empty()) {
        expected = 0.0;
      } else {
        int hits = 0;
        for (int x : pred) {
          for (int y : gold) {
            if (x == y) ++hits;
          }
        }
        double precision = double(hits) / double(pred.size());
        double recall = double(hits) / double(gold.size());
        expected = (precision + recall == 0.0)
                       ? 0.0
                       : 2.0 * precision * recall / (precision + recall);
      }
      double actual = instance_f1(pred, gold);
      if (std::abs(actual - expected) > 1e-12) {
        ok = false;
        detail = "pred bits " + std::to_string(p) + ", gold bits " +
                 std::to_string(g);
      }
    }
  }
  report(5, "instance_f1 equals the brute-force oracle on 4096 subset pairs", ok,
         detail);
}

void criterion_6_round_trip() {
  std::mt19937 rng(6021);
  std::uniform_int_distribution<int> word_count(1, 10);
  std::uniform_int_distribution<int> word_len(1, 8);
  std::uniform_int_distribution<int> punct_len(0, 2);
  std::uniform_int_distribution<int> gap_len(1, 3);
  std::uniform_int_distribution<int> letter('a', 'z');
  const char puncts[] = {'.', ',', '!', '?', ';', ':', '\'', '"', '(', ')'};
  std::uniform_int_distribution<int> punct_pick(0, 9);
  std::bernoulli_distribution coin(0.4);

  bool ok = true;
  std::string detail;
  for (int iter = 0; iter < 1000 && ok; ++iter) {
    std::string text;
    std::vector<bool> toxic;
    int words = word_count(rng);
    for (int w = 0; w < words; ++w) {
      if (w > 0) text.append(gap_len(rng), ' ');
      int len = word_len(rng);
      for (int i = 0; i < len; ++i) text.push_back(char(letter(rng)));
      int punct = punct_len(rng);
      for (int i = 0; i < punct; ++i) text.push_back(puncts[punct_pick(rng)]);
      toxic.push_back(coin(rng));
    }
    auto tokens = tokenize(text);
    OffsetSet gold = spans_from_labels(tokens, labels_from_toxic_flags(toxic));
    OffsetSet again = spans_from_labels(tokens, label_tokens(tokens, gold));
    if (again != gold) {
      ok = false;
      detail = "text '" + text + "'";
    }
  }
  report(6, "label_tokens then spans_from_labels is the identity on "
            "token-aligned spans (1000 random texts)",
         ok, detail);
}

void criterion_7_antitonicity() {
  std::mt19937 rng(7001);
  std::uniform_int_distribution<int> vocab_size(1, 50);
  std::uniform_int_distribution<std::int64_t> total_dist(1, 300);
  std::uniform_int_distribution<std::int64_t> freq_dist(0, 120);
  std::uniform_real_distribution<double> ratio_dist(0.0, 1.0);

  bool ok = true;
  for (int iter = 0; iter < 200 && ok; ++iter) {
    ToxicDictionary dict;
    int n = vocab_size(rng);
    for (int i = 0; i < n; ++i) {
      std::string word = "w" + std::to_string(i);
      std::int64_t total = total_dist(rng);
      std::uniform_int_distribution<std::int64_t> toxic_dist(0, total);
      dict.entries[word] = {word, total, toxic_dist(rng)};
    }
    TaggerParams lo{freq_dist(rng), ratio_dist(rng)};
    TaggerParams freq_up{lo.min_freq + 1 + freq_dist(rng), lo.min_ratio};
    TaggerParams ratio_up{lo.min_freq,
                          std::min(1.0, lo.min_ratio + 0.01 + ratio_dist(rng) * 0.5)};
    auto base = select_toxic_words(dict, lo);
    for (const auto& words : {select_toxic_words(dict, freq_up),
                              select_toxic_words(dict, ratio_up)}) {
      for (const std::string& w : words) {
        if (!base.count(w)) ok = false;
      }
    }
  }
  report(7, "raising either threshold never grows the selected word set "
            "(200 random dictionaries)",
         ok);
}

void criterion_8_union_properties() {
  std::mt19937 rng(8001);
  std::uniform_int_distribution<int> count_dist(0, 10);
  std::uniform_int_distribution<int> value_dist(0, 20);
  auto random_set = [&] {
    OffsetSet out;
    int n = count_dist(rng);
    for (int i = 0; i < n; ++i) out.push_back(value_dist(rng));
    normalize_offsets(out);
    return out;
  };
  auto overlap = [](const OffsetSet& a, const OffsetSet& b) {
    int n = 0;
    for (int x : a) {
      if (std::binary_search(b.begin(), b.end(), x)) ++n;
    }
    return n;
  };

  bool ok = true;
  for (int iter = 0; iter < 1000 && ok; ++iter) {
    OffsetSet a = random_set();
    OffsetSet b = random_set();
    OffsetSet gold = random_set();
    OffsetSet ab = union_spans(a, b);
    if (ab != union_spans(b, a)) ok = false;
    if (union_spans(a, a) != a) ok = false;
    for (int x : a) {
      if (!std::binary_search(ab.begin(), ab.end(), x)) ok = false;
    }
    for (int x : b) {
      if (!std::binary_search(ab.begin(), ab.end(), x)) ok = false;
    }
    if (overlap(ab, gold) < std::max(overlap(a, gold), overlap(b, gold))) ok = false;
  }
  report(8, "union is commutative, idempotent, superset, and never loses "
            "recall (1000 random triples)",
         ok);
}

void criterion_9_gradient_check() {
  CharTaggerModel model = CharTaggerModel::init(testing::gradcheck_config());
  TrainingBatch batch = testing::gradcheck_batch(model);
  auto result = testing::gradient_check(model, batch);
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "max relative error %.3g over %zu parameters (worst: %s)",
                result.max_rel_error, result.checked, result.worst_param.c_str());
  report(9, "analytic gradients match central differences within 1e-4",
         result.max_rel_error < 1e-4, detail);
}

Corpus overfit_corpus() {
  auto annotate = [](const std::string& text) {
    AnnotatedText row{text, {}};
    auto tokens = tokenize(text);
    std::vector<bool> toxic;
    for (const auto& tok : tokens) {
      toxic.push_back(tok.surface.find("grump") != std::string::npos ||
                      tok.surface.find("sour") != std::string::npos);
    }
    row.gold_offsets = spans_from_labels(tokens, labels_from_toxic_flags(toxic));
    return row;
  };
  Corpus corpus;
  corpus.rows = {
      annotate("what a grump day"),    annotate("the sour note rings"),
      annotate("nothing wrong here"),  annotate("a grump and sour pair"),
      annotate("sunny calm morning"),  annotate("grump grump grump"),
      annotate("keep the sour away"),  annotate("plain words only"),
      annotate("that sour grump again"), annotate("all fine today"),
  };
  return corpus;
}

CharTaggerConfig overfit_config() {
  CharTaggerConfig config;
  config.max_word_chars = 16;
  config.char_embed_dim = 8;
  config.conv_filter_widths = {1, 2, 3};
  config.conv_filters_per_width = {8, 8, 8};
  config.highway_layers = 1;
  config.hidden_size = 16;
  config.num_layers = 1;
  config.num_heads = 2;
  config.max_words = 16;
  config.batch_size = 4;
  config.learning_rate = 0.05;
  config.seed = 3;
  return config;
}

void criterion_10_overfit() {
  CharTaggerConfig config = overfit_config();
  config.epochs = 200;
  Corpus corpus = overfit_corpus();
  CharTaggerModel model = CharTaggerModel::init(config);

  auto start = std::chrono::steady_clock::now();
  train(model, corpus, config);
  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& row : corpus.rows) {
    auto tokens = tokenize(row.text);
    auto gold = label_tokens(tokens, row.gold_offsets);
    auto pred = predict_labels(model, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (pred[t] == gold[t]) ++correct;
      ++total;
    }
  }
  double accuracy = double(correct) / double(total);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "token accuracy %.4f in %.1fs", accuracy,
                seconds);
  report(10, "char tagger overfits a 10-row corpus within 200 epochs under 60s",
         accuracy >= 0.99 && seconds < 60.0, detail);
}

void criterion_11_determinism() {
  // Grid matrices across runs and worker counts.
  Corpus train_set = overfit_corpus();
  Corpus eval_set;
  eval_set.rows.assign(train_set.rows.begin(), train_set.rows.begin() + 4);
  std::vector<std::int64_t> freqs = {1, 2, 3};
  std::vector<double> ratios = {0.2, 0.5, 0.8};
  GridResult g1 = grid_search(train_set, eval_set, freqs, ratios, 1);
  GridResult g4 = grid_search(train_set, eval_set, freqs, ratios, 4);
  GridResult g4b = grid_search(train_set, eval_set, freqs, ratios, 4);
  bool grids_ok = true;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    for (std::size_t j = 0; j < ratios.size(); ++j) {
      if (g1.f1[i][j] != g4.f1[i][j] || g4.f1[i][j] != g4b.f1[i][j]) {
        grids_ok = false;
      }
    }
  }

  // Trained models across runs with equal seeds.
  CharTaggerConfig config = overfit_config();
  config.epochs = 3;
  CharTaggerModel a = CharTaggerModel::init(config);
  CharTaggerModel b = CharTaggerModel::init(config);
  train(a, train_set, config);
  train(b, train_set, config);
  bool models_ok = true;
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p) {
    for (std::size_t i = 0; i < pa[p].second->size(); ++i) {
      if ((*pa[p].second)[i] != (*pb[p].second)[i]) models_ok = false;
    }
  }

  std::string detail;
  if (!grids_ok) detail += "grid matrices differ; ";
  if (!models_ok) detail += "trained parameters differ; ";
  report(11, "grids and trained models are bit-identical across runs and workers",
         grids_ok && models_ok, detail);
}

}  // namespace

int main() {
  Dataset data;
  try {
    data = load_dataset();
  } catch (const std::exception& e) {
    std::cout << "note: dataset present but unreadable: " << e.what() << "\n";
  }

  criterion_1_dictionary(data);
  criterion_2_selection(data);
  criterion_3_bow_scores(data);
  criterion_4_grid(data);
  criterion_5_f1_oracle();
  criterion_6_round_trip();
  criterion_7_antitonicity();
  criterion_8_union_properties();
  criterion_9_gradient_check();
  criterion_10_overfit();
  criterion_11_determinism();

  if (failures == 0) {
    std::cout << "all runnable criteria passed\n";
  } else {
    std::cout << failures << " criterion(s) failed\n";
  }
  return failures == 0 ? 0 : 1;
}
