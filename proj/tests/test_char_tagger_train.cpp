#include <chrono>

#include <doctest.h>

#include "toxspan/char_tagger.hpp"
#include "toxspan/span_model.hpp"

using namespace toxspan;

namespace {

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

// Ten rows with a consistent rule: "grump" and "sour" are always toxic.
Corpus synthetic_corpus() {
  auto annotate = [](const std::string& text) {
    AnnotatedText row{text, {}};
    auto tokens = tokenize(text);
    std::vector<bool> toxic;
    for (const auto& tok : tokens) {
      std::string s = tok.surface;
      toxic.push_back(s.find("grump") != std::string::npos ||
                      s.find("sour") != std::string::npos);
    }
    row.gold_offsets = spans_from_labels(tokens, labels_from_toxic_flags(toxic));
    return row;
  };
  Corpus corpus;
  corpus.rows = {
      annotate("what a grump day"),
      annotate("the sour note rings"),
      annotate("nothing wrong here"),
      annotate("a grump and sour pair"),
      annotate("sunny calm morning"),
      annotate("grump grump grump"),
      annotate("keep the sour away"),
      annotate("plain words only"),
      annotate("that sour grump again"),
      annotate("all fine today"),
  };
  return corpus;
}

double token_accuracy(const CharTaggerModel& model, const Corpus& corpus) {
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
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("training overfits a 10-row synthetic corpus") {
  CharTaggerConfig config = overfit_config();
  config.epochs = 200;
  Corpus corpus = synthetic_corpus();
  CharTaggerModel model = CharTaggerModel::init(config);

  auto start = std::chrono::steady_clock::now();
  auto losses = train(model, corpus, config);
  auto elapsed = std::chrono::duration<double>(
      std::chrono::steady_clock::now() - start);

  REQUIRE(losses.size() == 200);
  CHECK(losses.back() < losses.front());
  CHECK(token_accuracy(model, corpus) >= 0.99);
  CHECK(elapsed.count() < 60.0);
}

TEST_CASE("zero epochs leaves the model unchanged") {
  CharTaggerConfig config = overfit_config();
  config.epochs = 0;
  CharTaggerModel model = CharTaggerModel::init(config);
  CharTaggerModel before = model;
  auto losses = train(model, synthetic_corpus(), config);
  CHECK(losses.empty());
  auto a = before.parameters();
  auto b = model.parameters();
  for (std::size_t p = 0; p < a.size(); ++p) {
    for (std::size_t i = 0; i < a[p].second->size(); ++i) {
      CHECK((*a[p].second)[i] == (*b[p].second)[i]);
    }
  }
}

TEST_CASE("equal seeds give bit-identical trained parameters") {
  CharTaggerConfig config = overfit_config();
  config.epochs = 3;
  Corpus corpus = synthetic_corpus();

  CharTaggerModel first = CharTaggerModel::init(config);
  CharTaggerModel second = CharTaggerModel::init(config);
  train(first, corpus, config);
  train(second, corpus, config);

  auto a = first.parameters();
  auto b = second.parameters();
  for (std::size_t p = 0; p < a.size(); ++p) {
    for (std::size_t i = 0; i < a[p].second->size(); ++i) {
      CHECK((*a[p].second)[i] == (*b[p].second)[i]);
    }
  }

  // A different seed diverges.
  CharTaggerConfig other = config;
  other.seed = config.seed + 1;
  CharTaggerModel third = CharTaggerModel::init(other);
  bool any_diff = false;
  auto c = third.parameters();
  for (std::size_t p = 0; p < a.size() && !any_diff; ++p) {
    for (std::size_t i = 0; i < a[p].second->size(); ++i) {
      if ((*a[p].second)[i] != (*c[p].second)[i]) {
        any_diff = true;
        break;
      }
    }
  }
  CHECK(any_diff);
}

TEST_CASE("train reports per-epoch mean loss through the callback") {
  CharTaggerConfig config = overfit_config();
  config.epochs = 2;
  CharTaggerModel model = CharTaggerModel::init(config);
  std::vector<std::pair<int, double>> seen;
  auto losses = train(model, synthetic_corpus(), config,
                      [&seen](int epoch, double loss) {
                        seen.emplace_back(epoch, loss);
                      });
  REQUIRE(seen.size() == 2);
  CHECK(seen[0].first == 0);
  CHECK(seen[1].first == 1);
  CHECK(seen[0].second == losses[0]);
  CHECK(seen[1].second == losses[1]);
}

TEST_CASE("train skips empty rows and handles short corpora") {
  CharTaggerConfig config = overfit_config();
  config.epochs = 1;
  Corpus corpus;
  corpus.rows.push_back({"", {}});
  corpus.rows.push_back({"   ", {}});
  CharTaggerModel model = CharTaggerModel::init(config);
  auto losses = train(model, corpus, config);
  CHECK(losses.empty());  // nothing to train on
}

TEST_CASE("train truncates rows longer than max_words") {
  CharTaggerConfig config = overfit_config();
  config.max_words = 3;
  config.epochs = 1;
  Corpus corpus;
  corpus.rows.push_back({"one two three four five six", {0, 1, 2}});
  CharTaggerModel model = CharTaggerModel::init(config);
  CHECK_NOTHROW(train(model, corpus, config));
}
