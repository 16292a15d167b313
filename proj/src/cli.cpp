#include "toxspan/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "toxspan/bow_tagger.hpp"
#include "toxspan/char_tagger.hpp"
#include "toxspan/combiner.hpp"
#include "toxspan/corpus.hpp"
#include "toxspan/evaluator.hpp"

namespace toxspan {
namespace cli {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open file for writing: " + path);
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw std::runtime_error("failed writing file: " + path);
  }
}

std::vector<PredictionRow> predictions_to_rows(const std::vector<OffsetSet>& preds) {
  std::vector<PredictionRow> rows;
  rows.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    rows.emplace_back(static_cast<std::int64_t>(i), preds[i]);
  }
  return rows;
}

std::string predictions_to_csv(const std::vector<OffsetSet>& preds) {
  std::ostringstream out;
  write_predictions(predictions_to_rows(preds), out);
  return out.str();
}

struct Options {
  std::string train_path;
  std::string input_path;
  std::string dict_path;
  std::string model_path;
  std::string pred_path;
  std::string gold_path;
  std::string a_path;
  std::string b_path;
  std::string fixed_path;
  std::string out_path;
  std::string out_train_path;
  std::string out_eval_path;
  std::int64_t min_freq = 40;
  double min_ratio = 0.7;
  std::size_t train_size = 0;
  std::vector<std::int64_t> freqs = {1, 10, 20, 40, 80, 160};
  std::vector<double> ratios = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  unsigned workers = 1;
  CharTaggerConfig tagger;
  bool bert_base = false;
};

void add_tagger_flags(CLI::App* cmd, Options& opt) {
  cmd->add_option("--max-word-chars", opt.tagger.max_word_chars);
  cmd->add_option("--char-embed-dim", opt.tagger.char_embed_dim);
  cmd->add_option("--conv-widths", opt.tagger.conv_filter_widths)->delimiter(',');
  cmd->add_option("--conv-filters", opt.tagger.conv_filters_per_width)->delimiter(',');
  cmd->add_option("--highway-layers", opt.tagger.highway_layers);
  cmd->add_option("--hidden-size", opt.tagger.hidden_size);
  cmd->add_option("--num-layers", opt.tagger.num_layers);
  cmd->add_option("--num-heads", opt.tagger.num_heads);
  cmd->add_option("--max-words", opt.tagger.max_words);
  cmd->add_option("--batch-size", opt.tagger.batch_size);
  cmd->add_option("--epochs", opt.tagger.epochs);
  cmd->add_option("--learning-rate", opt.tagger.learning_rate);
  cmd->add_option("--seed", opt.tagger.seed);
  cmd->add_flag("--bert-base", opt.bert_base,
                "use the BERT-base encoder constants (12 layers, hidden 768, "
                "12 heads) instead of the desk-scale defaults");
}

int cmd_build_dict(const Options& opt, std::ostream& out, std::ostream& err) {
  Corpus train = parse_dataset(read_file(opt.train_path), &err);
  ToxicDictionary dict = build_dictionary(train);
  write_file(opt.out_path, write_dictionary(dict));
  out << "dictionary: " << dict.entries.size() << " words from " << train.size()
      << " rows\n";
  return 0;
}

int cmd_tag_bow(const Options& opt, std::ostream& out, std::ostream& err) {
  ToxicDictionary dict = read_dictionary(read_file(opt.dict_path));
  Corpus input = parse_dataset(read_file(opt.input_path), &err);
  TaggerParams params{opt.min_freq, opt.min_ratio};
  auto toxic_words = select_toxic_words(dict, params);
  std::vector<OffsetSet> preds;
  preds.reserve(input.size());
  for (const AnnotatedText& row : input.rows) {
    preds.push_back(bow_tag_with_words(row.text, toxic_words));
  }
  write_file(opt.out_path, predictions_to_csv(preds));
  out << "tagged " << preds.size() << " rows with min_freq=" << opt.min_freq
      << " min_ratio=" << opt.min_ratio << " (" << toxic_words.size()
      << " dictionary words)\n";
  return 0;
}

int cmd_combine(const Options& opt, std::ostream& out, std::ostream&) {
  auto a = read_predictions(read_file(opt.a_path));
  auto b = read_predictions(read_file(opt.b_path));
  if (a.size() != b.size()) {
    throw std::invalid_argument("prediction files differ in row count: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  auto by_id = [](const PredictionRow& x, const PredictionRow& y) {
    return x.first < y.first;
  };
  std::sort(a.begin(), a.end(), by_id);
  std::sort(b.begin(), b.end(), by_id);
  std::vector<PredictionRow> merged;
  merged.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) {
      throw std::invalid_argument("prediction files disagree on row ids (" +
                                  std::to_string(a[i].first) + " vs " +
                                  std::to_string(b[i].first) + ")");
    }
    merged.emplace_back(a[i].first, union_spans(a[i].second, b[i].second));
  }
  std::ostringstream buffer;
  write_predictions(merged, buffer);
  write_file(opt.out_path, buffer.str());
  out << "combined " << merged.size() << " rows\n";
  return 0;
}

int cmd_evaluate(const Options& opt, std::ostream& out, std::ostream& err) {
  Corpus gold = parse_dataset(read_file(opt.gold_path), &err);
  auto preds = align_predictions(read_predictions(read_file(opt.pred_path)),
                                 gold.size());
  EvalResult result = evaluate(preds, gold);
  for (std::size_t i = 0; i < result.per_row_f1.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", result.per_row_f1[i]);
    out << i << '\t' << buf << '\n';
  }
  out << "F1: " << format_mean_f1(result.mean_f1) << '\n';
  return 0;
}

int cmd_grid(const Options& opt, bool combined, std::ostream& out, std::ostream& err) {
  Corpus train = parse_dataset(read_file(opt.train_path), &err);
  Corpus eval_set = parse_dataset(read_file(opt.input_path), &err);
  GridResult grid;
  if (combined) {
    auto fixed = align_predictions(read_predictions(read_file(opt.fixed_path)),
                                   eval_set.size());
    grid = grid_search_combined(train, eval_set, fixed, opt.freqs, opt.ratios,
                                opt.workers);
  } else {
    grid = grid_search(train, eval_set, opt.freqs, opt.ratios, opt.workers);
  }
  write_file(opt.out_path, write_grid_csv(grid));
  GridCell best = best_cell(grid);
  out << "best: freq=" << best.min_freq << " ratio=" << best.min_ratio
      << " F1=" << format_mean_f1(best.mean_f1) << '\n';
  return 0;
}

int cmd_split(const Options& opt, std::ostream& out, std::ostream& err) {
  Corpus corpus = parse_dataset(read_file(opt.input_path), &err);
  auto [head, tail] = split_corpus(corpus, opt.train_size);
  write_file(opt.out_train_path, write_corpus(head));
  write_file(opt.out_eval_path, write_corpus(tail));
  out << "split " << corpus.size() << " rows into " << head.size() << " + "
      << tail.size() << '\n';
  return 0;
}

int cmd_train_char(const Options& opt, std::ostream& out, std::ostream& err) {
  CharTaggerConfig config = opt.tagger;
  Corpus train_set = parse_dataset(read_file(opt.train_path), &err);
  CharTaggerModel model = CharTaggerModel::init(config);
  train(model, train_set, config, [&out](int epoch, double loss) {
    out << "epoch " << epoch << ": mean loss " << loss << '\n';
  });
  save_model(model, opt.out_path);
  out << "saved model to " << opt.out_path << '\n';
  return 0;
}

int cmd_predict_char(const Options& opt, std::ostream& out, std::ostream& err) {
  CharTaggerModel model = load_model(opt.model_path);
  Corpus input = parse_dataset(read_file(opt.input_path), &err);
  std::vector<OffsetSet> preds;
  preds.reserve(input.size());
  for (const AnnotatedText& row : input.rows) {
    preds.push_back(predict_spans(model, row.text));
  }
  write_file(opt.out_path, predictions_to_csv(preds));
  out << "predicted " << preds.size() << " rows\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Toxic span detection toolkit"};
  app.name("toxspan");
  app.require_subcommand(1);
  Options opt;

  CLI::App* build_dict = app.add_subcommand(
      "build-dict", "build the toxic word dictionary from a training CSV");
  build_dict->add_option("--train", opt.train_path, "training CSV (spans,text)")
      ->required();
  build_dict->add_option("--out", opt.out_path, "dictionary CSV to write")
      ->required();

  CLI::App* tag_bow = app.add_subcommand(
      "tag-bow", "tag a CSV with the bag-of-words model");
  tag_bow->add_option("--dict", opt.dict_path, "dictionary CSV")->required();
  tag_bow->add_option("--input", opt.input_path, "input CSV (spans,text)")
      ->required();
  tag_bow->add_option("--out", opt.out_path, "predictions CSV to write")
      ->required();
  tag_bow->add_option("--min-freq", opt.min_freq, "minimum total frequency");
  tag_bow->add_option("--min-ratio", opt.min_ratio, "minimum toxicity ratio");

  CLI::App* combine = app.add_subcommand(
      "combine", "union of two prediction files, row by row");
  combine->add_option("--a", opt.a_path, "first predictions CSV")->required();
  combine->add_option("--b", opt.b_path, "second predictions CSV")->required();
  combine->add_option("--out", opt.out_path, "combined predictions CSV")
      ->required();

  CLI::App* evaluate_cmd = app.add_subcommand(
      "evaluate", "score predictions against gold spans");
  evaluate_cmd->add_option("--pred", opt.pred_path, "predictions CSV")->required();
  evaluate_cmd->add_option("--gold", opt.gold_path, "gold CSV (spans,text)")
      ->required();

  CLI::App* grid = app.add_subcommand(
      "grid", "sweep BoW thresholds on a train/eval split");
  CLI::App* grid_combined = app.add_subcommand(
      "grid-combined", "threshold sweep of the BoW model unioned with fixed "
                       "predictions");
  for (CLI::App* cmd : {grid, grid_combined}) {
    cmd->add_option("--train", opt.train_path, "training CSV")->required();
    cmd->add_option("--eval", opt.input_path, "evaluation CSV")->required();
    cmd->add_option("--out", opt.out_path, "matrix CSV to write")->required();
    cmd->add_option("--freqs", opt.freqs, "frequency axis")->delimiter(',');
    cmd->add_option("--ratios", opt.ratios, "ratio axis")->delimiter(',');
    cmd->add_option("--workers", opt.workers,
                    "worker threads (0 = hardware concurrency)");
  }
  grid_combined->add_option("--fixed", opt.fixed_path, "fixed predictions CSV")
      ->required();

  CLI::App* split = app.add_subcommand(
      "split", "split a corpus CSV at a row boundary");
  split->add_option("--input", opt.input_path, "corpus CSV")->required();
  split->add_option("--train-size", opt.train_size, "rows in the first part")
      ->required();
  split->add_option("--out-train", opt.out_train_path, "first part CSV")
      ->required();
  split->add_option("--out-eval", opt.out_eval_path, "second part CSV")
      ->required();

  CLI::App* train_char = app.add_subcommand(
      "train-char", "train the character-aware neural tagger");
  train_char->add_option("--train", opt.train_path, "training CSV")->required();
  train_char->add_option("--out", opt.out_path, "model file to write")->required();
  add_tagger_flags(train_char, opt);

  CLI::App* predict_char = app.add_subcommand(
      "predict-char", "predict spans with a trained neural tagger");
  predict_char->add_option("--model", opt.model_path, "model file")->required();
  predict_char->add_option("--input", opt.input_path, "input CSV")->required();
  predict_char->add_option("--out", opt.out_path, "predictions CSV to write")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    err << app.help();
    return 2;
  }

  if (opt.bert_base) {
    CharTaggerConfig preset = CharTaggerConfig::bert_base_scale();
    preset.batch_size = opt.tagger.batch_size;
    preset.epochs = opt.tagger.epochs;
    preset.learning_rate = opt.tagger.learning_rate;
    preset.seed = opt.tagger.seed;
    opt.tagger = preset;
  }

  try {
    if (build_dict->parsed()) return cmd_build_dict(opt, out, err);
    if (tag_bow->parsed()) return cmd_tag_bow(opt, out, err);
    if (combine->parsed()) return cmd_combine(opt, out, err);
    if (evaluate_cmd->parsed()) return cmd_evaluate(opt, out, err);
    if (grid->parsed()) return cmd_grid(opt, false, out, err);
    if (grid_combined->parsed()) return cmd_grid(opt, true, out, err);
    if (split->parsed()) return cmd_split(opt, out, err);
    if (train_char->parsed()) return cmd_train_char(opt, out, err);
    if (predict_char->parsed()) return cmd_predict_char(opt, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << "error: no subcommand given\n";
  return 2;
}

}  // namespace cli
}  // namespace toxspan
