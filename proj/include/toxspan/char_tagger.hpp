#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "toxspan/char_vocab.hpp"
#include "toxspan/corpus.hpp"
#include "toxspan/span_model.hpp"
#include "toxspan/tensor.hpp"

namespace toxspan {

// Character-aware neural sequence tagger: a CharacterCNN builds each word's
// embedding from its characters (multi-width convolutions, max pooling,
// highway layers, linear projection), a small transformer encoder with
// learned word-position embeddings contextualizes the words, and an affine
// + softmax head classifies each word as B, I, or O.
//
// The default configuration is desk scale: it trains on a laptop CPU and
// exercises the same mechanisms as the full-size model, whose BERT-base
// constants are available as the bert_base_scale() preset.
struct CharTaggerConfig {
  int max_word_chars = 50;  // includes the begin/end-of-word slots
  int char_embed_dim = 16;
  std::vector<int> conv_filter_widths = {1, 2, 3, 4, 5};
  std::vector<int> conv_filters_per_width = {8, 8, 16, 16, 16};
  int highway_layers = 2;
  int hidden_size = 64;
  int num_layers = 2;
  int num_heads = 4;
  int max_words = 128;
  int num_classes = 3;
  int batch_size = 4;
  int epochs = 1;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;

  int total_filters() const;
  int ffn_size() const { return 4 * hidden_size; }

  // Throws std::invalid_argument when any invariant fails (hidden size not
  // divisible by heads, width/filter sequences of different length, ...).
  void validate() const;

  static CharTaggerConfig desk_scale() { return CharTaggerConfig{}; }

  // BERT-base encoder constants; no pre-trained weights are shipped, so
  // this preset is only practical with a large training budget.
  static CharTaggerConfig bert_base_scale();
};

struct EncoderLayerParams {
  Tensor query_w, query_b;
  Tensor key_w, key_b;
  Tensor value_w, value_b;
  Tensor output_w, output_b;
  Tensor ln1_gamma, ln1_beta;
  Tensor ffn_w1, ffn_b1;
  Tensor ffn_w2, ffn_b2;
  Tensor ln2_gamma, ln2_beta;
};

struct CharTaggerModel {
  CharTaggerConfig config;
  CharVocab vocab;

  Tensor char_embed;                    // [vocab x char_embed_dim]
  std::vector<Tensor> conv_kernels;     // per width: [filters x width x embed]
  std::vector<Tensor> conv_biases;      // per width: [filters]
  std::vector<Tensor> highway_transform_w, highway_transform_b;
  std::vector<Tensor> highway_gate_w, highway_gate_b;
  Tensor proj_w, proj_b;                // [filters_total x hidden], [hidden]
  Tensor pos_embed;                     // [max_words x hidden]
  std::vector<EncoderLayerParams> layers;
  Tensor cls_w, cls_b;                  // [hidden x 3], [3]

  // Zero-filled parameters of the right shapes.
  static CharTaggerModel build(const CharTaggerConfig& config);
  // Seeded random initialization (deterministic for a given config.seed).
  static CharTaggerModel init(const CharTaggerConfig& config);
  // Gradient accumulator shaped like `model` with all parameters zero.
  static CharTaggerModel zeros_like(const CharTaggerModel& model);

  // Every learnable tensor with a stable name, in a fixed order shared by
  // the optimizer, the gradient checker, and the model file format.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
};

// B/I/O class indices used by the classifier head.
int bio_class_index(BioLabel label);
BioLabel bio_label_from_class(int index);

// Renders each word as begin-of-word id, character ids (unknown for
// out-of-vocabulary code points), end-of-word id, padded or truncated to
// max_word_chars columns.
std::vector<std::vector<int>> encode_words(const std::vector<TokenSpan>& tokens,
                                           const CharVocab& vocab,
                                           const CharTaggerConfig& config);

// Per-layer, per-head attention weights captured during a forward pass;
// attention[layer] has shape [heads x words x words].
struct EncoderTrace {
  std::vector<Tensor> attention;
};

// CharacterCNN stage: [words x max_word_chars] char ids -> [words x hidden]
// word embeddings.
Tensor char_cnn_forward(const std::vector<std::vector<int>>& char_ids,
                        const CharTaggerModel& model);

// Adds word-position embeddings and applies the transformer blocks. Words
// at index >= valid_words are padding: they are masked out of every
// attention row. Throws std::invalid_argument when the word count exceeds
// config.max_words.
Tensor encoder_forward(const Tensor& word_embeds, const CharTaggerModel& model,
                       std::size_t valid_words, EncoderTrace* trace = nullptr);

// Affine map plus row softmax: [words x hidden] -> [words x 3], each row a
// probability distribution over {B, I, O}.
Tensor classify(const Tensor& hidden, const CharTaggerModel& model);

// Full pipeline from char ids to class probabilities.
Tensor forward_probs(const CharTaggerModel& model,
                     const std::vector<std::vector<int>>& char_ids,
                     std::size_t valid_words, EncoderTrace* trace = nullptr);

struct TrainingBatch {
  // Aligned per sentence: char_ids[s] is [words x max_word_chars] and
  // labels[s] has one label per word.
  std::vector<std::vector<std::vector<int>>> char_ids;
  std::vector<std::vector<BioLabel>> labels;
};

// Mean token-level cross-entropy over every word of the batch, plus
// gradients for every parameter via backpropagation. `grads` must be shaped
// like `model` (see zeros_like); it is overwritten. Throws
// std::runtime_error with parameter norms if the loss is not finite.
double loss_and_gradients(const CharTaggerModel& model, const TrainingBatch& batch,
                          CharTaggerModel& grads);

// Plain mini-batch gradient descent using config.batch_size, config.epochs,
// and config.learning_rate, deterministic for a given config.seed. Rows are
// truncated to max_words words. Returns the mean token loss of each epoch
// and invokes on_epoch (when set) as each one finishes.
std::vector<double> train(CharTaggerModel& model, const Corpus& corpus,
                          const CharTaggerConfig& config,
                          const std::function<void(int, double)>& on_epoch = {});

// Argmax labels for one tokenized sentence, with I-after-O repaired to B.
// Tokens beyond max_words are labeled O.
std::vector<BioLabel> predict_labels(const CharTaggerModel& model,
                                     const std::vector<TokenSpan>& tokens);

// tokenize -> encode -> forward -> argmax -> repair -> spans_from_labels.
OffsetSet predict_spans(const CharTaggerModel& model, std::string_view text);

// Flat binary container of named parameter arrays with shapes, with the
// config serialized alongside; loading rebuilds the model and validates
// every name and shape. The byte layout is native-endian.
void save_model(const CharTaggerModel& model, const std::string& path);
CharTaggerModel load_model(const std::string& path);

}  // namespace toxspan
