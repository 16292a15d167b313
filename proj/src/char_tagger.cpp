#include "toxspan/char_tagger.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "toxspan/nn_ops.hpp"
#include "toxspan/utf8.hpp"

namespace toxspan {

namespace {

constexpr double kMaskedScore = -1e30;

std::size_t u(int v) { return static_cast<std::size_t>(v); }

}  // namespace

int CharTaggerConfig::total_filters() const {
  return std::accumulate(conv_filters_per_width.begin(),
                         conv_filters_per_width.end(), 0);
}

void CharTaggerConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("CharTaggerConfig: ") + what);
  };
  require(conv_filter_widths.size() == conv_filters_per_width.size(),
          "conv width and filter-count sequences must have equal length");
  require(!conv_filter_widths.empty(), "at least one convolution width");
  for (std::size_t i = 0; i < conv_filter_widths.size(); ++i) {
    require(conv_filter_widths[i] >= 1, "conv widths must be positive");
    require(conv_filters_per_width[i] >= 1, "filter counts must be positive");
    require(conv_filter_widths[i] <= max_word_chars,
            "conv width exceeds max_word_chars");
  }
  require(max_word_chars >= 3, "max_word_chars must fit begin/end markers");
  require(char_embed_dim >= 1, "char_embed_dim must be positive");
  require(highway_layers >= 0, "highway_layers must be non-negative");
  require(hidden_size >= 1, "hidden_size must be positive");
  require(num_layers >= 0, "num_layers must be non-negative");
  require(num_heads >= 1, "num_heads must be positive");
  require(hidden_size % num_heads == 0, "hidden_size must be divisible by num_heads");
  require(max_words >= 1, "max_words must be positive");
  require(num_classes == 3, "num_classes is fixed at 3 (B, I, O)");
  require(batch_size >= 1, "batch_size must be positive");
  require(epochs >= 0, "epochs must be non-negative");
}

CharTaggerConfig CharTaggerConfig::bert_base_scale() {
  CharTaggerConfig config;
  config.hidden_size = 768;
  config.num_layers = 12;
  config.num_heads = 12;
  config.max_words = 512;
  config.char_embed_dim = 16;
  config.conv_filter_widths = {1, 2, 3, 4, 5, 6, 7};
  config.conv_filters_per_width = {32, 32, 64, 128, 256, 512, 1024};
  return config;
}

CharTaggerModel CharTaggerModel::build(const CharTaggerConfig& config) {
  config.validate();
  CharTaggerModel model;
  model.config = config;

  const std::size_t vocab = u(model.vocab.size());
  const std::size_t embed = u(config.char_embed_dim);
  const std::size_t filters = u(config.total_filters());
  const std::size_t hidden = u(config.hidden_size);
  const std::size_t ffn = u(config.ffn_size());

  model.char_embed = Tensor({vocab, embed});
  for (std::size_t k = 0; k < config.conv_filter_widths.size(); ++k) {
    model.conv_kernels.emplace_back(Tensor(
        {u(config.conv_filters_per_width[k]), u(config.conv_filter_widths[k]), embed}));
    model.conv_biases.emplace_back(Tensor({u(config.conv_filters_per_width[k])}));
  }
  for (int l = 0; l < config.highway_layers; ++l) {
    model.highway_transform_w.emplace_back(Tensor({filters, filters}));
    model.highway_transform_b.emplace_back(Tensor({filters}));
    model.highway_gate_w.emplace_back(Tensor({filters, filters}));
    model.highway_gate_b.emplace_back(Tensor({filters}));
  }
  model.proj_w = Tensor({filters, hidden});
  model.proj_b = Tensor({hidden});
  model.pos_embed = Tensor({u(config.max_words), hidden});
  for (int l = 0; l < config.num_layers; ++l) {
    EncoderLayerParams layer;
    layer.query_w = Tensor({hidden, hidden});
    layer.query_b = Tensor({hidden});
    layer.key_w = Tensor({hidden, hidden});
    layer.key_b = Tensor({hidden});
    layer.value_w = Tensor({hidden, hidden});
    layer.value_b = Tensor({hidden});
    layer.output_w = Tensor({hidden, hidden});
    layer.output_b = Tensor({hidden});
    layer.ln1_gamma = Tensor({hidden});
    layer.ln1_beta = Tensor({hidden});
    layer.ffn_w1 = Tensor({hidden, ffn});
    layer.ffn_b1 = Tensor({ffn});
    layer.ffn_w2 = Tensor({ffn, hidden});
    layer.ffn_b2 = Tensor({hidden});
    layer.ln2_gamma = Tensor({hidden});
    layer.ln2_beta = Tensor({hidden});
    model.layers.push_back(std::move(layer));
  }
  model.cls_w = Tensor({hidden, u(config.num_classes)});
  model.cls_b = Tensor({u(config.num_classes)});
  return model;
}

namespace {

void fill_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

void fill_glorot(Tensor& t, std::mt19937_64& rng, std::size_t fan_in,
                 std::size_t fan_out) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

}  // namespace

CharTaggerModel CharTaggerModel::init(const CharTaggerConfig& config) {
  CharTaggerModel model = build(config);
  std::mt19937_64 rng(config.seed);

  const std::size_t embed = u(config.char_embed_dim);
  const std::size_t filters = u(config.total_filters());
  const std::size_t hidden = u(config.hidden_size);
  const std::size_t ffn = u(config.ffn_size());

  fill_normal(model.char_embed, rng, 0.1);
  for (std::size_t k = 0; k < model.conv_kernels.size(); ++k) {
    std::size_t fan_in = u(config.conv_filter_widths[k]) * embed;
    fill_glorot(model.conv_kernels[k], rng, fan_in,
                u(config.conv_filters_per_width[k]));
  }
  for (int l = 0; l < config.highway_layers; ++l) {
    fill_glorot(model.highway_transform_w[l], rng, filters, filters);
    fill_glorot(model.highway_gate_w[l], rng, filters, filters);
    // Carry-biased gates keep early training close to the identity map.
    model.highway_gate_b[l].fill(-1.0);
  }
  fill_glorot(model.proj_w, rng, filters, hidden);
  fill_normal(model.pos_embed, rng, 0.02);
  for (EncoderLayerParams& layer : model.layers) {
    fill_glorot(layer.query_w, rng, hidden, hidden);
    fill_glorot(layer.key_w, rng, hidden, hidden);
    fill_glorot(layer.value_w, rng, hidden, hidden);
    fill_glorot(layer.output_w, rng, hidden, hidden);
    layer.ln1_gamma.fill(1.0);
    layer.ln2_gamma.fill(1.0);
    fill_glorot(layer.ffn_w1, rng, hidden, ffn);
    fill_glorot(layer.ffn_w2, rng, ffn, hidden);
  }
  fill_glorot(model.cls_w, rng, hidden, u(config.num_classes));
  return model;
}

CharTaggerModel CharTaggerModel::zeros_like(const CharTaggerModel& model) {
  return build(model.config);
}

namespace {

template <typename Model, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> collect_parameters(Model& model) {
  std::vector<std::pair<std::string, TensorPtr>> params;
  params.emplace_back("char_embed", &model.char_embed);
  for (std::size_t k = 0; k < model.conv_kernels.size(); ++k) {
    params.emplace_back("conv" + std::to_string(k) + ".kernel", &model.conv_kernels[k]);
    params.emplace_back("conv" + std::to_string(k) + ".bias", &model.conv_biases[k]);
  }
  for (std::size_t l = 0; l < model.highway_transform_w.size(); ++l) {
    std::string prefix = "highway" + std::to_string(l) + ".";
    params.emplace_back(prefix + "transform_w", &model.highway_transform_w[l]);
    params.emplace_back(prefix + "transform_b", &model.highway_transform_b[l]);
    params.emplace_back(prefix + "gate_w", &model.highway_gate_w[l]);
    params.emplace_back(prefix + "gate_b", &model.highway_gate_b[l]);
  }
  params.emplace_back("proj_w", &model.proj_w);
  params.emplace_back("proj_b", &model.proj_b);
  params.emplace_back("pos_embed", &model.pos_embed);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    std::string prefix = "layer" + std::to_string(l) + ".";
    auto& layer = model.layers[l];
    params.emplace_back(prefix + "query_w", &layer.query_w);
    params.emplace_back(prefix + "query_b", &layer.query_b);
    params.emplace_back(prefix + "key_w", &layer.key_w);
    params.emplace_back(prefix + "key_b", &layer.key_b);
    params.emplace_back(prefix + "value_w", &layer.value_w);
    params.emplace_back(prefix + "value_b", &layer.value_b);
    params.emplace_back(prefix + "output_w", &layer.output_w);
    params.emplace_back(prefix + "output_b", &layer.output_b);
    params.emplace_back(prefix + "ln1_gamma", &layer.ln1_gamma);
    params.emplace_back(prefix + "ln1_beta", &layer.ln1_beta);
    params.emplace_back(prefix + "ffn_w1", &layer.ffn_w1);
    params.emplace_back(prefix + "ffn_b1", &layer.ffn_b1);
    params.emplace_back(prefix + "ffn_w2", &layer.ffn_w2);
    params.emplace_back(prefix + "ffn_b2", &layer.ffn_b2);
    params.emplace_back(prefix + "ln2_gamma", &layer.ln2_gamma);
    params.emplace_back(prefix + "ln2_beta", &layer.ln2_beta);
  }
  params.emplace_back("cls_w", &model.cls_w);
  params.emplace_back("cls_b", &model.cls_b);
  return params;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> CharTaggerModel::parameters() {
  return collect_parameters<CharTaggerModel, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> CharTaggerModel::parameters() const {
  return collect_parameters<const CharTaggerModel, const Tensor*>(*this);
}

int bio_class_index(BioLabel label) {
  switch (label) {
    case BioLabel::B: return 0;
    case BioLabel::I: return 1;
    case BioLabel::O: return 2;
  }
  return 2;
}

BioLabel bio_label_from_class(int index) {
  switch (index) {
    case 0: return BioLabel::B;
    case 1: return BioLabel::I;
    default: return BioLabel::O;
  }
}

std::vector<std::vector<int>> encode_words(const std::vector<TokenSpan>& tokens,
                                           const CharVocab& vocab,
                                           const CharTaggerConfig& config) {
  const std::size_t width = u(config.max_word_chars);
  std::vector<std::vector<int>> out;
  out.reserve(tokens.size());
  for (const TokenSpan& token : tokens) {
    std::vector<int> row(width, CharVocab::kPad);
    std::size_t pos = 0;
    row[pos++] = CharVocab::kBeginWord;
    utf8::DecodedText chars(token.surface);
    std::size_t keep = std::min(chars.size(), width - 2);
    for (std::size_t c = 0; c < keep; ++c) {
      row[pos++] = vocab.id_for(chars.at(c));
    }
    row[pos++] = CharVocab::kEndWord;
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

// Everything the backward pass needs from one sentence's forward pass.
struct ConvCache {
  Tensor pre;               // [W x P x f]
  std::vector<int> argmax;  // W*f pool positions
};

struct HighwayCache {
  Tensor input;     // [W x F]
  Tensor gate_pre;  // [W x F]
  Tensor h_pre;     // [W x F]
};

struct LayerCache {
  Tensor h_in;                      // [W x H]
  Tensor q, k, v;                   // [W x H]
  Tensor att;                       // [A x W x W]
  Tensor ctx;                       // [W x H]
  Tensor attn_out;                  // [W x H]
  Tensor ln1_xhat, ln1_inv_std;     // [W x H], [W]
  Tensor h_mid;                     // [W x H]
  Tensor ffn_pre, ffn_act;          // [W x FF]
  Tensor ln2_xhat, ln2_inv_std;     // [W x H], [W]
  Tensor h_out;                     // [W x H]
};

struct SentenceCache {
  std::size_t words = 0;  // rows in char_ids, padding included
  std::size_t valid = 0;
  Tensor char_emb;                 // [W x C x E]
  std::vector<ConvCache> convs;
  Tensor feat;                     // [W x F]
  std::vector<HighwayCache> highway;
  Tensor hw_out;                   // [W x F]
  Tensor h0;                       // [W x H], projection + position
  std::vector<LayerCache> layers;
  Tensor logits, probs;            // [W x 3]
};

void cnn_forward_cached(const CharTaggerModel& model,
                        const std::vector<std::vector<int>>& char_ids,
                        SentenceCache& cache) {
  const CharTaggerConfig& cfg = model.config;
  const std::size_t words = char_ids.size();
  const std::size_t chars = u(cfg.max_word_chars);
  const std::size_t embed = u(cfg.char_embed_dim);
  const std::size_t filters = u(cfg.total_filters());

  cache.char_emb = Tensor({words, chars, embed});
  for (std::size_t w = 0; w < words; ++w) {
    if (char_ids[w].size() != chars) {
      throw std::invalid_argument("char id row has " +
                                  std::to_string(char_ids[w].size()) +
                                  " columns, expected " + std::to_string(chars));
    }
    for (std::size_t c = 0; c < chars; ++c) {
      int id = char_ids[w][c];
      if (id < 0 || id >= model.vocab.size()) {
        throw std::invalid_argument("char id " + std::to_string(id) +
                                    " outside vocabulary");
      }
      for (std::size_t e = 0; e < embed; ++e) {
        cache.char_emb.at(w, c, e) = model.char_embed.at(u(id), e);
      }
    }
  }

  cache.feat = Tensor({words, filters});
  cache.convs.clear();
  cache.convs.resize(model.conv_kernels.size());
  std::size_t filter_base = 0;
  for (std::size_t k = 0; k < model.conv_kernels.size(); ++k) {
    const std::size_t width = u(cfg.conv_filter_widths[k]);
    const std::size_t nf = u(cfg.conv_filters_per_width[k]);
    const std::size_t positions = chars - width + 1;
    ConvCache& conv = cache.convs[k];
    conv.pre = Tensor({words, positions, nf});
    conv.argmax.assign(words * nf, 0);
    const Tensor& kernel = model.conv_kernels[k];
    const Tensor& bias = model.conv_biases[k];
    for (std::size_t w = 0; w < words; ++w) {
      for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t f = 0; f < nf; ++f) {
          double acc = bias[f];
          for (std::size_t dx = 0; dx < width; ++dx) {
            for (std::size_t e = 0; e < embed; ++e) {
              acc += kernel.at(f, dx, e) * cache.char_emb.at(w, p + dx, e);
            }
          }
          conv.pre.at(w, p, f) = acc;
        }
      }
      for (std::size_t f = 0; f < nf; ++f) {
        double best = 0.0;  // relu floor: max over relu(pre) is never below 0
        int best_p = 0;
        for (std::size_t p = 0; p < positions; ++p) {
          double a = std::max(conv.pre.at(w, p, f), 0.0);
          if (a > best) {
            best = a;
            best_p = static_cast<int>(p);
          }
        }
        conv.argmax[w * nf + f] = best_p;
        cache.feat.at(w, filter_base + f) = best;
      }
    }
    filter_base += nf;
  }

  cache.highway.clear();
  cache.highway.resize(model.highway_transform_w.size());
  Tensor x = cache.feat;
  for (std::size_t l = 0; l < model.highway_transform_w.size(); ++l) {
    HighwayCache& hw = cache.highway[l];
    hw.input = x;
    hw.gate_pre = Tensor({words, filters});
    hw.h_pre = Tensor({words, filters});
    nn::linear_forward(x.data(), model.highway_gate_w[l].data(),
                       model.highway_gate_b[l].data(), hw.gate_pre.data(), words,
                       filters, filters);
    nn::linear_forward(x.data(), model.highway_transform_w[l].data(),
                       model.highway_transform_b[l].data(), hw.h_pre.data(), words,
                       filters, filters);
    Tensor y({words, filters});
    for (std::size_t i = 0; i < y.size(); ++i) {
      double t = nn::sigmoid(hw.gate_pre[i]);
      double h = std::max(hw.h_pre[i], 0.0);
      y[i] = t * h + (1.0 - t) * x[i];
    }
    x = std::move(y);
  }
  cache.hw_out = std::move(x);
}

void encoder_layer_forward(const CharTaggerModel& model, std::size_t layer_index,
                           const Tensor& h_in, std::size_t valid, LayerCache& cache) {
  const CharTaggerConfig& cfg = model.config;
  const std::size_t words = h_in.dim(0);
  const std::size_t hidden = u(cfg.hidden_size);
  const std::size_t heads = u(cfg.num_heads);
  const std::size_t head_dim = hidden / heads;
  const std::size_t ffn = u(cfg.ffn_size());
  const EncoderLayerParams& p = model.layers[layer_index];
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  cache.h_in = h_in;
  cache.q = Tensor({words, hidden});
  cache.k = Tensor({words, hidden});
  cache.v = Tensor({words, hidden});
  nn::linear_forward(h_in.data(), p.query_w.data(), p.query_b.data(), cache.q.data(),
                     words, hidden, hidden);
  nn::linear_forward(h_in.data(), p.key_w.data(), p.key_b.data(), cache.k.data(),
                     words, hidden, hidden);
  nn::linear_forward(h_in.data(), p.value_w.data(), p.value_b.data(), cache.v.data(),
                     words, hidden, hidden);

  cache.att = Tensor({heads, words, words});
  cache.ctx = Tensor({words, hidden});
  Tensor scores({words, words});
  for (std::size_t a = 0; a < heads; ++a) {
    const std::size_t col = a * head_dim;
    for (std::size_t i = 0; i < words; ++i) {
      for (std::size_t j = 0; j < words; ++j) {
        if (j >= valid) {
          scores.at(i, j) = kMaskedScore;
          continue;
        }
        double acc = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) {
          acc += cache.q.at(i, col + d) * cache.k.at(j, col + d);
        }
        scores.at(i, j) = acc * inv_sqrt;
      }
    }
    nn::softmax_rows(scores.data(), cache.att.data() + a * words * words, words, words);
    const double* att = cache.att.data() + a * words * words;
    for (std::size_t i = 0; i < words; ++i) {
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < words; ++j) {
          acc += att[i * words + j] * cache.v.at(j, col + d);
        }
        cache.ctx.at(i, col + d) = acc;
      }
    }
  }

  cache.attn_out = Tensor({words, hidden});
  nn::linear_forward(cache.ctx.data(), p.output_w.data(), p.output_b.data(),
                     cache.attn_out.data(), words, hidden, hidden);

  Tensor r1({words, hidden});
  for (std::size_t i = 0; i < r1.size(); ++i) {
    r1[i] = h_in[i] + cache.attn_out[i];
  }
  cache.ln1_xhat = Tensor({words, hidden});
  cache.ln1_inv_std = Tensor({words});
  cache.h_mid = Tensor({words, hidden});
  nn::layer_norm_forward(r1.data(), p.ln1_gamma.data(), p.ln1_beta.data(),
                         cache.h_mid.data(), cache.ln1_xhat.data(),
                         cache.ln1_inv_std.data(), words, hidden);

  cache.ffn_pre = Tensor({words, ffn});
  cache.ffn_act = Tensor({words, ffn});
  nn::linear_forward(cache.h_mid.data(), p.ffn_w1.data(), p.ffn_b1.data(),
                     cache.ffn_pre.data(), words, hidden, ffn);
  nn::relu_forward(cache.ffn_pre.data(), cache.ffn_act.data(), cache.ffn_pre.size());
  Tensor ffn_out({words, hidden});
  nn::linear_forward(cache.ffn_act.data(), p.ffn_w2.data(), p.ffn_b2.data(),
                     ffn_out.data(), words, ffn, hidden);

  Tensor r2({words, hidden});
  for (std::size_t i = 0; i < r2.size(); ++i) {
    r2[i] = cache.h_mid[i] + ffn_out[i];
  }
  cache.ln2_xhat = Tensor({words, hidden});
  cache.ln2_inv_std = Tensor({words});
  cache.h_out = Tensor({words, hidden});
  nn::layer_norm_forward(r2.data(), p.ln2_gamma.data(), p.ln2_beta.data(),
                         cache.h_out.data(), cache.ln2_xhat.data(),
                         cache.ln2_inv_std.data(), words, hidden);
}

void forward_sentence(const CharTaggerModel& model,
                      const std::vector<std::vector<int>>& char_ids,
                      std::size_t valid, SentenceCache& cache,
                      EncoderTrace* trace) {
  const CharTaggerConfig& cfg = model.config;
  const std::size_t words = char_ids.size();
  const std::size_t hidden = u(cfg.hidden_size);
  if (words > u(cfg.max_words)) {
    throw std::invalid_argument("sentence has " + std::to_string(words) +
                                " words, max_words is " +
                                std::to_string(cfg.max_words));
  }
  if (valid > words) {
    throw std::invalid_argument("valid word count exceeds row count");
  }
  cache.words = words;
  cache.valid = valid;

  cnn_forward_cached(model, char_ids, cache);

  cache.h0 = Tensor({words, hidden});
  nn::linear_forward(cache.hw_out.data(), model.proj_w.data(), model.proj_b.data(),
                     cache.h0.data(), words, u(cfg.total_filters()), hidden);
  for (std::size_t w = 0; w < words; ++w) {
    for (std::size_t h = 0; h < hidden; ++h) {
      cache.h0.at(w, h) += model.pos_embed.at(w, h);
    }
  }

  cache.layers.clear();
  cache.layers.resize(model.layers.size());
  const Tensor* h = &cache.h0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    encoder_layer_forward(model, l, *h, valid, cache.layers[l]);
    h = &cache.layers[l].h_out;
  }
  if (trace != nullptr) {
    trace->attention.clear();
    for (const LayerCache& layer : cache.layers) {
      trace->attention.push_back(layer.att);
    }
  }

  const std::size_t classes = u(cfg.num_classes);
  cache.logits = Tensor({words, classes});
  cache.probs = Tensor({words, classes});
  nn::linear_forward(h->data(), model.cls_w.data(), model.cls_b.data(),
                     cache.logits.data(), words, hidden, classes);
  nn::softmax_rows(cache.logits.data(), cache.probs.data(), words, classes);
}

void encoder_layer_backward(const CharTaggerModel& model, std::size_t layer_index,
                            const LayerCache& cache, const Tensor& dh_out,
                            CharTaggerModel& grads, Tensor& dh_in) {
  const CharTaggerConfig& cfg = model.config;
  const std::size_t words = cache.h_in.dim(0);
  const std::size_t hidden = u(cfg.hidden_size);
  const std::size_t heads = u(cfg.num_heads);
  const std::size_t head_dim = hidden / heads;
  const std::size_t ffn = u(cfg.ffn_size());
  const EncoderLayerParams& p = model.layers[layer_index];
  EncoderLayerParams& g = grads.layers[layer_index];
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // LN2
  Tensor dr2({words, hidden});
  nn::layer_norm_backward(cache.ln2_xhat.data(), cache.ln2_inv_std.data(),
                          p.ln2_gamma.data(), dh_out.data(), g.ln2_gamma.data(),
                          g.ln2_beta.data(), dr2.data(), words, hidden);

  // FFN (second residual): r2 = h_mid + W2 relu(W1 h_mid + b1) + b2
  Tensor dffn_act({words, ffn});
  nn::linear_backward(cache.ffn_act.data(), p.ffn_w2.data(), dr2.data(),
                      g.ffn_w2.data(), g.ffn_b2.data(), dffn_act.data(), words, ffn,
                      hidden);
  Tensor dffn_pre({words, ffn});
  nn::relu_backward(cache.ffn_pre.data(), dffn_act.data(), dffn_pre.data(),
                    dffn_pre.size());
  Tensor dh_mid({words, hidden});
  nn::linear_backward(cache.h_mid.data(), p.ffn_w1.data(), dffn_pre.data(),
                      g.ffn_w1.data(), g.ffn_b1.data(), dh_mid.data(), words, hidden,
                      ffn);
  for (std::size_t i = 0; i < dh_mid.size(); ++i) {
    dh_mid[i] += dr2[i];
  }

  // LN1
  Tensor dr1({words, hidden});
  nn::layer_norm_backward(cache.ln1_xhat.data(), cache.ln1_inv_std.data(),
                          p.ln1_gamma.data(), dh_mid.data(), g.ln1_gamma.data(),
                          g.ln1_beta.data(), dr1.data(), words, hidden);

  // Attention (first residual): r1 = h_in + Wo ctx + bo
  Tensor dctx({words, hidden});
  nn::linear_backward(cache.ctx.data(), p.output_w.data(), dr1.data(),
                      g.output_w.data(), g.output_b.data(), dctx.data(), words, hidden,
                      hidden);

  Tensor dq({words, hidden});
  Tensor dk({words, hidden});
  Tensor dv({words, hidden});
  Tensor datt({words, words});
  Tensor dscores({words, words});
  for (std::size_t a = 0; a < heads; ++a) {
    const std::size_t col = a * head_dim;
    const double* att = cache.att.data() + a * words * words;
    for (std::size_t i = 0; i < words; ++i) {
      for (std::size_t j = 0; j < words; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < head_dim; ++d) {
          acc += dctx.at(i, col + d) * cache.v.at(j, col + d);
        }
        datt.at(i, j) = acc;
      }
    }
    for (std::size_t j = 0; j < words; ++j) {
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < words; ++i) {
          acc += att[i * words + j] * dctx.at(i, col + d);
        }
        dv.at(j, col + d) = acc;
      }
    }
    nn::softmax_rows_backward(att, datt.data(), dscores.data(), words, words);
    for (std::size_t i = 0; i < words; ++i) {
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < words; ++j) {
          acc += dscores.at(i, j) * cache.k.at(j, col + d);
        }
        dq.at(i, col + d) = acc * inv_sqrt;
      }
    }
    for (std::size_t j = 0; j < words; ++j) {
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < words; ++i) {
          acc += dscores.at(i, j) * cache.q.at(i, col + d);
        }
        dk.at(j, col + d) = acc * inv_sqrt;
      }
    }
  }

  dh_in = dr1;  // residual path
  Tensor dx({words, hidden});
  nn::linear_backward(cache.h_in.data(), p.query_w.data(), dq.data(), g.query_w.data(),
                      g.query_b.data(), dx.data(), words, hidden, hidden);
  for (std::size_t i = 0; i < dh_in.size(); ++i) dh_in[i] += dx[i];
  nn::linear_backward(cache.h_in.data(), p.key_w.data(), dk.data(), g.key_w.data(),
                      g.key_b.data(), dx.data(), words, hidden, hidden);
  for (std::size_t i = 0; i < dh_in.size(); ++i) dh_in[i] += dx[i];
  nn::linear_backward(cache.h_in.data(), p.value_w.data(), dv.data(), g.value_w.data(),
                      g.value_b.data(), dx.data(), words, hidden, hidden);
  for (std::size_t i = 0; i < dh_in.size(); ++i) dh_in[i] += dx[i];
}

void backward_sentence(const CharTaggerModel& model,
                       const std::vector<std::vector<int>>& char_ids,
                       const SentenceCache& cache, const Tensor& dlogits,
                       CharTaggerModel& grads) {
  const CharTaggerConfig& cfg = model.config;
  const std::size_t words = cache.words;
  const std::size_t hidden = u(cfg.hidden_size);
  const std::size_t filters = u(cfg.total_filters());
  const std::size_t chars = u(cfg.max_word_chars);
  const std::size_t embed = u(cfg.char_embed_dim);
  const std::size_t classes = u(cfg.num_classes);

  const Tensor& h_last = cache.layers.empty() ? cache.h0 : cache.layers.back().h_out;
  Tensor dh({words, hidden});
  nn::linear_backward(h_last.data(), model.cls_w.data(), dlogits.data(),
                      grads.cls_w.data(), grads.cls_b.data(), dh.data(), words, hidden,
                      classes);

  for (std::size_t l = cache.layers.size(); l > 0; --l) {
    Tensor dh_in;
    encoder_layer_backward(model, l - 1, cache.layers[l - 1], dh, grads, dh_in);
    dh = std::move(dh_in);
  }

  // Position embeddings, then the projection back into the CNN stack.
  for (std::size_t w = 0; w < words; ++w) {
    for (std::size_t h = 0; h < hidden; ++h) {
      grads.pos_embed.at(w, h) += dh.at(w, h);
    }
  }
  Tensor dhw({words, filters});
  nn::linear_backward(cache.hw_out.data(), model.proj_w.data(), dh.data(),
                      grads.proj_w.data(), grads.proj_b.data(), dhw.data(), words,
                      filters, hidden);

  for (std::size_t l = model.highway_transform_w.size(); l > 0; --l) {
    const HighwayCache& hw = cache.highway[l - 1];
    Tensor dgate_pre({words, filters});
    Tensor dh_pre({words, filters});
    Tensor dx({words, filters});
    for (std::size_t i = 0; i < dhw.size(); ++i) {
      double t = nn::sigmoid(hw.gate_pre[i]);
      double h = std::max(hw.h_pre[i], 0.0);
      double dy = dhw[i];
      dgate_pre[i] = dy * (h - hw.input[i]) * t * (1.0 - t);
      dh_pre[i] = hw.h_pre[i] > 0.0 ? dy * t : 0.0;
      dx[i] = dy * (1.0 - t);
    }
    Tensor dx_lin({words, filters});
    nn::linear_backward(hw.input.data(), model.highway_gate_w[l - 1].data(),
                        dgate_pre.data(), grads.highway_gate_w[l - 1].data(),
                        grads.highway_gate_b[l - 1].data(), dx_lin.data(), words,
                        filters, filters);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_lin[i];
    nn::linear_backward(hw.input.data(), model.highway_transform_w[l - 1].data(),
                        dh_pre.data(), grads.highway_transform_w[l - 1].data(),
                        grads.highway_transform_b[l - 1].data(), dx_lin.data(), words,
                        filters, filters);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_lin[i];
    dhw = std::move(dx);
  }

  // Max pool, relu, convolutions, character embeddings.
  Tensor dchar_emb({words, chars, embed});
  std::size_t filter_base = 0;
  for (std::size_t k = 0; k < model.conv_kernels.size(); ++k) {
    const std::size_t width = u(cfg.conv_filter_widths[k]);
    const std::size_t nf = u(cfg.conv_filters_per_width[k]);
    const ConvCache& conv = cache.convs[k];
    const Tensor& kernel = model.conv_kernels[k];
    Tensor& dkernel = grads.conv_kernels[k];
    Tensor& dbias = grads.conv_biases[k];
    for (std::size_t w = 0; w < words; ++w) {
      for (std::size_t f = 0; f < nf; ++f) {
        double dpool = dhw.at(w, filter_base + f);
        if (dpool == 0.0) continue;
        std::size_t p = static_cast<std::size_t>(conv.argmax[w * nf + f]);
        if (conv.pre.at(w, p, f) <= 0.0) continue;  // pooled value was the relu floor
        dbias[f] += dpool;
        for (std::size_t dx = 0; dx < width; ++dx) {
          for (std::size_t e = 0; e < embed; ++e) {
            dkernel.at(f, dx, e) += dpool * cache.char_emb.at(w, p + dx, e);
            dchar_emb.at(w, p + dx, e) += dpool * kernel.at(f, dx, e);
          }
        }
      }
    }
    filter_base += nf;
  }
  for (std::size_t w = 0; w < words; ++w) {
    for (std::size_t c = 0; c < chars; ++c) {
      int id = char_ids[w][c];
      for (std::size_t e = 0; e < embed; ++e) {
        grads.char_embed.at(u(id), e) += dchar_emb.at(w, c, e);
      }
    }
  }
}

double parameter_norm(const CharTaggerModel& model) {
  double sum = 0.0;
  for (const auto& [name, tensor] : model.parameters()) {
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      sum += (*tensor)[i] * (*tensor)[i];
    }
  }
  return std::sqrt(sum);
}

}  // namespace

Tensor char_cnn_forward(const std::vector<std::vector<int>>& char_ids,
                        const CharTaggerModel& model) {
  SentenceCache cache;
  cache.words = char_ids.size();
  cnn_forward_cached(model, char_ids, cache);
  Tensor out({char_ids.size(), u(model.config.hidden_size)});
  nn::linear_forward(cache.hw_out.data(), model.proj_w.data(), model.proj_b.data(),
                     out.data(), char_ids.size(), u(model.config.total_filters()),
                     u(model.config.hidden_size));
  return out;
}

Tensor encoder_forward(const Tensor& word_embeds, const CharTaggerModel& model,
                       std::size_t valid_words, EncoderTrace* trace) {
  const CharTaggerConfig& cfg = model.config;
  const std::size_t words = word_embeds.dim(0);
  const std::size_t hidden = u(cfg.hidden_size);
  if (words > u(cfg.max_words)) {
    throw std::invalid_argument("encoder_forward: " + std::to_string(words) +
                                " words exceed max_words " +
                                std::to_string(cfg.max_words));
  }
  if (word_embeds.shape().size() != 2 || word_embeds.dim(1) != hidden) {
    throw std::invalid_argument("encoder_forward: expected [words x hidden] input");
  }
  valid_words = std::min(valid_words, words);

  Tensor h0 = word_embeds;
  for (std::size_t w = 0; w < words; ++w) {
    for (std::size_t h = 0; h < hidden; ++h) {
      h0.at(w, h) += model.pos_embed.at(w, h);
    }
  }
  std::vector<LayerCache> layers(model.layers.size());
  const Tensor* h = &h0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    encoder_layer_forward(model, l, *h, valid_words, layers[l]);
    h = &layers[l].h_out;
  }
  if (trace != nullptr) {
    trace->attention.clear();
    for (const LayerCache& layer : layers) {
      trace->attention.push_back(layer.att);
    }
  }
  return *h;
}

Tensor classify(const Tensor& hidden, const CharTaggerModel& model) {
  const std::size_t words = hidden.dim(0);
  const std::size_t classes = u(model.config.num_classes);
  Tensor logits({words, classes});
  nn::linear_forward(hidden.data(), model.cls_w.data(), model.cls_b.data(),
                     logits.data(), words, u(model.config.hidden_size), classes);
  Tensor probs({words, classes});
  nn::softmax_rows(logits.data(), probs.data(), words, classes);
  return probs;
}

Tensor forward_probs(const CharTaggerModel& model,
                     const std::vector<std::vector<int>>& char_ids,
                     std::size_t valid_words, EncoderTrace* trace) {
  SentenceCache cache;
  forward_sentence(model, char_ids, std::min(valid_words, char_ids.size()), cache,
                   trace);
  return cache.probs;
}

double loss_and_gradients(const CharTaggerModel& model, const TrainingBatch& batch,
                          CharTaggerModel& grads) {
  if (batch.char_ids.size() != batch.labels.size()) {
    throw std::invalid_argument("loss_and_gradients: char_ids and labels disagree");
  }
  if (batch.char_ids.empty()) {
    throw std::invalid_argument("loss_and_gradients: empty batch");
  }
  std::size_t total_tokens = 0;
  for (std::size_t s = 0; s < batch.char_ids.size(); ++s) {
    if (batch.char_ids[s].size() != batch.labels[s].size()) {
      throw std::invalid_argument("loss_and_gradients: sentence " + std::to_string(s) +
                                  " has mismatched words and labels");
    }
    if (!is_valid_bio(batch.labels[s])) {
      throw std::invalid_argument("loss_and_gradients: sentence " + std::to_string(s) +
                                  " labels violate BIO validity");
    }
    total_tokens += batch.labels[s].size();
  }

  for (auto& [name, tensor] : grads.parameters()) {
    tensor->fill(0.0);
  }
  if (total_tokens == 0) {
    return 0.0;
  }

  const double inv_tokens = 1.0 / static_cast<double>(total_tokens);
  const std::size_t classes = u(model.config.num_classes);
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.char_ids.size(); ++s) {
    const auto& ids = batch.char_ids[s];
    if (ids.empty()) continue;
    SentenceCache cache;
    forward_sentence(model, ids, ids.size(), cache, nullptr);

    Tensor dlogits({ids.size(), classes});
    for (std::size_t w = 0; w < ids.size(); ++w) {
      int target = bio_class_index(batch.labels[s][w]);
      // Log-sum-exp form of the per-token cross entropy.
      double mx = cache.logits.at(w, 0);
      for (std::size_t c = 1; c < classes; ++c) {
        mx = std::max(mx, cache.logits.at(w, c));
      }
      double sum = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        sum += std::exp(cache.logits.at(w, c) - mx);
      }
      loss += (mx + std::log(sum) - cache.logits.at(w, u(target))) * inv_tokens;
      for (std::size_t c = 0; c < classes; ++c) {
        double delta = (c == u(target)) ? 1.0 : 0.0;
        dlogits.at(w, c) = (cache.probs.at(w, c) - delta) * inv_tokens;
      }
    }
    backward_sentence(model, ids, cache, dlogits, grads);
  }

  if (!std::isfinite(loss)) {
    throw std::runtime_error(
        "loss_and_gradients: non-finite loss (parameter norm " +
        std::to_string(parameter_norm(model)) + ", gradient norm " +
        std::to_string(parameter_norm(grads)) + ")");
  }
  return loss;
}

namespace {

struct PreparedSentence {
  std::vector<std::vector<int>> char_ids;
  std::vector<BioLabel> labels;
};

std::vector<PreparedSentence> prepare_training_rows(const CharTaggerModel& model,
                                                    const Corpus& corpus) {
  std::vector<PreparedSentence> rows;
  rows.reserve(corpus.size());
  for (const AnnotatedText& row : corpus.rows) {
    auto tokens = tokenize(row.text);
    if (tokens.empty()) continue;
    auto labels = label_tokens(tokens, row.gold_offsets);
    if (tokens.size() > u(model.config.max_words)) {
      tokens.resize(u(model.config.max_words));
      labels.resize(u(model.config.max_words));
    }
    PreparedSentence prepared;
    prepared.char_ids = encode_words(tokens, model.vocab, model.config);
    prepared.labels = std::move(labels);
    rows.push_back(std::move(prepared));
  }
  return rows;
}

}  // namespace

std::vector<double> train(CharTaggerModel& model, const Corpus& corpus,
                          const CharTaggerConfig& config,
                          const std::function<void(int, double)>& on_epoch) {
  auto rows = prepare_training_rows(model, corpus);
  std::vector<double> epoch_losses;
  if (config.epochs == 0 || rows.empty()) {
    return epoch_losses;
  }

  CharTaggerModel grads = CharTaggerModel::zeros_like(model);
  auto params = model.parameters();
  auto grad_params = grads.parameters();

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss_sum = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size();
         start += u(config.batch_size)) {
      std::size_t stop = std::min(order.size(), start + u(config.batch_size));
      TrainingBatch batch;
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < stop; ++i) {
        batch.char_ids.push_back(rows[order[i]].char_ids);
        batch.labels.push_back(rows[order[i]].labels);
        batch_tokens += rows[order[i]].labels.size();
      }
      double loss = loss_and_gradients(model, batch, grads);
      for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p].second;
        const Tensor& grad = *grad_params[p].second;
        for (std::size_t i = 0; i < param.size(); ++i) {
          param[i] -= config.learning_rate * grad[i];
        }
      }
      epoch_loss_sum += loss * static_cast<double>(batch_tokens);
      epoch_tokens += batch_tokens;
    }
    double mean_loss =
        epoch_tokens == 0 ? 0.0 : epoch_loss_sum / static_cast<double>(epoch_tokens);
    epoch_losses.push_back(mean_loss);
    if (on_epoch) {
      on_epoch(epoch, mean_loss);
    }
  }
  return epoch_losses;
}

std::vector<BioLabel> predict_labels(const CharTaggerModel& model,
                                     const std::vector<TokenSpan>& tokens) {
  std::vector<BioLabel> labels(tokens.size(), BioLabel::O);
  if (tokens.empty()) {
    return labels;
  }
  std::vector<TokenSpan> used(
      tokens.begin(),
      tokens.begin() +
          std::min(tokens.size(), u(model.config.max_words)));
  auto ids = encode_words(used, model.vocab, model.config);
  Tensor probs = forward_probs(model, ids, used.size());
  for (std::size_t w = 0; w < used.size(); ++w) {
    int best = 0;
    for (int c = 1; c < model.config.num_classes; ++c) {
      if (probs.at(w, u(c)) > probs.at(w, u(best))) best = c;
    }
    labels[w] = bio_label_from_class(best);
  }
  return repair_bio(std::move(labels));
}

OffsetSet predict_spans(const CharTaggerModel& model, std::string_view text) {
  auto tokens = tokenize(text);
  auto labels = predict_labels(model, tokens);
  return spans_from_labels(tokens, labels);
}

}  // namespace toxspan
