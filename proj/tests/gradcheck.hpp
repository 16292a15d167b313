#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "toxspan/char_tagger.hpp"

namespace toxspan {
namespace testing {

// The small configuration used for gradient checking: hidden 8, 1 layer,
// 2 heads, 2 filter widths.
inline CharTaggerConfig gradcheck_config() {
  CharTaggerConfig config;
  config.max_word_chars = 8;
  config.char_embed_dim = 4;
  config.conv_filter_widths = {1, 2};
  config.conv_filters_per_width = {4, 4};
  config.highway_layers = 2;
  config.hidden_size = 8;
  config.num_layers = 1;
  config.num_heads = 2;
  config.max_words = 4;
  config.seed = 7;
  return config;
}

inline TrainingBatch gradcheck_batch(const CharTaggerModel& model) {
  TrainingBatch batch;
  auto add = [&](const std::string& text, std::vector<BioLabel> labels) {
    auto tokens = tokenize(text);
    batch.char_ids.push_back(encode_words(tokens, model.vocab, model.config));
    batch.labels.push_back(std::move(labels));
  };
  add("bad cat", {BioLabel::B, BioLabel::O});
  add("ok", {BioLabel::O});
  return batch;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

// Central finite differences over every parameter, the independent oracle
// for the analytic backward pass. Relative error uses |a| + |fd| with an
// absolute floor so near-zero pairs compare on an absolute scale.
inline GradCheckResult gradient_check(CharTaggerModel& model,
                                      const TrainingBatch& batch,
                                      double step = 1e-5) {
  CharTaggerModel analytic = CharTaggerModel::zeros_like(model);
  loss_and_gradients(model, batch, analytic);

  CharTaggerModel scratch = CharTaggerModel::zeros_like(model);
  auto params = model.parameters();
  auto grads = analytic.parameters();

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& tensor = *params[p].second;
    const Tensor& grad = *grads[p].second;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      double saved = tensor[i];
      tensor[i] = saved + step;
      double up = loss_and_gradients(model, batch, scratch);
      tensor[i] = saved - step;
      double down = loss_and_gradients(model, batch, scratch);
      tensor[i] = saved;

      double fd = (up - down) / (2.0 * step);
      double a = grad[i];
      double rel = std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-4);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = params[p].first + "[" + std::to_string(i) + "]";
      }
      ++result.checked;
    }
  }
  return result;
}

}  // namespace testing
}  // namespace toxspan
