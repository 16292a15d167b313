#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "toxspan/char_tagger.hpp"

namespace toxspan {

namespace {

// Model container layout (native endianness):
//   8-byte magic "TOXSPAN1"
//   u64 config json length, config json bytes
//   u64 parameter count, then per parameter:
//     u64 name length, name bytes,
//     u64 rank, u64 dims[rank],
//     f64 values (row major)
constexpr char kMagic[8] = {'T', 'O', 'X', 'S', 'P', 'A', 'N', '1'};

nlohmann::json config_to_json(const CharTaggerConfig& config) {
  return nlohmann::json{
      {"max_word_chars", config.max_word_chars},
      {"char_embed_dim", config.char_embed_dim},
      {"conv_filter_widths", config.conv_filter_widths},
      {"conv_filters_per_width", config.conv_filters_per_width},
      {"highway_layers", config.highway_layers},
      {"hidden_size", config.hidden_size},
      {"num_layers", config.num_layers},
      {"num_heads", config.num_heads},
      {"max_words", config.max_words},
      {"num_classes", config.num_classes},
      {"batch_size", config.batch_size},
      {"epochs", config.epochs},
      {"learning_rate", config.learning_rate},
      {"seed", config.seed},
  };
}

CharTaggerConfig config_from_json(const nlohmann::json& j) {
  CharTaggerConfig config;
  config.max_word_chars = j.at("max_word_chars").get<int>();
  config.char_embed_dim = j.at("char_embed_dim").get<int>();
  config.conv_filter_widths = j.at("conv_filter_widths").get<std::vector<int>>();
  config.conv_filters_per_width =
      j.at("conv_filters_per_width").get<std::vector<int>>();
  config.highway_layers = j.at("highway_layers").get<int>();
  config.hidden_size = j.at("hidden_size").get<int>();
  config.num_layers = j.at("num_layers").get<int>();
  config.num_heads = j.at("num_heads").get<int>();
  config.max_words = j.at("max_words").get<int>();
  config.num_classes = j.at("num_classes").get<int>();
  config.batch_size = j.at("batch_size").get<int>();
  config.epochs = j.at("epochs").get<int>();
  config.learning_rate = j.at("learning_rate").get<double>();
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

void write_u64(std::ostream& out, std::uint64_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
  std::uint64_t value = 0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) {
    throw std::runtime_error("model file truncated while reading " + what);
  }
  return value;
}

}  // namespace

void save_model(const CharTaggerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open model file for writing: " + path);
  }
  out.write(kMagic, sizeof(kMagic));
  std::string config_json = config_to_json(model.config).dump();
  write_u64(out, config_json.size());
  out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));

  auto params = model.parameters();
  write_u64(out, params.size());
  for (const auto& [name, tensor] : params) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, tensor->shape().size());
    for (std::size_t d : tensor->shape()) {
      write_u64(out, d);
    }
    out.write(reinterpret_cast<const char*>(tensor->data()),
              static_cast<std::streamsize>(tensor->size() * sizeof(double)));
  }
  if (!out) {
    throw std::runtime_error("failed writing model file: " + path);
  }
}

CharTaggerModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open model file: " + path);
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw std::runtime_error("not a model file (bad magic): " + path);
  }
  std::uint64_t config_len = read_u64(in, "config length");
  std::string config_json(config_len, '\0');
  in.read(config_json.data(), static_cast<std::streamsize>(config_len));
  if (!in) {
    throw std::runtime_error("model file truncated while reading config");
  }
  CharTaggerConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(config_json));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bad model config: ") + e.what());
  }

  CharTaggerModel model = CharTaggerModel::build(config);
  auto params = model.parameters();
  std::uint64_t count = read_u64(in, "parameter count");
  if (count != params.size()) {
    throw std::runtime_error("model file has " + std::to_string(count) +
                             " parameters, config implies " +
                             std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    std::uint64_t name_len = read_u64(in, "parameter name length");
    std::string file_name(name_len, '\0');
    in.read(file_name.data(), static_cast<std::streamsize>(name_len));
    if (!in || file_name != name) {
      throw std::runtime_error("model file parameter '" + file_name +
                               "' does not match expected '" + name + "'");
    }
    std::uint64_t rank = read_u64(in, name + " rank");
    if (rank != tensor->shape().size()) {
      throw std::runtime_error("parameter " + name + " has rank " +
                               std::to_string(rank) + ", expected " +
                               std::to_string(tensor->shape().size()));
    }
    for (std::size_t d = 0; d < rank; ++d) {
      std::uint64_t dim = read_u64(in, name + " dim");
      if (dim != tensor->shape()[d]) {
        throw std::runtime_error("parameter " + name + " dimension " +
                                 std::to_string(d) + " is " + std::to_string(dim) +
                                 ", expected " + std::to_string(tensor->shape()[d]));
      }
    }
    in.read(reinterpret_cast<char*>(tensor->data()),
            static_cast<std::streamsize>(tensor->size() * sizeof(double)));
    if (!in) {
      throw std::runtime_error("model file truncated in parameter " + name);
    }
  }
  return model;
}

}  // namespace toxspan
