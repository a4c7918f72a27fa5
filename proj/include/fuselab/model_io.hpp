#pragma once

// Model file format, version 1:
//
//   fuselab-model
//   format_version=1
//   input_dim=<int>
//   layers=<int>
//   layer.<i>=<rows> <cols> <bias_len> <activation>
//   seed_tag=<string>            (optional)
//   end
//   <payload>
//
// The payload holds, per layer in order, the weights row-major followed by
// the bias, as little-endian IEEE-754 doubles.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "fuselab/binary_io.hpp"
#include "fuselab/model.hpp"

namespace fuselab {

inline constexpr std::string_view kModelMagic = "fuselab-model";
inline constexpr int kModelFormatVersion = 1;

inline void write_model(std::ostream& out, const MlpModel& model) {
  io::Manifest m;
  m.magic = std::string(kModelMagic);
  m.set("format_version", std::to_string(kModelFormatVersion));
  m.set("input_dim", std::to_string(model.input_dim()));
  m.set("layers", std::to_string(model.layer_count()));
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto& l = model.layer(i);
    std::ostringstream s;
    s << l.out_dim() << ' ' << l.in_dim() << ' ' << l.bias.size() << ' ' << activation_name(l.activation);
    m.set("layer." + std::to_string(i), s.str());
  }
  if (const auto& tag = model.seed_tag()) {
    if (tag->find('\n') != std::string::npos) throw ValidationError("seed_tag must not contain newlines");
    m.set("seed_tag", *tag);
  }
  m.write(out);
  for (const auto& l : model.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) io::write_f64_le(out, l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) io::write_f64_le(out, l.bias(r));
  }
  if (!out) throw Error("write failed");
}

inline MlpModel read_model(std::istream& in) {
  const auto m = io::Manifest::read(in, kModelMagic);
  const int version = m.require_int<int>("format_version");
  if (version != kModelFormatVersion) {
    throw ParseError("manifest field 'format_version': unsupported version " + std::to_string(version));
  }
  const auto input_dim = m.require_int<long long>("input_dim");
  const auto count = m.require_int<long long>("layers");
  if (input_dim < 1) throw ParseError("manifest field 'input_dim' must be positive");
  if (count < 1 || count > 4096) throw ParseError("manifest field 'layers' out of range");

  struct Shape {
    long long rows, cols, bias;
    Activation act;
  };
  std::vector<Shape> shapes;
  for (long long i = 0; i < count; ++i) {
    const std::string key = "layer." + std::to_string(i);
    std::istringstream s(m.require(key));
    Shape sh{};
    std::string act;
    if (!(s >> sh.rows >> sh.cols >> sh.bias >> act) || !s.eof()) {
      throw ParseError("manifest field '" + key + "' must be '<rows> <cols> <bias_len> <activation>'");
    }
    const auto parsed = parse_activation(act);
    if (!parsed) throw ParseError("manifest field '" + key + "': unknown activation '" + act + "'");
    if (sh.rows < 1 || sh.cols < 1 || sh.bias < 0 || sh.rows > (1 << 20) || sh.cols > (1 << 20) ||
        sh.bias > (1 << 20)) {
      throw ParseError("manifest field '" + key + "': dimensions out of range");
    }
    sh.act = *parsed;
    shapes.push_back(sh);
  }
  // Validate the chain before touching the payload.
  long long prev = input_dim;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].cols != prev) {
      throw ValidationError("layer " + std::to_string(i) + ": cols " + std::to_string(shapes[i].cols) +
                            " break the dimension chain (expected " + std::to_string(prev) + ")");
    }
    if (shapes[i].bias != shapes[i].rows) {
      throw ValidationError("layer " + std::to_string(i) + ": bias length " + std::to_string(shapes[i].bias) +
                            " != weight rows " + std::to_string(shapes[i].rows));
    }
    prev = shapes[i].rows;
  }

  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& sh = shapes[i];
    const std::string what = "layer " + std::to_string(i);
    DenseLayer l;
    l.activation = sh.act;
    l.weights.resize(sh.rows, sh.cols);
    l.bias.resize(sh.bias);
    for (Eigen::Index r = 0; r < sh.rows; ++r)
      for (Eigen::Index c = 0; c < sh.cols; ++c) l.weights(r, c) = io::read_f64_le(in, what + " weights");
    for (Eigen::Index r = 0; r < sh.bias; ++r) l.bias(r) = io::read_f64_le(in, what + " bias");
    layers.push_back(std::move(l));
  }
  io::expect_end_of_payload(in);

  std::optional<std::string> tag;
  if (const auto* t = m.find("seed_tag")) tag = *t;
  return MlpModel(input_dim, std::move(layers), std::move(tag));
}

inline void save_model(const MlpModel& model, const std::string& path) {
  auto out = io::open_for_write(path);
  try {
    write_model(out, model);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline MlpModel load_model(const std::string& path) {
  auto in = io::open_for_read(path);
  try {
    return read_model(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace fuselab
