// Copyright (c) 2026 The latmet authors
// SPDX-License-Identifier: Apache-2.0

#include "latmet/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts need swaps");

namespace latmet {

FeedForwardClassifier::FeedForwardClassifier(std::vector<Layer> layers)
    : layers_(std::move(layers)) {
  if (layers_.empty())
    throw DimensionError("classifier: at least one layer required");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    check_dim(layer.w.rows() > 0 && layer.w.cols() > 0,
              "classifier: empty layer " + std::to_string(i));
    check_dim(layer.b.size() == layer.w.rows(),
              "classifier: bias size mismatch in layer " + std::to_string(i));
    if (i > 0)
      check_dim(layer.w.cols() == layers_[i - 1].w.rows(),
                "classifier: layer " + std::to_string(i) +
                    " does not chain with layer " + std::to_string(i - 1));
    check_finite(layer.w, "classifier weights");
    check_finite(layer.b, "classifier bias");
  }
  input_dim_ = static_cast<int>(layers_.front().w.cols());
  num_classes_ = static_cast<int>(layers_.back().w.rows());
  if (num_classes_ < 2)
    throw DimensionError("classifier: needs m >= 2 output scores");
}

namespace {

inline void apply_activation(Vector& v, Activation act) {
  switch (act) {
    case Activation::None:
      break;
    case Activation::Relu:
      v = v.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      v = v.unaryExpr([](double t) { return std::tanh(t); });
      break;
  }
}

}  // namespace

Vector FeedForwardClassifier::scores(const Vector& x) const {
  check_dim(x.size() == input_dim_, "scores: input dim mismatch");
  check_finite(x, "scores input");
  Vector v = x;
  for (const Layer& layer : layers_) {
    v = layer.w * v + layer.b;
    apply_activation(v, layer.act);
  }
  check_finite(v, "scores output");
  return v;
}

int FeedForwardClassifier::classify(const Vector& x) const {
  Vector s = scores(x);
  int best = 0;
  for (int i = 1; i < num_classes_; ++i)
    if (s[i] > s[best]) best = i;
  return best;
}

ad::NodeId FeedForwardClassifier::append_expr(ad::Graph& g,
                                              ad::NodeId x) const {
  ad::NodeId node = x;
  for (const Layer& layer : layers_) {
    node = g.affine(layer.w, layer.b, node);
    if (layer.act == Activation::Relu) node = g.relu(node);
    if (layer.act == Activation::Tanh) node = g.tanh(node);
  }
  return node;
}

GroundTruthDecoder::GroundTruthDecoder(int class_index, Matrix a, Vector b)
    : class_index_(class_index), a_(std::move(a)), b_(std::move(b)) {
  if (class_index_ < 0)
    throw InvalidArgument("decoder: class index must be >= 0");
  check_dim(a_.rows() > 0 && a_.cols() > 0, "decoder: empty matrix");
  check_dim(b_.size() == a_.rows(), "decoder: bias size mismatch");
  check_dim(a_.cols() < a_.rows(), "decoder: requires n_L < n_I");
  check_finite(a_, "decoder matrix");
  check_finite(b_, "decoder bias");
}

Vector GroundTruthDecoder::decode(const Vector& l) const {
  check_dim(l.size() == a_.cols(), "decode: latent dim mismatch");
  return (a_ * l + b_).unaryExpr([](double t) { return std::tanh(t); });
}

ad::NodeId GroundTruthDecoder::append_expr(ad::Graph& g, ad::NodeId l) const {
  return g.tanh(g.affine(a_, b_, l));
}

IdentityDecoder::IdentityDecoder(int dim) : dim_(dim) {
  if (dim <= 0) throw DimensionError("identity decoder: dim must be positive");
}

ad::NodeId IdentityDecoder::append_expr(ad::Graph& g, ad::NodeId l) const {
  check_dim(g.dim(l) == dim_, "identity decoder: dim mismatch");
  return l;
}

Vector decode(const GenerativePair& pair, const Vector& l) {
  return pair.decoder.decode(l);
}

EncodeResult encode(const GenerativePair& pair, const Vector& x, Rng& rng) {
  const GroundTruthDecoder& dec = pair.decoder;
  check_dim(x.size() == dec.output_dim(), "encode: input dim mismatch");
  const int n_l = dec.latent_dim();
  const InversionConfig& cfg = pair.inversion;

  // residual^2 as a graph so the descent reuses the backward pass.
  ad::Graph g;
  ad::NodeId l_in = g.input(n_l);
  ad::NodeId out = g.sum_squares(g.sub(dec.append_expr(g, l_in), g.constant(x)));

  EncodeResult result;
  result.residual = std::numeric_limits<double>::infinity();

  for (int r = 0; r < cfg.restarts; ++r) {
    Vector l = (r == 0) ? Vector::Zero(n_l) : rng.normal_vector(n_l);
    std::vector<Vector> in{l};
    ad::Tape tape(g, in);
    double obj = tape.value(out);
    double step = cfg.initial_step;
    std::vector<double> trace{std::sqrt(obj)};

    for (int t = 0; t < cfg.steps && std::sqrt(obj) >= cfg.stop_residual; ++t) {
      Vector grad = tape.gradient(out);
      Vector cand = in[0] - step * grad;
      std::vector<Vector> cand_in{cand};
      ad::Tape cand_tape(g, cand_in);
      double cand_obj = cand_tape.value(out);
      if (cand_obj < obj) {
        in[0] = std::move(cand);
        tape = std::move(cand_tape);
        obj = cand_obj;
        step = std::min(step * 1.25, 64.0);
      } else {
        step *= 0.5;
        if (step < 1e-18) break;
      }
      trace.push_back(std::sqrt(obj));
    }

    double res = std::sqrt(obj);
    result.restart_residuals.push_back(res);
    result.traces.push_back(std::move(trace));
    if (res < result.residual) {
      result.residual = res;
      result.latent = in[0];
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'A', 'T', 'M', 'E', 'T', 'M', 'F'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kKindClassifier = 0;
constexpr std::uint32_t kKindDecoder = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open for writing: " + path.string());
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64_block(const double* data, std::size_t count) {
    raw(data, count * sizeof(double));
  }
  void raw(const void* data, std::size_t bytes) {
    out_.write(static_cast<const char*>(data),
               static_cast<std::streamsize>(bytes));
    if (!out_) throw Error("write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw Error("cannot open for reading: " + path_);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v, "u32 field");
    return v;
  }
  void f64_block(double* data, std::size_t count) {
    raw(data, count * sizeof(double), "weight block");
  }
  void raw(void* data, std::size_t bytes, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes)
      throw ParseError(path_ + ": truncated file while reading " +
                           std::string(what),
                       offset_ + static_cast<std::size_t>(in_.gcount()));
    offset_ += bytes;
  }
  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof())
      throw ParseError(path_ + ": trailing bytes after model data", offset_);
  }
  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t offset_ = 0;
};

void write_header(Writer& w, std::uint32_t kind, std::uint32_t m,
                  std::uint32_t n_i, std::uint32_t n_l,
                  std::uint32_t class_index, std::uint32_t layer_count) {
  w.raw(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u32(kind);
  w.u32(m);
  w.u32(n_i);
  w.u32(n_l);
  w.u32(class_index);
  w.u32(layer_count);
}

void write_block(Writer& w, const Matrix& mat, const Vector& bias,
                 Activation act) {
  w.u32(static_cast<std::uint32_t>(mat.rows()));
  w.u32(static_cast<std::uint32_t>(mat.cols()));
  w.u32(static_cast<std::uint32_t>(act));
  // row-major on disk
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    Vector row = mat.row(r);
    w.f64_block(row.data(), static_cast<std::size_t>(row.size()));
  }
  w.f64_block(bias.data(), static_cast<std::size_t>(bias.size()));
}

struct Header {
  std::uint32_t kind, m, n_i, n_l, class_index, layer_count;
};

Header read_header(Reader& r, std::uint32_t expected_kind) {
  char magic[8];
  r.raw(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw VersionError(r.path() + ": wrong magic header");
  std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw VersionError(r.path() + ": unsupported format version " +
                       std::to_string(version));
  Header h;
  h.kind = r.u32();
  if (h.kind != expected_kind)
    throw ParseError(r.path() + ": unexpected model kind " +
                         std::to_string(h.kind),
                     r.offset());
  h.m = r.u32();
  h.n_i = r.u32();
  h.n_l = r.u32();
  h.class_index = r.u32();
  h.layer_count = r.u32();
  return h;
}

Layer read_block(Reader& r) {
  std::uint32_t rows = r.u32();
  std::uint32_t cols = r.u32();
  std::uint32_t act = r.u32();
  if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
    throw ParseError(r.path() + ": implausible layer shape", r.offset());
  if (act > 2) throw ParseError(r.path() + ": unknown activation", r.offset());
  Layer layer;
  layer.w.resize(rows, cols);
  std::vector<double> row(cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    r.f64_block(row.data(), cols);
    for (std::uint32_t j = 0; j < cols; ++j) layer.w(i, j) = row[j];
  }
  layer.b.resize(rows);
  r.f64_block(layer.b.data(), rows);
  if (!layer.w.allFinite() || !layer.b.allFinite())
    throw ParseError(r.path() + ": non-finite weights", r.offset());
  layer.act = static_cast<Activation>(act);
  return layer;
}

}  // namespace

void save_model(const FeedForwardClassifier& model,
                const std::filesystem::path& path) {
  Writer w(path);
  write_header(w, kKindClassifier,
               static_cast<std::uint32_t>(model.num_classes()),
               static_cast<std::uint32_t>(model.input_dim()), 0, 0,
               static_cast<std::uint32_t>(model.layers().size()));
  for (const Layer& layer : model.layers())
    write_block(w, layer.w, layer.b, layer.act);
}

void save_model(const GroundTruthDecoder& model, int num_classes,
                const std::filesystem::path& path) {
  Writer w(path);
  write_header(w, kKindDecoder, static_cast<std::uint32_t>(num_classes),
               static_cast<std::uint32_t>(model.output_dim()),
               static_cast<std::uint32_t>(model.latent_dim()),
               static_cast<std::uint32_t>(model.class_index()), 1);
  write_block(w, model.a(), model.b(), Activation::Tanh);
}

FeedForwardClassifier load_classifier(const std::filesystem::path& path) {
  Reader r(path);
  Header h = read_header(r, kKindClassifier);
  if (h.layer_count == 0 || h.layer_count > 1024)
    throw ParseError(r.path() + ": implausible layer count", r.offset());
  std::vector<Layer> layers;
  layers.reserve(h.layer_count);
  for (std::uint32_t i = 0; i < h.layer_count; ++i)
    layers.push_back(read_block(r));
  r.expect_eof();
  FeedForwardClassifier model(std::move(layers));
  if (model.num_classes() != static_cast<int>(h.m) ||
      model.input_dim() != static_cast<int>(h.n_i))
    throw ParseError(r.path() + ": header dims disagree with layer shapes",
                     r.offset());
  return model;
}

GroundTruthDecoder load_decoder(const std::filesystem::path& path) {
  Reader r(path);
  Header h = read_header(r, kKindDecoder);
  if (h.layer_count != 1)
    throw ParseError(r.path() + ": decoder files hold exactly one block",
                     r.offset());
  Layer block = read_block(r);
  r.expect_eof();
  if (block.w.rows() != static_cast<int>(h.n_i) ||
      block.w.cols() != static_cast<int>(h.n_l))
    throw ParseError(r.path() + ": header dims disagree with block shape",
                     r.offset());
  return GroundTruthDecoder(static_cast<int>(h.class_index),
                            std::move(block.w), std::move(block.b));
}

}  // namespace latmet
