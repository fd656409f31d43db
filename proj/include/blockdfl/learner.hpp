#pragma once

// Local training core: small classifiers over a flat parameter vector,
// mini-batch SGD, accuracy evaluation and dataset handling.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include "blockdfl/common.hpp"
#include "blockdfl/rng.hpp"

namespace blockdfl {

struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;  // row-major, size() * n_features
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * n_features, n_features);
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{n_features, n_classes, {}, {}};
    out.features.reserve(idx.size() * n_features);
    out.labels.reserve(idx.size());
    for (auto i : idx) {
      const auto r = row(i);
      out.features.insert(out.features.end(), r.begin(), r.end());
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  void validate() const {
    require(n_features >= 1 && n_classes >= 1, "dataset: invalid dimensions");
    require(features.size() == labels.size() * n_features, "dataset: feature matrix size mismatch");
    for (int y : labels)
      require(y >= 0 && static_cast<std::size_t>(y) < n_classes, "dataset: label out of range");
  }
};

enum class ModelKind { softmax_regression, mlp_one_hidden };

inline std::string to_string(ModelKind k) {
  return k == ModelKind::softmax_regression ? "softmax_regression" : "mlp_one_hidden";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "softmax_regression") return ModelKind::softmax_regression;
  if (s == "mlp_one_hidden") return ModelKind::mlp_one_hidden;
  throw Error("unknown model kind: " + s);
}

/// Shape of a model; fixes how the flat parameter vector is laid out.
///
/// softmax_regression: W[F x C] then b[C].
/// mlp_one_hidden:     W1[F x H], b1[H], W2[H x C], b2[C]; tanh hidden units.
struct ModelSpec {
  ModelKind kind = ModelKind::softmax_regression;
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::size_t hidden = 16;

  std::size_t param_count() const {
    if (kind == ModelKind::softmax_regression) return input_dim * classes + classes;
    return input_dim * hidden + hidden + hidden * classes + classes;
  }
};

struct LearnerConfig {
  ModelSpec model;
  double learning_rate = 0.01;
  double decay = 0.99;
  std::size_t batch_size = 16;
  std::size_t local_epochs = 5;

  void validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learner: learning rate must be >= 0");
    require(decay > 0.0 && decay <= 1.0, "learner: decay must be in (0, 1]");
    require(batch_size >= 1, "learner: batch size must be >= 1");
    require(local_epochs >= 1, "learner: local epochs must be >= 1");
  }
};

inline ParameterVector init_model(std::uint64_t seed, const ModelSpec& spec) {
  require(spec.input_dim >= 1 && spec.classes >= 1, "init_model: invalid dims");
  require(spec.kind != ModelKind::mlp_one_hidden || spec.hidden >= 1, "init_model: hidden units must be >= 1");
  Rng rng(seed);
  ParameterVector w(spec.param_count(), 0.0);
  if (spec.kind == ModelKind::softmax_regression) {
    for (std::size_t i = 0; i < spec.input_dim * spec.classes; ++i) w[i] = 0.01 * rng.normal();
    return w;
  }
  const std::size_t F = spec.input_dim, H = spec.hidden, C = spec.classes;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(F));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(H));
  for (std::size_t i = 0; i < F * H; ++i) w[i] = s1 * rng.normal();
  const std::size_t w2 = F * H + H;
  for (std::size_t i = 0; i < H * C; ++i) w[w2 + i] = s2 * rng.normal();
  return w;
}

namespace detail {

inline void softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// Logits for one sample; fills `hidden` for the MLP.
inline void forward(const ModelSpec& spec, const ParameterVector& w, std::span<const double> x,
                    std::span<double> logits, std::span<double> hidden) {
  const std::size_t F = spec.input_dim, C = spec.classes;
  if (spec.kind == ModelKind::softmax_regression) {
    const double* b = w.data() + F * C;
    for (std::size_t c = 0; c < C; ++c) logits[c] = b[c];
    for (std::size_t f = 0; f < F; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      const double* wr = w.data() + f * C;
      for (std::size_t c = 0; c < C; ++c) logits[c] += xf * wr[c];
    }
    return;
  }
  const std::size_t H = spec.hidden;
  const double* W1 = w.data();
  const double* b1 = W1 + F * H;
  const double* W2 = b1 + H;
  const double* b2 = W2 + H * C;
  for (std::size_t h = 0; h < H; ++h) hidden[h] = b1[h];
  for (std::size_t f = 0; f < F; ++f) {
    const double xf = x[f];
    if (xf == 0.0) continue;
    const double* wr = W1 + f * H;
    for (std::size_t h = 0; h < H; ++h) hidden[h] += xf * wr[h];
  }
  for (std::size_t h = 0; h < H; ++h) hidden[h] = std::tanh(hidden[h]);
  for (std::size_t c = 0; c < C; ++c) logits[c] = b2[c];
  for (std::size_t h = 0; h < H; ++h) {
    const double* wr = W2 + h * C;
    for (std::size_t c = 0; c < C; ++c) logits[c] += hidden[h] * wr[c];
  }
}

inline std::size_t argmax(std::span<const double> z) {
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

}  // namespace detail

/// Mean cross-entropy over the selected samples and its gradient.
inline std::pair<double, ParameterVector> loss_and_gradient(const ModelSpec& spec, const ParameterVector& w,
                                                            const Dataset& data,
                                                            std::span<const std::size_t> batch) {
  require(w.size() == spec.param_count(), "loss_and_gradient: parameter count mismatch");
  require(!batch.empty(), "loss_and_gradient: empty batch");
  const std::size_t F = spec.input_dim, C = spec.classes, H = spec.hidden;
  const bool mlp = spec.kind == ModelKind::mlp_one_hidden;
  std::vector<double> logits(C), hidden(mlp ? H : 0), dhidden(mlp ? H : 0);
  ParameterVector grad(w.size(), 0.0);
  double loss = 0.0;

  for (auto i : batch) {
    const auto x = data.row(i);
    const auto y = static_cast<std::size_t>(data.labels[i]);
    detail::forward(spec, w, x, logits, hidden);
    detail::softmax_inplace(logits);
    loss -= std::log(std::max(logits[y], 1e-300));
    logits[y] -= 1.0;  // dL/dlogits

    if (!mlp) {
      for (std::size_t f = 0; f < F; ++f) {
        const double xf = x[f];
        if (xf == 0.0) continue;
        double* g = grad.data() + f * C;
        for (std::size_t c = 0; c < C; ++c) g[c] += xf * logits[c];
      }
      double* gb = grad.data() + F * C;
      for (std::size_t c = 0; c < C; ++c) gb[c] += logits[c];
      continue;
    }

    const double* W2 = w.data() + F * H + H;
    double* gW1 = grad.data();
    double* gb1 = gW1 + F * H;
    double* gW2 = gb1 + H;
    double* gb2 = gW2 + H * C;
    for (std::size_t h = 0; h < H; ++h) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        gW2[h * C + c] += hidden[h] * logits[c];
        acc += W2[h * C + c] * logits[c];
      }
      dhidden[h] = acc * (1.0 - hidden[h] * hidden[h]);
    }
    for (std::size_t c = 0; c < C; ++c) gb2[c] += logits[c];
    for (std::size_t f = 0; f < F; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      for (std::size_t h = 0; h < H; ++h) gW1[f * H + h] += xf * dhidden[h];
    }
    for (std::size_t h = 0; h < H; ++h) gb1[h] += dhidden[h];
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grad) g *= inv;
  return {loss * inv, std::move(grad)};
}

inline double batch_loss(const ModelSpec& spec, const ParameterVector& w, const Dataset& data,
                         std::span<const std::size_t> batch) {
  const std::size_t C = spec.classes;
  std::vector<double> logits(C), hidden(spec.kind == ModelKind::mlp_one_hidden ? spec.hidden : 0);
  double loss = 0.0;
  for (auto i : batch) {
    detail::forward(spec, w, data.row(i), logits, hidden);
    detail::softmax_inplace(logits);
    loss -= std::log(std::max(logits[static_cast<std::size_t>(data.labels[i])], 1e-300));
  }
  return loss / static_cast<double>(batch.size());
}

/// Mini-batch SGD for `local_epochs` passes with step learning_rate * decay^round.
/// Sample order is reshuffled every epoch from `rng_seed`.
inline ParameterVector local_train(ParameterVector w, const Dataset& data, const LearnerConfig& cfg,
                                   std::int64_t round, std::uint64_t rng_seed) {
  cfg.validate();
  require(all_finite(w), "local_train: non-finite input model");
  require(data.size() > 0, "local_train: empty dataset");
  require(w.size() == cfg.model.param_count(), "local_train: parameter count mismatch");

  const double lr = cfg.learning_rate * std::pow(cfg.decay, static_cast<double>(std::max<std::int64_t>(round, 0)));
  Rng rng(rng_seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      auto [loss, grad] = loss_and_gradient(cfg.model, w, data, batch);
      if (!std::isfinite(loss) || !all_finite(grad))
        throw Error("local_train: non-finite loss/gradient at round " + std::to_string(round) + ", epoch " +
                    std::to_string(epoch) + ", batch offset " + std::to_string(start));
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * grad[k];
    }
  }
  return w;
}

/// Fraction of correctly classified samples (argmax, lowest class on ties).
inline double evaluate(const ModelSpec& spec, const ParameterVector& w, const Dataset& data) {
  require(data.size() > 0, "evaluate: empty dataset");
  require(w.size() == spec.param_count(), "evaluate: parameter count mismatch");
  std::vector<double> logits(spec.classes), hidden(spec.kind == ModelKind::mlp_one_hidden ? spec.hidden : 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(spec, w, data.row(i), logits, hidden);
    if (detail::argmax(logits) == static_cast<std::size_t>(data.labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Gaussian blobs: class means ~ N(0, I_F), samples = mean + spread * N(0, I_F).
/// Samples come out shuffled.
inline Dataset make_synthetic_dataset(std::uint64_t seed, std::size_t classes, std::size_t per_class,
                                      std::size_t dim, double spread) {
  require(classes >= 2, "synthetic dataset: need at least 2 classes");
  require(per_class >= 1 && dim >= 1, "synthetic dataset: invalid size");
  require(spread >= 0.0 && std::isfinite(spread), "synthetic dataset: spread must be >= 0");
  Rng rng(seed);
  std::vector<double> means(classes * dim);
  for (auto& m : means) m = rng.normal();

  std::vector<std::size_t> order(classes * per_class);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  Dataset d{dim, classes, std::vector<double>(order.size() * dim), std::vector<int>(order.size())};
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    const std::size_t cls = order[slot] / per_class;
    d.labels[slot] = static_cast<int>(cls);
    for (std::size_t f = 0; f < dim; ++f) d.features[slot * dim + f] = means[cls * dim + f] + spread * rng.normal();
  }
  return d;
}

namespace detail {

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline std::uint32_t be32(const Bytes& b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) << 24 | static_cast<std::uint32_t>(b[off + 1]) << 16 |
         static_cast<std::uint32_t>(b[off + 2]) << 8 | b[off + 3];
}

}  // namespace detail

/// IDX pair (images magic 0x00000803, labels magic 0x00000801). Pixels are
/// scaled to [0, 1] by 1/255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t classes = 10) {
  const Bytes img = detail::read_file(images_path);
  const Bytes lab = detail::read_file(labels_path);
  if (img.size() < 16) throw Error(images_path + ": truncated IDX header");
  if (detail::be32(img, 0) != 0x00000803) throw Error(images_path + ": bad IDX image magic");
  if (lab.size() < 8) throw Error(labels_path + ": truncated IDX header");
  if (detail::be32(lab, 0) != 0x00000801) throw Error(labels_path + ": bad IDX label magic");

  const std::size_t n = detail::be32(img, 4);
  const std::size_t rows = detail::be32(img, 8), cols = detail::be32(img, 12);
  const std::size_t f = rows * cols;
  if (n == 0 || f == 0) throw Error(images_path + ": empty IDX");
  if (img.size() != 16 + n * f) throw Error(images_path + ": truncated IDX payload");
  if (detail::be32(lab, 4) != n) throw Error(labels_path + ": label count does not match images");
  if (lab.size() != 8 + n) throw Error(labels_path + ": truncated IDX payload");

  Dataset d{f, classes, std::vector<double>(n * f), std::vector<int>(n)};
  for (std::size_t i = 0; i < n * f; ++i) d.features[i] = img[16 + i] / 255.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] >= classes) throw Error(labels_path + ": label out of range at sample " + std::to_string(i));
    d.labels[i] = lab[8 + i];
  }
  return d;
}

/// CSV with a header row; the column named "label" holds the class, every
/// other column is a feature multiplied by `feature_scale`.
inline Dataset load_csv(const std::string& path, std::size_t classes, double feature_scale = 1.0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw Error(path + ": no \"label\" column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  require(header.size() >= 2, path + ": need at least one feature column");

  Dataset d{header.size() - 1, classes, {}, {}};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw Error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " columns");
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0) throw Error(path + ":" + std::to_string(lineno) + ": bad number '" + cells[c] + "'");
      if (c == label_col) {
        if (v < 0 || v >= static_cast<double>(classes) || v != std::floor(v))
          throw Error(path + ":" + std::to_string(lineno) + ": label out of range");
        d.labels.push_back(static_cast<int>(v));
      } else {
        d.features.push_back(v * feature_scale);
      }
    }
  }
  if (d.labels.empty()) throw Error(path + ": no data rows");
  return d;
}

/// Random disjoint parts whose sizes differ by at most one.
inline std::vector<Dataset> partition(const Dataset& data, std::size_t n_parts, std::uint64_t seed) {
  require(n_parts >= 1, "partition: need at least one part");
  require(n_parts <= data.size(), "partition: more parts than samples");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Dataset> parts;
  parts.reserve(n_parts);
  const std::size_t base = data.size() / n_parts, extra = data.size() % n_parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < n_parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    parts.push_back(data.subset(std::span(order).subspan(pos, len)));
    pos += len;
  }
  return parts;
}

/// Random subset of round(fraction * N) samples, kept in original order.
inline Dataset eval_subset(const Dataset& data, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "eval_subset: fraction must be in (0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size()) + 0.5));
  require(k >= 1, "eval_subset: empty result");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return data.subset(order);
}

/// Reserves round(test_fraction * N) samples as a held-out test set.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "split_holdout: fraction must be in (0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const auto k = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(data.size()) + 0.5));
  require(k >= 1 && k < data.size(), "split_holdout: degenerate split");
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(test)};
}

}  // namespace blockdfl
