#include "cnn.hpp"

#include <algorithm>

namespace sep {

std::pair<int, int> NetworkSpec::spatial_after_conv() const {
  int h = input_h, w = input_w;
  for (size_t i = 0; i < conv_filters.size(); ++i) {
    h /= 2;  // 3x3 same conv keeps the size, 2x2 pool floors it
    w /= 2;
    if (h < 1 || w < 1) {
      throw ValidationError("network spec: spatial dimensions collapse below 1x1 at conv block " +
                            std::to_string(i + 1));
    }
  }
  return {h, w};
}

int NetworkSpec::flatten_width() const {
  auto [h, w] = spatial_after_conv();
  const int channels = conv_filters.empty() ? 3 : conv_filters.back();
  return channels * h * w;
}

size_t NetworkSpec::parameter_count() const {
  size_t count = 0;
  int c_in = 3;
  for (int f : conv_filters) {
    count += static_cast<size_t>(f) * c_in * 9 + f;
    c_in = f;
  }
  int in = flatten_width();
  for (int width : fc_widths) {
    count += static_cast<size_t>(width) * in + width;
    in = width;
  }
  count += static_cast<size_t>(outputs) * in + outputs;
  return count;
}

void NetworkSpec::validate() const {
  if (input_h < 1 || input_w < 1) throw ValidationError("network spec: input size must be >= 1");
  if (fc_widths.empty() || fc_widths.back() < 1) {
    throw ValidationError("network spec: need a penultimate fully connected width >= 1");
  }
  for (int f : conv_filters) {
    if (f < 1) throw ValidationError("network spec: conv filter counts must be >= 1");
  }
  for (int w : fc_widths) {
    if (w < 1) throw ValidationError("network spec: fully connected widths must be >= 1");
  }
  if (outputs < 1) throw ValidationError("network spec: outputs must be >= 1");
  (void)spatial_after_conv();
}

template <typename T>
ImageBatch<T> ImageBatch<T>::from_images(const std::vector<Image>& images, int h, int w) {
  ImageBatch<T> batch;
  batch.count = static_cast<int>(images.size());
  batch.height = h;
  batch.width = w;
  batch.data.resize(static_cast<size_t>(batch.count) * 3 * h * w);
  const size_t plane = static_cast<size_t>(h) * w;
  for (int b = 0; b < batch.count; ++b) {
    const Image img =
        (images[b].height == h && images[b].width == w) ? images[b] : resize(images[b], h, w);
    T* dst = batch.data.data() + static_cast<size_t>(b) * 3 * plane;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        for (int ch = 0; ch < 3; ++ch) {
          dst[ch * plane + r * static_cast<size_t>(w) + c] = static_cast<T>(img.at(r, c, ch));
        }
      }
    }
  }
  return batch;
}

namespace {

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    return T(1) / (T(1) + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Receptive fields of a 3x3 same-padding conv, one column per output pixel.
// Row order: channel-major, then kernel row, then kernel column.
template <typename T>
Matrix<T> im2col(const Matrix<T>& act, int batch, int height, int width) {
  const auto channels = act.rows();
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  Matrix<T> cols = Matrix<T>::Zero(channels * 9, static_cast<Eigen::Index>(batch) * pixels);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * pixels;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const Eigen::Index col = base + static_cast<Eigen::Index>(r) * width + c;
        for (int dr = 0; dr < 3; ++dr) {
          const int rr = r + dr - 1;
          if (rr < 0 || rr >= height) continue;
          for (int dc = 0; dc < 3; ++dc) {
            const int cc = c + dc - 1;
            if (cc < 0 || cc >= width) continue;
            const Eigen::Index src = base + static_cast<Eigen::Index>(rr) * width + cc;
            for (Eigen::Index ch = 0; ch < channels; ++ch) {
              cols(ch * 9 + dr * 3 + dc, col) = act(ch, src);
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
Matrix<T> col2im(const Matrix<T>& dcols, int channels, int batch, int height, int width) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  Matrix<T> dact = Matrix<T>::Zero(channels, static_cast<Eigen::Index>(batch) * pixels);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * pixels;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const Eigen::Index col = base + static_cast<Eigen::Index>(r) * width + c;
        for (int dr = 0; dr < 3; ++dr) {
          const int rr = r + dr - 1;
          if (rr < 0 || rr >= height) continue;
          for (int dc = 0; dc < 3; ++dc) {
            const int cc = c + dc - 1;
            if (cc < 0 || cc >= width) continue;
            const Eigen::Index src = base + static_cast<Eigen::Index>(rr) * width + cc;
            for (int ch = 0; ch < channels; ++ch) {
              dact(ch, src) += dcols(ch * 9 + dr * 3 + dc, col);
            }
          }
        }
      }
    }
  }
  return dact;
}

// 2x2 max pooling with stride 2; ties go to the first element in scan
// order so backward routing is unambiguous.
template <typename T>
Matrix<T> maxpool(const Matrix<T>& act, int batch, int height, int width,
                  std::vector<int8_t>* argmax) {
  const int out_h = height / 2, out_w = width / 2;
  const auto channels = act.rows();
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index out_pixels = static_cast<Eigen::Index>(out_h) * out_w;
  Matrix<T> pooled(channels, static_cast<Eigen::Index>(batch) * out_pixels);
  argmax->assign(static_cast<size_t>(channels) * batch * out_pixels, 0);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index in_base = static_cast<Eigen::Index>(b) * pixels;
    const Eigen::Index out_base = static_cast<Eigen::Index>(b) * out_pixels;
    for (int r = 0; r < out_h; ++r) {
      for (int c = 0; c < out_w; ++c) {
        const Eigen::Index out_col = out_base + static_cast<Eigen::Index>(r) * out_w + c;
        for (Eigen::Index ch = 0; ch < channels; ++ch) {
          T best = act(ch, in_base + static_cast<Eigen::Index>(2 * r) * width + 2 * c);
          int8_t best_pos = 0;
          for (int pos = 1; pos < 4; ++pos) {
            const int rr = 2 * r + pos / 2, cc = 2 * c + pos % 2;
            const T v = act(ch, in_base + static_cast<Eigen::Index>(rr) * width + cc);
            if (v > best) {
              best = v;
              best_pos = static_cast<int8_t>(pos);
            }
          }
          pooled(ch, out_col) = best;
          (*argmax)[static_cast<size_t>(out_col) * channels + ch] = best_pos;
        }
      }
    }
  }
  return pooled;
}

template <typename T>
Matrix<T> unpool(const Matrix<T>& dpool, const std::vector<int8_t>& argmax, int batch, int height,
                 int width) {
  const int out_h = height / 2, out_w = width / 2;
  const auto channels = dpool.rows();
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index out_pixels = static_cast<Eigen::Index>(out_h) * out_w;
  Matrix<T> dact = Matrix<T>::Zero(channels, static_cast<Eigen::Index>(batch) * pixels);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index in_base = static_cast<Eigen::Index>(b) * pixels;
    const Eigen::Index out_base = static_cast<Eigen::Index>(b) * out_pixels;
    for (int r = 0; r < out_h; ++r) {
      for (int c = 0; c < out_w; ++c) {
        const Eigen::Index out_col = out_base + static_cast<Eigen::Index>(r) * out_w + c;
        for (Eigen::Index ch = 0; ch < channels; ++ch) {
          const int pos = argmax[static_cast<size_t>(out_col) * channels + ch];
          const int rr = 2 * r + pos / 2, cc = 2 * c + pos % 2;
          dact(ch, in_base + static_cast<Eigen::Index>(rr) * width + cc) += dpool(ch, out_col);
        }
      }
    }
  }
  return dact;
}

template <typename T>
struct ForwardCache {
  std::vector<Matrix<T>> conv_cols;  // im2col of each block input
  std::vector<Matrix<T>> conv_z;     // pre-activation
  std::vector<std::vector<int8_t>> pool_argmax;
  std::vector<std::pair<int, int>> conv_spatial;  // input spatial per block
  std::vector<Matrix<T>> fc_inputs;               // input of each dense layer (incl. output layer)
  std::vector<Matrix<T>> fc_z;                    // pre-activation of hidden dense layers
  Matrix<T> probs;
};

template <typename T>
Matrix<T> input_matrix(const ImageBatch<T>& batch) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(batch.height) * batch.width;
  Matrix<T> act(3, static_cast<Eigen::Index>(batch.count) * pixels);
  for (int b = 0; b < batch.count; ++b) {
    const T* src = batch.data.data() + static_cast<size_t>(b) * 3 * pixels;
    for (int ch = 0; ch < 3; ++ch) {
      for (Eigen::Index p = 0; p < pixels; ++p) {
        act(ch, static_cast<Eigen::Index>(b) * pixels + p) = src[ch * pixels + p];
      }
    }
  }
  return act;
}

template <typename T>
ForwardResult<T> forward_cached(const NetworkParams<T>& params, const ImageBatch<T>& batch,
                                ForwardCache<T>* cache) {
  const NetworkSpec& spec = params.spec;
  if (batch.height != spec.input_h || batch.width != spec.input_w) {
    throw ValidationError("forward: batch size " + std::to_string(batch.height) + "x" +
                          std::to_string(batch.width) + " does not match network input " +
                          std::to_string(spec.input_h) + "x" + std::to_string(spec.input_w));
  }
  const int n = batch.count;
  Matrix<T> act = input_matrix(batch);
  int h = spec.input_h, w = spec.input_w;
  size_t layer = 0;
  for (size_t bidx = 0; bidx < spec.conv_filters.size(); ++bidx, ++layer) {
    Matrix<T> cols = im2col(act, n, h, w);
    Matrix<T> z = params.weights[layer] * cols;
    z.colwise() += params.biases[layer];
    Matrix<T> relu = z.cwiseMax(T(0));
    std::vector<int8_t> argmax;
    Matrix<T> pooled = maxpool(relu, n, h, w, &argmax);
    if (cache) {
      cache->conv_cols.push_back(std::move(cols));
      cache->conv_z.push_back(std::move(z));
      cache->pool_argmax.push_back(std::move(argmax));
      cache->conv_spatial.push_back({h, w});
    }
    act = std::move(pooled);
    h /= 2;
    w /= 2;
  }

  // Flatten to (channels*pixels) x batch, channel-major within a column.
  const Eigen::Index pixels = static_cast<Eigen::Index>(h) * w;
  const auto channels = act.rows();
  Matrix<T> flat(channels * pixels, n);
  for (int b = 0; b < n; ++b) {
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      for (Eigen::Index p = 0; p < pixels; ++p) {
        flat(ch * pixels + p, b) = act(ch, static_cast<Eigen::Index>(b) * pixels + p);
      }
    }
  }

  Matrix<T> fc_act = std::move(flat);
  ForwardResult<T> result;
  for (size_t f = 0; f < spec.fc_widths.size(); ++f, ++layer) {
    if (cache) cache->fc_inputs.push_back(fc_act);
    Matrix<T> z = params.weights[layer] * fc_act;
    z.colwise() += params.biases[layer];
    Matrix<T> a = z.cwiseMax(T(0));
    if (cache) cache->fc_z.push_back(std::move(z));
    fc_act = std::move(a);
  }
  result.penultimate = fc_act;

  if (cache) cache->fc_inputs.push_back(fc_act);
  Matrix<T> logits = params.weights[layer] * fc_act;
  logits.colwise() += params.biases[layer];
  result.probabilities = logits.unaryExpr([](T x) { return stable_sigmoid(x); });
  if (cache) cache->probs = result.probabilities;
  return result;
}

}  // namespace

template <typename T>
NetworkParams<T> build_network(const NetworkSpec& spec) {
  spec.validate();
  NetworkParams<T> params;
  params.spec = spec;
  size_t layer = 0;
  auto add_layer = [&](Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
    Rng rng = Rng::substream(spec.seed, "init-layer", layer);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix<T> w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        w(r, c) = static_cast<T>(rng.uniform(-limit, limit));
      }
    }
    params.weights.push_back(std::move(w));
    params.biases.push_back(Vector<T>::Zero(rows));
    params.vel_w.push_back(Matrix<T>::Zero(rows, cols));
    params.vel_b.push_back(Vector<T>::Zero(rows));
    ++layer;
  };

  int c_in = 3;
  for (int f : spec.conv_filters) {
    add_layer(f, static_cast<Eigen::Index>(c_in) * 9, static_cast<Eigen::Index>(c_in) * 9);
    c_in = f;
  }
  int in = spec.flatten_width();
  for (int width : spec.fc_widths) {
    add_layer(width, in, in);
    in = width;
  }
  add_layer(spec.outputs, in, in);
  return params;
}

template <typename T>
ForwardResult<T> forward(const NetworkParams<T>& params, const ImageBatch<T>& batch) {
  return forward_cached<T>(params, batch, nullptr);
}

template <typename T>
double bce_multilabel_loss(const Matrix<T>& probabilities, const Matrix<T>& labels) {
  if (probabilities.rows() != labels.rows() || probabilities.cols() != labels.cols()) {
    throw ValidationError("bce_multilabel_loss: shape mismatch");
  }
  constexpr double kEps = 1e-7;
  double total = 0.0;
  for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
      const double p =
          std::clamp(static_cast<double>(probabilities(r, c)), kEps, 1.0 - kEps);
      const double y = static_cast<double>(labels(r, c));
      total -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    }
  }
  return total / static_cast<double>(probabilities.size());
}

template <typename T>
double backward(const NetworkParams<T>& params, const ImageBatch<T>& batch,
                const Matrix<T>& labels, Gradients<T>& grads, Matrix<T>* probs_out) {
  const NetworkSpec& spec = params.spec;
  ForwardCache<T> cache;
  ForwardResult<T> result = forward_cached<T>(params, batch, &cache);
  const double loss = bce_multilabel_loss(result.probabilities, labels);
  if (probs_out) *probs_out = result.probabilities;

  grads.weights.resize(params.weights.size());
  grads.biases.resize(params.biases.size());

  const T scale = T(1) / static_cast<T>(result.probabilities.size());
  // Fused sigmoid + cross-entropy gradient; the epsilon clamp only guards
  // the loss value.
  Matrix<T> delta = (cache.probs - labels) * scale;

  const size_t num_conv = spec.conv_filters.size();
  const size_t num_fc = spec.fc_widths.size();

  // Output layer.
  size_t layer = num_conv + num_fc;
  grads.weights[layer].noalias() = delta * cache.fc_inputs[num_fc].transpose();
  grads.biases[layer] = delta.rowwise().sum();
  Matrix<T> dact = params.weights[layer].transpose() * delta;

  // Hidden dense layers, in reverse.
  for (size_t f = num_fc; f-- > 0;) {
    layer = num_conv + f;
    Matrix<T> dz =
        dact.cwiseProduct(cache.fc_z[f].unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
    grads.weights[layer].noalias() = dz * cache.fc_inputs[f].transpose();
    grads.biases[layer] = dz.rowwise().sum();
    dact = params.weights[layer].transpose() * dz;
  }

  // Un-flatten back to channel x (batch*pixels).
  auto [ph, pw] = spec.spatial_after_conv();
  const Eigen::Index pixels = static_cast<Eigen::Index>(ph) * pw;
  const int n = batch.count;
  const Eigen::Index channels = spec.conv_filters.empty() ? 3 : spec.conv_filters.back();
  Matrix<T> dpool(channels, static_cast<Eigen::Index>(n) * pixels);
  for (int b = 0; b < n; ++b) {
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      for (Eigen::Index p = 0; p < pixels; ++p) {
        dpool(ch, static_cast<Eigen::Index>(b) * pixels + p) = dact(ch * pixels + p, b);
      }
    }
  }

  for (size_t bidx = num_conv; bidx-- > 0;) {
    const auto [h, w] = cache.conv_spatial[bidx];
    Matrix<T> drelu = unpool(dpool, cache.pool_argmax[bidx], n, h, w);
    Matrix<T> dz = drelu.cwiseProduct(
        cache.conv_z[bidx].unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
    grads.weights[bidx].noalias() = dz * cache.conv_cols[bidx].transpose();
    grads.biases[bidx] = dz.rowwise().sum();
    if (bidx > 0) {
      Matrix<T> dcols = params.weights[bidx].transpose() * dz;
      const Eigen::Index in_channels = params.weights[bidx].cols() / 9;
      dpool = col2im(dcols, static_cast<int>(in_channels), n, h, w);
    }
  }
  return loss;
}

template <typename T>
void sgd_momentum_step(NetworkParams<T>& params, const Gradients<T>& grads, double lr,
                       double momentum) {
  if (!(lr > 0.0)) throw ValidationError("sgd_momentum_step: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ValidationError("sgd_momentum_step: momentum must be in [0, 1)");
  }
  for (size_t i = 0; i < params.weights.size(); ++i) {
    if (!grads.weights[i].allFinite() || !grads.biases[i].allFinite()) {
      throw NumericalError("sgd_momentum_step: non-finite gradient in layer " + std::to_string(i));
    }
    params.vel_w[i] = static_cast<T>(momentum) * params.vel_w[i] + grads.weights[i];
    params.weights[i] -= static_cast<T>(lr) * params.vel_w[i];
    params.vel_b[i] = static_cast<T>(momentum) * params.vel_b[i] + grads.biases[i];
    params.biases[i] -= static_cast<T>(lr) * params.vel_b[i];
  }
}

template <typename T>
std::array<double, kNumMeasures> binary_accuracy(const Matrix<T>& probabilities,
                                                 const Matrix<T>& labels) {
  std::array<double, kNumMeasures> acc{};
  if (probabilities.cols() == 0) return acc;
  for (Eigen::Index r = 0; r < probabilities.rows() && r < kNumMeasures; ++r) {
    Eigen::Index hits = 0;
    for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
      const bool predicted = probabilities(r, c) >= T(0.5);  // ties count as positive
      const bool actual = labels(r, c) > T(0.5);
      if (predicted == actual) ++hits;
    }
    acc[r] = static_cast<double>(hits) / static_cast<double>(probabilities.cols());
  }
  return acc;
}

template struct NetworkParams<float>;
template struct NetworkParams<double>;
template struct ImageBatch<float>;
template struct ImageBatch<double>;
template NetworkParams<float> build_network<float>(const NetworkSpec&);
template NetworkParams<double> build_network<double>(const NetworkSpec&);
template ForwardResult<float> forward<float>(const NetworkParams<float>&,
                                             const ImageBatch<float>&);
template ForwardResult<double> forward<double>(const NetworkParams<double>&,
                                               const ImageBatch<double>&);
template double bce_multilabel_loss<float>(const Matrix<float>&, const Matrix<float>&);
template double bce_multilabel_loss<double>(const Matrix<double>&, const Matrix<double>&);
template double backward<float>(const NetworkParams<float>&, const ImageBatch<float>&,
                                const Matrix<float>&, Gradients<float>&, Matrix<float>*);
template double backward<double>(const NetworkParams<double>&, const ImageBatch<double>&,
                                 const Matrix<double>&, Gradients<double>&, Matrix<double>*);
template void sgd_momentum_step<float>(NetworkParams<float>&, const Gradients<float>&, double,
                                       double);
template void sgd_momentum_step<double>(NetworkParams<double>&, const Gradients<double>&, double,
                                        double);
template std::array<double, kNumMeasures> binary_accuracy<float>(const Matrix<float>&,
                                                                 const Matrix<float>&);
template std::array<double, kNumMeasures> binary_accuracy<double>(const Matrix<double>&,
                                                                  const Matrix<double>&);

}  // namespace sep
