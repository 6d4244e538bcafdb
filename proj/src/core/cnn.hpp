#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "imagery.hpp"
#include "rng.hpp"

namespace sep {

// VGG-style trainable feature extractor: conv(3x3, same) + ReLU + maxpool
// 2x2 blocks, fully connected layers ending in the penultimate width D, and
// a 3-node sigmoid output (one per binary SEP measure). The penultimate
// activations are the per-image feature vector.
struct NetworkSpec {
  int input_h = 64;
  int input_w = 64;
  std::vector<int> conv_filters = {8, 16, 32};  // one conv block per entry
  std::vector<int> fc_widths = {30};            // last entry = penultimate width D
  int outputs = kNumMeasures;
  uint64_t seed = 0;

  int penultimate_width() const { return fc_widths.back(); }
  // Spatial size after all pool stages; throws if any stage collapses to 0.
  std::pair<int, int> spatial_after_conv() const;
  int flatten_width() const;
  size_t parameter_count() const;
  void validate() const;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Weight/bias tensors in declaration order: conv blocks first, then fully
// connected layers, then the output layer. Conv weights are stored as
// (filters) x (in_channels*3*3) matrices, dense weights as (out) x (in).
template <typename T>
struct NetworkParams {
  NetworkSpec spec;
  std::vector<Matrix<T>> weights;
  std::vector<Vector<T>> biases;
  std::vector<Matrix<T>> vel_w;  // momentum buffers
  std::vector<Vector<T>> vel_b;

  size_t num_layers() const { return weights.size(); }
};

template <typename T>
struct Gradients {
  std::vector<Matrix<T>> weights;
  std::vector<Vector<T>> biases;
};

// Batch of images in planar layout: per image, channel planes of h*w values.
template <typename T>
struct ImageBatch {
  int count = 0;
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<T> data;  // count*channels*height*width

  static ImageBatch from_images(const std::vector<Image>& images, int h, int w);
};

template <typename T>
struct ForwardResult {
  Matrix<T> probabilities;  // outputs x batch, strictly in (0,1)
  Matrix<T> penultimate;    // D x batch, post-activation
};

// He-uniform initialized weights, zero biases and momentum buffers.
template <typename T>
NetworkParams<T> build_network(const NetworkSpec& spec);

template <typename T>
ForwardResult<T> forward(const NetworkParams<T>& params, const ImageBatch<T>& batch);

// Mean over batch and the three labels of the clamped binary cross-entropy.
template <typename T>
double bce_multilabel_loss(const Matrix<T>& probabilities, const Matrix<T>& labels);

// Exact gradients of bce_multilabel_loss w.r.t. every parameter tensor.
// Returns the loss of the forward pass as a byproduct; `probs_out`, when
// given, receives the forward probabilities.
template <typename T>
double backward(const NetworkParams<T>& params, const ImageBatch<T>& batch,
                const Matrix<T>& labels, Gradients<T>& grads, Matrix<T>* probs_out = nullptr);

// Classical momentum: v <- momentum*v + g; w <- w - lr*v. Throws
// NumericalError on non-finite gradients.
template <typename T>
void sgd_momentum_step(NetworkParams<T>& params, const Gradients<T>& grads, double lr,
                       double momentum);

// Fraction of (p >= 0.5) predictions matching the label, per output.
template <typename T>
std::array<double, kNumMeasures> binary_accuracy(const Matrix<T>& probabilities,
                                                 const Matrix<T>& labels);

extern template struct NetworkParams<float>;
extern template struct NetworkParams<double>;
extern template NetworkParams<float> build_network<float>(const NetworkSpec&);
extern template NetworkParams<double> build_network<double>(const NetworkSpec&);
extern template ForwardResult<float> forward<float>(const NetworkParams<float>&,
                                                    const ImageBatch<float>&);
extern template ForwardResult<double> forward<double>(const NetworkParams<double>&,
                                                      const ImageBatch<double>&);
extern template double bce_multilabel_loss<float>(const Matrix<float>&, const Matrix<float>&);
extern template double bce_multilabel_loss<double>(const Matrix<double>&, const Matrix<double>&);
extern template double backward<float>(const NetworkParams<float>&, const ImageBatch<float>&,
                                       const Matrix<float>&, Gradients<float>&, Matrix<float>*);
extern template double backward<double>(const NetworkParams<double>&, const ImageBatch<double>&,
                                        const Matrix<double>&, Gradients<double>&,
                                        Matrix<double>*);
extern template void sgd_momentum_step<float>(NetworkParams<float>&, const Gradients<float>&,
                                              double, double);
extern template void sgd_momentum_step<double>(NetworkParams<double>&, const Gradients<double>&,
                                               double, double);
extern template std::array<double, kNumMeasures> binary_accuracy<float>(const Matrix<float>&,
                                                                        const Matrix<float>&);
extern template std::array<double, kNumMeasures> binary_accuracy<double>(const Matrix<double>&,
                                                                         const Matrix<double>&);
extern template struct ImageBatch<float>;
extern template struct ImageBatch<double>;

}  // namespace sep
