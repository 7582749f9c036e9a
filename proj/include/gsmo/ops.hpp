#pragma once

#include "gsmo/tape.hpp"

namespace gsmo {

enum class Padding { same, valid };
enum class Mode { train, eval };

/// 2-D convolution over N x H x W x Cin with kernels Kh x Kw x Cin x Cout.
/// Output extent H' = floor((H_pad - Kh)/stride) + 1; same padding targets
/// H' = ceil(H/stride) with zeros split top/bottom (extra at bottom/right).
Value conv2d(Tape& tape, Value input, Value kernels, Value bias, Padding padding, int stride);

/// Per-channel batch normalization. Train mode normalizes with batch
/// statistics over N,H,W and folds them into the running stats by
/// running = momentum * running + (1 - momentum) * batch. Eval mode uses the
/// running stats as-is.
Value batchnorm2d(Tape& tape, Value input, Value gamma, Value beta, Mode mode,
                  Tensor& running_mean, Tensor& running_var, float epsilon = 1e-5f,
                  float momentum = 0.9f);

/// Max pooling with window == stride == pool. Extents not divisible by pool
/// are padded with -inf on the bottom/right; gradient goes to the first
/// (lowest flat index) maximum of each window.
Value maxpool2d(Tape& tape, Value input, int pool);

/// Affine map input * weight + bias over N x F.
Value dense(Tape& tape, Value input, Value weight, Value bias);

Value relu(Tape& tape, Value x);

/// N x H x W x C -> N x (H*W*C), row-major order preserved.
Value flatten(Tape& tape, Value x);

/// Concatenation along the last axis; all other extents must agree.
Value concat(Tape& tape, Value a, Value b);

/// Row-wise softmax over N x K with max-subtraction for stability.
Value softmax(Tape& tape, Value x);

/// Batch-mean of -log(probability at the one-hot target), probabilities
/// clamped to [1e-12, 1] before the log. Differentiable w.r.t. probabilities.
Value cross_entropy(Tape& tape, Value probabilities, Value targets);

Value add(Tape& tape, Value a, Value b);
Value scale(Tape& tape, Value x, float c);
Value sum(Tape& tape, Value x);

} // namespace gsmo
