#pragma once

#include "hdan/autograd.hpp"

namespace hdan {

// All activations are [C,D,H,W]; weights use the layouts noted per op.
// Every op validates shapes up front and throws ShapeMismatch on violation.

// x [Ci,D,H,W], w [Co,Ci,k,k,k], b [Co]; zero padding, cubic kernel.
NodePtr conv3d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
               int stride, int pad);

// Transposed conv with kernel == stride (non-overlapping upsample).
// x [Ci,D,H,W], w [Ci,Co,k,k,k], b [Co]; output [Co,D*k,H*k,W*k].
NodePtr conv_transpose3d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
                         int k);

// Per-channel batch norm over the single sample's D*H*W extent.
// When use_batch_stats, normalizes with the biased batch moments and, if
// update_running, folds them into the running buffers with the given
// momentum. Otherwise normalizes with the running buffers.
NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   Tensor& running_mean, Tensor& running_var,
                   bool use_batch_stats, bool update_running, double momentum,
                   double eps);

NodePtr relu(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& x, double s);

// x [C,D,H,W] * m [C] broadcast over the spatial extent.
NodePtr mul_channel(const NodePtr& x, const NodePtr& m);

// x [C,D,H,W] * m [1,D,H,W] broadcast over channels.
NodePtr mul_spatial(const NodePtr& x, const NodePtr& m);

NodePtr concat_channels(const std::vector<NodePtr>& xs);

// [C,D,H,W] -> [C]
NodePtr global_avg_pool(const NodePtr& x);

// [C,D,H,W] -> [1,D,H,W]; max ties resolve to the lowest channel index.
NodePtr channel_max(const NodePtr& x);

// [C,D,H,W] -> [1,D,H,W]
NodePtr channel_mean(const NodePtr& x);

// x [In], w [Out,In], b [Out] -> [Out]
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b);

// Per-voxel softmax across the channel axis.
NodePtr softmax_channels(const NodePtr& x);

// probs [C,D,H,W] (already softmaxed), labels [D,H,W] integer class ids,
// class_weights [C]. Mean over voxels of -w[y]*ln(max(p[y],1e-12)).
NodePtr wce_loss(const NodePtr& probs, const Tensor& labels,
                 const Tensor& class_weights);

// Scalar dot product sum_i coeffs[i]*x[i]; coeffs must match x's shape.
NodePtr weighted_sum(const NodePtr& x, const Tensor& coeffs);

}  // namespace hdan
