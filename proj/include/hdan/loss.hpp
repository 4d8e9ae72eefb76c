#pragma once

#include <cstdint>
#include <vector>

#include "hdan/autograd.hpp"
#include "hdan/volume.hpp"

namespace hdan {

// Inverse-frequency class weights; zero-count classes carry zero weight so
// absent tissue never contributes to the objective.
struct ClassWeights {
    std::vector<double> w;
    std::vector<int64_t> source_histogram;
};

// w_c = N / (C' * N_c) with N the total voxel count and C' the number of
// classes actually present; the mean weight is 1 under perfect balance.
ClassWeights compute_class_weights(const std::vector<int64_t>& hist);

std::vector<int64_t> label_histogram(const LabelMap& labels, int64_t num_classes);

// Mean over voxels of w_y * -ln(max(P_y, 1e-12)).
double weighted_cross_entropy(const ProbabilityMap& probs, const LabelMap& labels,
                              const ClassWeights& cw);

// Graph-building form used by the trainer; probs/labels are [C,D,H,W] and
// [D,H,W] node/tensor pairs.
NodePtr weighted_cross_entropy(const NodePtr& probs, const Tensor& labels,
                               const ClassWeights& cw);

}  // namespace hdan
