#pragma once

#include <vector>

#include "lanedet/tensor.hpp"

namespace lanedet {

// Which refinement family the model belongs to. network1 keeps full-frame
// attention + FPN features and trains three decoder heads; network2 crops a
// region of interest first and trains the confidence head alone.
enum class Variant { network1, network2 };

inline const char* variant_name(Variant v) { return v == Variant::network1 ? "network1" : "network2"; }

// One lane's ground-truth cells at decoder resolution: row indices paired
// with fractional x positions (cell units). Rows are strictly increasing.
struct LaneCellPoints {
    std::vector<int> rows;
    std::vector<float> xs;
};

// Supervision maps at decoder resolution plus the per-lane cell chains the
// LineIoU term consumes. Maps are batched [N,*,1,H,W]; `labels` stores the
// instance id per cell (0 = background) as floats for uniform tensor IO.
template <class Real>
struct TrainingTargetsT {
    TensorT<Real> confidence;  // [N,1,1,H,W], {0,1}
    TensorT<Real> offsets;     // [N,2,1,H,W], (dx,dy) in [0,1)
    TensorT<Real> labels;      // [N,1,1,H,W], 0..K instance ids
    TensorT<Real> valid;       // [N,1,1,H,W], 1 where offsets are defined
    std::vector<std::vector<LaneCellPoints>> lanes_cells;  // per sample, per lane
    int64_t dropped_points = 0;  // annotation points outside the ROI
};

using TrainingTargets = TrainingTargetsT<float>;

// Decoder outputs: confidence everywhere; offsets/embeddings on network1.
template <class Real>
struct DecoderOutputsT {
    TensorT<Real> confidence;  // [N,1,1,H/4,W/4], sigmoid probabilities
    TensorT<Real> offsets;     // [N,2,1,H/4,W/4], (dx,dy) cell fractions; network1 only
    TensorT<Real> embeddings;  // [N,D,1,H/4,W/4]; network1 only
};

using DecoderOutputs = DecoderOutputsT<float>;

}  // namespace lanedet
