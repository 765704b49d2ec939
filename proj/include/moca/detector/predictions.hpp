#pragma once

#include <vector>

#include "moca/autodiff/tensor.hpp"

namespace moca::detector {

// Head outputs of one decoder layer: class logits N x C and sigmoid boxes
// N x 4 in normalized cxcywh.
struct LayerPrediction {
  ad::Tensor logits;
  ad::Tensor boxes;
};

}  // namespace moca::detector
