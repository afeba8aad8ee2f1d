#pragma once

#include <vector>

#include "mxpp/error.hpp"

namespace mxpp {

// Pixel metrics over [0,1] grayscale images of equal size.
double l1_metric(const std::vector<float>& a, const std::vector<float>& b);
double rmse_metric(const std::vector<float>& a, const std::vector<float>& b);

// Mean local SSIM: uniform 8x8 windows, stride 1, C1=(0.01)^2, C2=(0.03)^2
// on unit dynamic range.
double ssim_metric(const std::vector<float>& a, const std::vector<float>& b, int width = 32,
                   int height = 32, int window = 8);

} // namespace mxpp
