#include "mxpp/metrics.hpp"

#include <cmath>

namespace mxpp {

namespace {

void require_same_size(const std::vector<float>& a, const std::vector<float>& b, const char* op) {
    if (a.size() != b.size() || a.empty())
        throw shape_error(std::string(op) + ": images must be non-empty and equal-sized");
}

} // namespace

double l1_metric(const std::vector<float>& a, const std::vector<float>& b) {
    require_same_size(a, b, "l1_metric");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.size());
}

double rmse_metric(const std::vector<float>& a, const std::vector<float>& b) {
    require_same_size(a, b, "rmse_metric");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

// Summed-area tables give O(1) window statistics; windows slide with
// stride 1 and uniform weighting.
double ssim_metric(const std::vector<float>& a, const std::vector<float>& b, int width, int height,
                   int window) {
    require_same_size(a, b, "ssim_metric");
    if (static_cast<size_t>(width) * height != a.size())
        throw shape_error("ssim_metric: size does not match width*height");
    if (window > width || window > height)
        throw shape_error("ssim_metric: window larger than image");

    const int sw = width + 1, sh = height + 1;
    std::vector<double> sa(static_cast<size_t>(sw) * sh, 0.0), sb(sa), saa(sa), sbb(sa), sab(sa);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t i = static_cast<size_t>(y) * width + x;
            const size_t s = static_cast<size_t>(y + 1) * sw + (x + 1);
            const size_t up = s - sw, left = s - 1, diag = up - 1;
            const double av = a[i], bv = b[i];
            sa[s] = av + sa[up] + sa[left] - sa[diag];
            sb[s] = bv + sb[up] + sb[left] - sb[diag];
            saa[s] = av * av + saa[up] + saa[left] - saa[diag];
            sbb[s] = bv * bv + sbb[up] + sbb[left] - sbb[diag];
            sab[s] = av * bv + sab[up] + sab[left] - sab[diag];
        }
    }
    auto box = [&](const std::vector<double>& s, int x0, int y0) {
        const size_t tl = static_cast<size_t>(y0) * sw + x0;
        const size_t tr = tl + window;
        const size_t bl = static_cast<size_t>(y0 + window) * sw + x0;
        const size_t br = bl + window;
        return s[br] - s[tr] - s[bl] + s[tl];
    };

    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const double n = static_cast<double>(window) * window;
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + window <= height; ++y) {
        for (int x = 0; x + window <= width; ++x) {
            const double mu_a = box(sa, x, y) / n;
            const double mu_b = box(sb, x, y) / n;
            const double var_a = box(saa, x, y) / n - mu_a * mu_a;
            const double var_b = box(sbb, x, y) / n - mu_b * mu_b;
            const double cov = box(sab, x, y) / n - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

} // namespace mxpp
