#include "vsal/morphology.hpp"

#include <utility>
#include <vector>

#include "vsal/errors.hpp"

namespace vsal {

namespace {
void check_mask(const Tensor& m, const char* op) {
    if (m.ndim() != 2) throw ShapeError(std::string(op) + ": expected [H,W] mask");
}
}  // namespace

Tensor dilate(const Tensor& mask, int radius, bool chebyshev) {
    check_mask(mask, "dilate");
    const int h = mask.dim(0), w = mask.dim(1);
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (chebyshev || dy * dy + dx * dx <= radius * radius) offsets.emplace_back(dy, dx);

    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x) == 0.0) continue;
            for (auto [dy, dx] : offsets) {
                const int yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w) out.at(yy, xx) = 1.0;
            }
        }
    return out;
}

Tensor erode3x3(const Tensor& mask) {
    check_mask(mask, "erode3x3");
    const int h = mask.dim(0), w = mask.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool keep = mask.at(y, x) != 0.0;
            for (int dy = -1; dy <= 1 && keep; ++dy)
                for (int dx = -1; dx <= 1 && keep; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    keep = yy >= 0 && yy < h && xx >= 0 && xx < w && mask.at(yy, xx) != 0.0;
                }
            out.at(y, x) = keep ? 1.0 : 0.0;
        }
    return out;
}

Tensor boundary(const Tensor& mask) {
    Tensor er = erode3x3(mask);
    Tensor out(mask.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = (mask[i] != 0.0 && er[i] == 0.0) ? 1.0 : 0.0;
    return out;
}

Tensor skeletonize(const Tensor& mask) {
    check_mask(mask, "skeletonize");
    const int h = mask.dim(0), w = mask.dim(1);
    std::vector<std::uint8_t> img(static_cast<size_t>(h) * w);
    for (std::int64_t i = 0; i < mask.size(); ++i) img[static_cast<size_t>(i)] = mask[i] != 0.0;

    auto px = [&](int y, int x) -> int {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0;
        return img[static_cast<size_t>(y) * w + x];
    };

    bool changed = true;
    std::vector<std::pair<int, int>> kill;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            kill.clear();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (!px(y, x)) continue;
                    // neighbours p2..p9 clockwise from north
                    const int p2 = px(y - 1, x), p3 = px(y - 1, x + 1), p4 = px(y, x + 1),
                              p5 = px(y + 1, x + 1), p6 = px(y + 1, x), p7 = px(y + 1, x - 1),
                              p8 = px(y, x - 1), p9 = px(y - 1, x - 1);
                    const int bsum = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    if (bsum < 2 || bsum > 6) continue;
                    const int seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
                    int transitions = 0;
                    for (int i = 0; i < 8; ++i)
                        if (seq[i] == 0 && seq[i + 1] == 1) ++transitions;
                    if (transitions != 1) continue;
                    if (pass == 0) {
                        if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
                    } else {
                        if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
                    }
                    kill.emplace_back(y, x);
                }
            for (auto [y, x] : kill) img[static_cast<size_t>(y) * w + x] = 0;
            changed = changed || !kill.empty();
        }
    }

    Tensor out({h, w});
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = img[static_cast<size_t>(i)] ? 1.0 : 0.0;
    return out;
}

Tensor component_at(const Tensor& mask, int seed_y, int seed_x) {
    check_mask(mask, "component_at");
    const int h = mask.dim(0), w = mask.dim(1);
    Tensor out({h, w});
    if (seed_y < 0 || seed_y >= h || seed_x < 0 || seed_x >= w) return out;
    if (mask.at(seed_y, seed_x) == 0.0) return out;
    std::vector<std::pair<int, int>> stack{{seed_y, seed_x}};
    out.at(seed_y, seed_x) = 1.0;
    while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                if (mask.at(yy, xx) != 0.0 && out.at(yy, xx) == 0.0) {
                    out.at(yy, xx) = 1.0;
                    stack.emplace_back(yy, xx);
                }
            }
    }
    return out;
}

bool nearest_on(const Tensor& mask, int y, int x, int* out_y, int* out_x) {
    check_mask(mask, "nearest_on");
    const int h = mask.dim(0), w = mask.dim(1);
    long best = -1;
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
            if (mask.at(yy, xx) == 0.0) continue;
            const long d = static_cast<long>(yy - y) * (yy - y) + static_cast<long>(xx - x) * (xx - x);
            if (best < 0 || d < best) {
                best = d;
                *out_y = yy;
                *out_x = xx;
            }
        }
    return best >= 0;
}

std::int64_t count_nonzero(const Tensor& t) {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < t.size(); ++i)
        if (t[i] != 0.0) ++n;
    return n;
}

}  // namespace vsal
