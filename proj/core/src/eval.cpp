#include "hecofuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hecofuse {
namespace eval {

namespace {

// Extents at or below this size have no meaningful overlap geometry; the
// clipping arithmetic below would be pure rounding noise.
constexpr double kMinBoxExtent = 1e-9;

bool degenerate(const OrientedBox3D& b) {
    return b.length <= kMinBoxExtent || b.width <= kMinBoxExtent ||
           b.height <= kMinBoxExtent;
}

std::vector<Vec2> box_polygon(const OrientedBox3D& b) {
    const auto corners = box_bev_corners(b);
    return {corners.begin(), corners.end()};
}

}  // namespace

double convex_polygon_area(const std::vector<Vec2>& poly) {
    if (poly.size() < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        acc += p.x * q.y - q.x * p.y;
    }
    return 0.5 * std::abs(acc);
}

std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject,
                              const std::vector<Vec2>& clip) {
    std::vector<Vec2> output = subject;
    for (std::size_t i = 0; i < clip.size() && !output.empty(); ++i) {
        const Vec2& a = clip[i];
        const Vec2& b = clip[(i + 1) % clip.size()];
        // Inside = left of the directed edge a->b (counter-clockwise clip
        // polygon).
        auto inside = [&](const Vec2& p) {
            return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >=
                   -1e-12;
        };
        auto intersect = [&](const Vec2& p, const Vec2& q) {
            const double a1 = b.y - a.y, b1 = a.x - b.x;
            const double c1 = a1 * a.x + b1 * a.y;
            const double a2 = q.y - p.y, b2 = p.x - q.x;
            const double c2 = a2 * p.x + b2 * p.y;
            const double det = a1 * b2 - a2 * b1;
            if (std::abs(det) < 1e-15) return p;  // near-parallel edge
            return Vec2{(b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det};
        };
        std::vector<Vec2> input;
        input.swap(output);
        for (std::size_t j = 0; j < input.size(); ++j) {
            const Vec2& cur = input[j];
            const Vec2& prev = input[(j + input.size() - 1) % input.size()];
            const bool cur_in = inside(cur);
            const bool prev_in = inside(prev);
            if (cur_in) {
                if (!prev_in) output.push_back(intersect(prev, cur));
                output.push_back(cur);
            } else if (prev_in) {
                output.push_back(intersect(prev, cur));
            }
        }
    }
    return output;
}

double iou_bev(const OrientedBox3D& a, const OrientedBox3D& b) {
    if (degenerate(a) || degenerate(b)) {
        throw DomainError("iou_bev: degenerate box");
    }
    const double area_a = a.length * a.width;
    const double area_b = b.length * b.width;
    const double inter =
        convex_polygon_area(clip_convex(box_polygon(a), box_polygon(b)));
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const OrientedBox3D& a, const OrientedBox3D& b) {
    if (degenerate(a) || degenerate(b)) {
        throw DomainError("iou_3d: degenerate box");
    }
    const double inter_bev =
        convex_polygon_area(clip_convex(box_polygon(a), box_polygon(b)));
    const double z_lo = std::max(a.center.z - 0.5 * a.height,
                                 b.center.z - 0.5 * b.height);
    const double z_hi = std::min(a.center.z + 0.5 * a.height,
                                 b.center.z + 0.5 * b.height);
    const double inter_vol = inter_bev * std::max(0.0, z_hi - z_lo);
    const double vol_a = a.length * a.width * a.height;
    const double vol_b = b.length * b.width * b.height;
    const double uni = vol_a + vol_b - inter_vol;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter_vol / uni, 0.0, 1.0);
}

MatchResult match(const std::vector<OrientedBox3D>& preds,
                  const std::vector<OrientedBox3D>& gts, double iou_threshold) {
    MatchResult result;
    std::vector<int> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
        return preds[lhs].score > preds[rhs].score;
    });
    std::vector<bool> gt_claimed(gts.size(), false);
    for (int pi : order) {
        int best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_claimed[gi] || gts[gi].class_id != preds[pi].class_id) {
                continue;
            }
            const double iou = iou_bev(preds[pi], gts[gi]);
            if (iou >= iou_threshold && iou > best_iou) {
                best_iou = iou;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0) {
            gt_claimed[best_gt] = true;
            result.pairs.push_back({pi, best_gt, best_iou});
        } else {
            result.unmatched_preds.push_back(pi);
        }
    }
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        if (!gt_claimed[gi]) result.unmatched_gts.push_back(static_cast<int>(gi));
    }
    return result;
}

DetectionMetrics metrics(const std::vector<OrientedBox3D>& preds,
                         const std::vector<OrientedBox3D>& gts,
                         double iou_threshold) {
    const MatchResult m = match(preds, gts, iou_threshold);
    DetectionMetrics out;
    const std::size_t tp = m.pairs.size();
    if (!preds.empty()) {
        out.precision = static_cast<double>(tp) / preds.size();
    }
    if (!gts.empty()) {
        out.recall = static_cast<double>(tp) / gts.size();
    }
    if (tp > 0) {
        double iou_sum = 0.0, pos_sq = 0.0, rot_sq = 0.0;
        for (const auto& pair : m.pairs) {
            const OrientedBox3D& p = preds[pair.pred_index];
            const OrientedBox3D& g = gts[pair.gt_index];
            iou_sum += iou_3d(p, g);
            const Vec3 d = p.center - g.center;
            pos_sq += d.dot(d);
            const double dyaw = std::abs(normalize_yaw(p.yaw - g.yaw));
            const double wrapped = std::min(dyaw, 2.0 * M_PI - dyaw);
            rot_sq += wrapped * wrapped;
        }
        out.mean_iou = iou_sum / tp;
        out.pos_rmse = std::sqrt(pos_sq / tp);
        out.rot_rmse = std::sqrt(rot_sq / tp);
    }
    return out;
}

namespace {

// Greedy score-ordered TP/FP labels for one class, matching the `match`
// protocol; input to the PR curve.
void score_labels(const std::vector<OrientedBox3D>& preds,
                  const std::vector<OrientedBox3D>& gts, double iou_threshold,
                  int class_id, std::vector<std::pair<double, bool>>* labels,
                  int* gt_count) {
    std::vector<int> order;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].class_id == class_id) order.push_back(static_cast<int>(i));
    }
    std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
        return preds[lhs].score > preds[rhs].score;
    });
    std::vector<bool> claimed(gts.size(), false);
    for (int pi : order) {
        int best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (claimed[gi] || gts[gi].class_id != class_id) continue;
            const double iou = iou_bev(preds[pi], gts[gi]);
            if (iou >= iou_threshold && iou > best_iou) {
                best_iou = iou;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0) claimed[best_gt] = true;
        labels->push_back({preds[pi].score, best_gt >= 0});
    }
    for (const auto& g : gts) {
        if (g.class_id == class_id) ++(*gt_count);
    }
}

double ap_from_labels(std::vector<std::pair<double, bool>> labels,
                      int gt_count) {
    if (gt_count == 0) return 0.0;
    std::stable_sort(labels.begin(), labels.end(),
                     [](const auto& lhs, const auto& rhs) {
                         return lhs.first > rhs.first;
                     });
    std::vector<double> precisions, recalls;
    int tp = 0, fp = 0;
    for (const auto& [score, is_tp] : labels) {
        (void)score;
        if (is_tp) {
            ++tp;
        } else {
            ++fp;
        }
        precisions.push_back(static_cast<double>(tp) / (tp + fp));
        recalls.push_back(static_cast<double>(tp) / gt_count);
    }
    // 40 evenly spaced recall positions; at each, take the best precision
    // achieved at that recall or beyond.
    double ap = 0.0;
    for (int i = 1; i <= 40; ++i) {
        const double r = static_cast<double>(i) / 40.0;
        double best = 0.0;
        for (std::size_t j = 0; j < recalls.size(); ++j) {
            if (recalls[j] >= r - 1e-12) best = std::max(best, precisions[j]);
        }
        ap += best;
    }
    return ap / 40.0;
}

}  // namespace

double average_precision(const std::vector<OrientedBox3D>& preds,
                         const std::vector<OrientedBox3D>& gts,
                         double iou_threshold, int class_id) {
    std::vector<std::pair<double, bool>> labels;
    int gt_count = 0;
    score_labels(preds, gts, iou_threshold, class_id, &labels, &gt_count);
    return ap_from_labels(std::move(labels), gt_count);
}

void ApPool::add_scene(const std::vector<OrientedBox3D>& preds,
                       const std::vector<OrientedBox3D>& gts,
                       double iou_threshold, int class_id) {
    score_labels(preds, gts, iou_threshold, class_id, &labels_, &gt_count_);
}

double ApPool::ap() const {
    return ap_from_labels(labels_, gt_count_);
}

double mean_average_precision(const std::vector<OrientedBox3D>& preds,
                              const std::vector<OrientedBox3D>& gts,
                              double iou_threshold) {
    std::vector<int> classes;
    for (const auto& g : gts) {
        if (std::find(classes.begin(), classes.end(), g.class_id) ==
            classes.end()) {
            classes.push_back(g.class_id);
        }
    }
    if (classes.empty()) return 0.0;
    double acc = 0.0;
    for (int cls : classes) {
        acc += average_precision(preds, gts, iou_threshold, cls);
    }
    return acc / classes.size();
}

}  // namespace eval
}  // namespace hecofuse
