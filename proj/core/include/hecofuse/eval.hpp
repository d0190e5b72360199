#pragma once

#include <optional>
#include <vector>

#include "hecofuse/geometry.hpp"

namespace hecofuse {
namespace eval {

struct MatchPair {
    int pred_index;
    int gt_index;
    double iou;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<int> unmatched_preds;
    std::vector<int> unmatched_gts;
};

struct DetectionMetrics {
    // Undefined entries (zero denominators) are nullopt, which distinguishes
    // "no predictions" from "all wrong".
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> mean_iou;
    std::optional<double> pos_rmse;
    std::optional<double> rot_rmse;
};

// Rotated-footprint IoU via convex polygon clipping.
double iou_bev(const OrientedBox3D& a, const OrientedBox3D& b);

// BEV intersection area times vertical overlap, over the volume union.
double iou_3d(const OrientedBox3D& a, const OrientedBox3D& b);

// Greedy by descending score; each prediction claims the highest-IoU
// unclaimed same-class ground truth with IoU >= threshold.
MatchResult match(const std::vector<OrientedBox3D>& preds,
                  const std::vector<OrientedBox3D>& gts, double iou_threshold);

DetectionMetrics metrics(const std::vector<OrientedBox3D>& preds,
                         const std::vector<OrientedBox3D>& gts,
                         double iou_threshold);

// Area under the interpolated precision-recall curve, 40-point rule.
double average_precision(const std::vector<OrientedBox3D>& preds,
                         const std::vector<OrientedBox3D>& gts,
                         double iou_threshold, int class_id);

// Mean AP over the classes present in the ground truth.
double mean_average_precision(const std::vector<OrientedBox3D>& preds,
                              const std::vector<OrientedBox3D>& gts,
                              double iou_threshold);

// Convex polygon intersection area helper (Sutherland-Hodgman clip); exposed
// for the geometry property tests.
double convex_polygon_area(const std::vector<Vec2>& poly);
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject,
                              const std::vector<Vec2>& clip);

// Pools score-ordered match labels across scenes so AP can be computed over
// a whole evaluation set without cross-scene matching.
class ApPool {
public:
    void add_scene(const std::vector<OrientedBox3D>& preds,
                   const std::vector<OrientedBox3D>& gts, double iou_threshold,
                   int class_id);
    double ap() const;
    bool has_ground_truth() const { return gt_count_ > 0; }

private:
    std::vector<std::pair<double, bool>> labels_;
    int gt_count_ = 0;
};

}  // namespace eval
}  // namespace hecofuse
