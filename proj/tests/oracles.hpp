#pragma once

// Independent reference implementations used to freeze expected values.
// Everything here is deliberately written in the most literal way possible
// and stays off the library's code paths.

#include <algorithm>
#include <cmath>
#include <vector>

#include "owl/common.hpp"
#include "owl/tensor.hpp"

namespace oracles {

// Entry-by-entry triple loop, j before k, local accumulator.
inline owl::Tensor2 naive_matmul(const owl::Tensor2& a, const owl::Tensor2& b) {
  owl::Tensor2 y(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      y.at(i, j) = s;
    }
  return y;
}

// Softmax in extended precision, no max subtraction.
inline std::vector<double> longdouble_softmax(const std::vector<double>& row) {
  long double z = 0.0L;
  for (double v : row) z += expl(static_cast<long double>(v));
  std::vector<double> out;
  for (double v : row)
    out.push_back(static_cast<double>(expl(static_cast<long double>(v)) / z));
  return out;
}

struct Seg {
  double t_s, t_e, score;
  int video = 0;
};

inline double seg_tiou(const Seg& a, const Seg& b) {
  double inter = std::min(a.t_e, b.t_e) - std::max(a.t_s, b.t_s);
  if (inter <= 0.0) return 0.0;
  return inter / (std::max(a.t_e, b.t_e) - std::min(a.t_s, b.t_s));
}

// Hard NMS at overlap threshold 0: anything overlapping a kept segment is
// removed outright.
inline std::vector<Seg> hard_nms(std::vector<Seg> dets, int top_n) {
  std::sort(dets.begin(), dets.end(), [](const Seg& a, const Seg& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    return a.t_e < b.t_e;
  });
  std::vector<Seg> kept;
  for (const Seg& d : dets) {
    if (static_cast<int>(kept.size()) >= top_n) break;
    bool overlapping = false;
    for (const Seg& k : kept)
      if (seg_tiou(d, k) > 0.0) overlapping = true;
    if (!overlapping) kept.push_back(d);
  }
  return kept;
}

// Average precision computed point-by-point: sort, greedily match, list every
// (recall, precision) point, then integrate the envelope by scanning all
// points for each recall value.
inline double exhaustive_ap(std::vector<Seg> dets, std::vector<Seg> gts,
                            double theta) {
  std::sort(dets.begin(), dets.end(), [](const Seg& a, const Seg& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    if (a.t_e != b.t_e) return a.t_e < b.t_e;
    return a.video < b.video;
  });
  std::vector<bool> used(gts.size(), false);
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  int tp = 0;
  for (size_t k = 0; k < dets.size(); ++k) {
    int best = -1;
    double best_ov = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].video != dets[k].video) continue;
      double ov = seg_tiou(dets[k], gts[g]);
      if (ov <= 0.0) continue;
      if (best < 0 || ov > best_ov || (ov == best_ov && gts[g].t_s < gts[best].t_s)) {
        best = static_cast<int>(g);
        best_ov = ov;
      }
    }
    if (best >= 0 && best_ov >= theta) {
      used[best] = true;
      ++tp;
    }
    points.push_back({static_cast<double>(tp) / static_cast<double>(gts.size()),
                      static_cast<double>(tp) / static_cast<double>(k + 1)});
  }
  double ap = 0.0, prev_r = 0.0;
  for (size_t k = 0; k < points.size(); ++k) {
    double r = points[k].first;
    double envelope = 0.0;
    for (size_t j = 0; j < points.size(); ++j)
      if (points[j].first >= r) envelope = std::max(envelope, points[j].second);
    ap += (r - prev_r) * envelope;
    prev_r = r;
  }
  return ap;
}

inline owl::Tensor2 random_tensor(owl::Rng& rng, int rows, int cols, double scale = 1.0) {
  owl::Tensor2 t(rows, cols);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

}  // namespace oracles
