#pragma once

#include <optional>
#include <vector>

#include "bundlepd/core.hpp"

namespace bundlepd {

/// One affine piece <slope, x> + offset.
struct Cut {
  Vector slope;
  double offset = 0.0;
  int source_index = 0;  // observation that produced it

  double eval(const Vector& x) const { return slope.dot(x) + offset; }
};

enum class ModelPolicy { SingleCut, Polyak, CuttingPlane, PolyakCuttingPlane, TwoCut };
enum class ModelOrientation { PrimalMax, DualMin };

/// Cut slopes/offsets in the max-of-affine convention used by the subproblem
/// (already negated for dual models), with the flat bound reported separately.
struct CutExport {
  Matrix A_tilde;  // M x n, rows are cut slopes
  Vector b_tilde;  // M offsets
  bool has_flat = false;
  double flat = 0.0;

  int total_rows() const { return static_cast<int>(A_tilde.rows()) + (has_flat ? 1 : 0); }
};

/// Piecewise-affine bundle model. Primal orientation is a max of minorants of
/// f; dual orientation is a min of majorants of q (or q_rho), stored
/// internally as a max-of-affine model of -q and re-negated at the boundary.
class BundleModel {
 public:
  BundleModel() = default;
  BundleModel(ModelPolicy policy, ModelOrientation orientation, int window = 1,
              std::optional<double> flat_bound = std::nullopt);

  ModelPolicy policy() const { return policy_; }
  ModelOrientation orientation() const { return orientation_; }
  int window() const { return window_; }
  int cut_count() const { return static_cast<int>(cuts_.size()); }
  bool empty() const { return cuts_.empty() && !flat_bound_; }
  const std::vector<Cut>& cuts() const { return cuts_; }

  /// Incorporate the linearization of the modeled function at `anchor`
  /// (value/gradient of f for primal, of q / q_rho for dual). For TwoCut,
  /// `agg_weights` — simplex weights over the previous exported rows, usually
  /// the multiplier from the last subproblem solve — selects the aggregation
  /// subgradient; without them the deterministic active-cut rule is used.
  void observe(const Vector& anchor, double value, const Vector& gradient,
               std::optional<Vector> agg_weights = std::nullopt);

  /// Model value at x (max over cuts and flat bound for primal; min for dual).
  double evaluate(const Vector& x) const;

  /// A subgradient of the model at x: the slope of the first active cut, or
  /// the weighted combination of slopes when simplex weights over the exported
  /// rows are given (the flat row contributes slope zero).
  Vector subgradient(const Vector& x, std::optional<Vector> weights = std::nullopt) const;

  CutExport export_cuts() const;

 private:
  void insert_cut(Cut cut);
  double internal_eval(const Vector& x) const;
  Vector internal_subgradient(const Vector& x, const std::optional<Vector>& weights) const;

  ModelPolicy policy_ = ModelPolicy::SingleCut;
  ModelOrientation orientation_ = ModelOrientation::PrimalMax;
  int window_ = 1;
  std::optional<double> flat_bound_;  // internal convention: max with this value
  std::vector<Cut> cuts_;
  int next_index_ = 0;
};

}  // namespace bundlepd
