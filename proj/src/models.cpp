#include "bundlepd/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bundlepd {

namespace {

constexpr double kDedupTol = 1e-14;
constexpr double kSimplexTol = 1e-8;

bool near_duplicate(const Cut& a, const Cut& b) {
  return std::abs(a.offset - b.offset) <= kDedupTol &&
         (a.slope - b.slope).lpNorm<Eigen::Infinity>() <= kDedupTol;
}

}  // namespace

BundleModel::BundleModel(ModelPolicy policy, ModelOrientation orientation, int window,
                         std::optional<double> flat_bound)
    : policy_(policy), orientation_(orientation), window_(window) {
  if (window < 1) throw std::invalid_argument("bundle window must be >= 1");
  const bool needs_flat =
      policy == ModelPolicy::Polyak || policy == ModelPolicy::PolyakCuttingPlane;
  if (needs_flat && !flat_bound)
    throw std::invalid_argument("Polyak-style model requires a flat bound");
  if (flat_bound) {
    // Dual models store the max-of-affine form of the negated function, so a
    // u_q upper bound enters as -u_q.
    flat_bound_ = orientation == ModelOrientation::DualMin ? -*flat_bound : *flat_bound;
  }
}

void BundleModel::insert_cut(Cut cut) {
  for (const Cut& existing : cuts_)
    if (near_duplicate(existing, cut)) return;
  cuts_.push_back(std::move(cut));
}

void BundleModel::observe(const Vector& anchor, double value, const Vector& gradient,
                          std::optional<Vector> agg_weights) {
  if (!cuts_.empty() && cuts_.front().slope.size() != anchor.size())
    throw std::invalid_argument("observe: dimension mismatch");
  if (anchor.size() != gradient.size())
    throw std::invalid_argument("observe: gradient/anchor dimension mismatch");
  if (!std::isfinite(value)) throw std::invalid_argument("observe: non-finite value");

  const double sign = orientation_ == ModelOrientation::DualMin ? -1.0 : 1.0;
  Cut fresh;
  fresh.slope = sign * gradient;
  fresh.offset = sign * value - fresh.slope.dot(anchor);
  fresh.source_index = next_index_++;

  switch (policy_) {
    case ModelPolicy::SingleCut:
    case ModelPolicy::Polyak:
      cuts_.assign(1, std::move(fresh));
      break;
    case ModelPolicy::CuttingPlane:
    case ModelPolicy::PolyakCuttingPlane: {
      insert_cut(std::move(fresh));
      while (static_cast<int>(cuts_.size()) > window_) {
        auto oldest = std::min_element(
            cuts_.begin(), cuts_.end(),
            [](const Cut& a, const Cut& b) { return a.source_index < b.source_index; });
        cuts_.erase(oldest);
      }
      break;
    }
    case ModelPolicy::TwoCut: {
      if (cuts_.empty()) {
        cuts_.push_back(std::move(fresh));
        break;
      }
      Cut aggregate;
      aggregate.slope = internal_subgradient(anchor, agg_weights);
      aggregate.offset = internal_eval(anchor) - aggregate.slope.dot(anchor);
      aggregate.source_index = fresh.source_index;
      cuts_.clear();
      insert_cut(std::move(aggregate));
      insert_cut(std::move(fresh));
      break;
    }
  }
}

double BundleModel::internal_eval(const Vector& x) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const Cut& c : cuts_) best = std::max(best, c.eval(x));
  if (flat_bound_) best = std::max(best, *flat_bound_);
  return best;
}

double BundleModel::evaluate(const Vector& x) const {
  if (empty()) throw std::logic_error("evaluate: empty model");
  const double v = internal_eval(x);
  return orientation_ == ModelOrientation::DualMin ? -v : v;
}

Vector BundleModel::internal_subgradient(const Vector& x,
                                         const std::optional<Vector>& weights) const {
  if (empty()) throw std::logic_error("subgradient: empty model");
  const Eigen::Index n = cuts_.empty() ? x.size() : cuts_.front().slope.size();
  if (weights) {
    const Vector& w = *weights;
    const int n_rows = static_cast<int>(cuts_.size()) + (flat_bound_ ? 1 : 0);
    const bool cuts_only = w.size() == static_cast<Eigen::Index>(cuts_.size());
    if (!cuts_only && w.size() != n_rows)
      throw std::invalid_argument("subgradient: weights of wrong length");
    if (w.minCoeff() < -kSimplexTol || std::abs(w.sum() - 1.0) > kSimplexTol)
      throw std::invalid_argument("subgradient: weights off the simplex");
    Vector g = Vector::Zero(n);
    for (size_t i = 0; i < cuts_.size(); ++i) g += w(static_cast<Eigen::Index>(i)) * cuts_[i].slope;
    // A trailing flat-bound weight contributes slope zero.
    return g;
  }
  // Deterministic rule: among maximizers, the cut with the smallest
  // source_index. Cuts are kept in insertion order, so the first near-tie wins.
  const Cut* best = nullptr;
  double best_val = -std::numeric_limits<double>::infinity();
  for (const Cut& c : cuts_) {
    const double v = c.eval(x);
    if (v > best_val + 1e-12 * (1.0 + std::abs(v))) {
      best = &c;
      best_val = v;
    }
  }
  if (!best || (flat_bound_ && *flat_bound_ > best_val)) {
    // Flat bound strictly active: slope is zero.
    return Vector::Zero(n);
  }
  return best->slope;
}

Vector BundleModel::subgradient(const Vector& x, std::optional<Vector> weights) const {
  const Vector g = internal_subgradient(x, weights);
  return orientation_ == ModelOrientation::DualMin ? Vector(-g) : g;
}

CutExport BundleModel::export_cuts() const {
  if (empty()) throw std::logic_error("export_cuts: empty model");
  CutExport out;
  const Eigen::Index n = cuts_.empty() ? 0 : cuts_.front().slope.size();
  out.A_tilde.resize(static_cast<Eigen::Index>(cuts_.size()), n);
  out.b_tilde.resize(static_cast<Eigen::Index>(cuts_.size()));
  for (size_t i = 0; i < cuts_.size(); ++i) {
    out.A_tilde.row(static_cast<Eigen::Index>(i)) = cuts_[i].slope.transpose();
    out.b_tilde(static_cast<Eigen::Index>(i)) = cuts_[i].offset;
  }
  out.has_flat = flat_bound_.has_value();
  out.flat = flat_bound_.value_or(0.0);
  return out;
}

}  // namespace bundlepd
