#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "iirc/mathutil.hpp"

namespace iirc {

struct LossWeights {
  double lambda = 0.5;      // general-teacher distillation weight
  double mu = 0.5;          // superclass-teacher distillation weight
  double temperature = 2.0; // softmax distillation only

  void validate() const {
    if (lambda < 0.0 || mu < 0.0)
      throw std::invalid_argument("distillation weights must be non-negative");
    if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  }
};

/// Per-sample loss value and its gradient with respect to student logits.
struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Multi-class cross-entropy over a softmax head.
inline LossResult softmax_ce(const std::vector<double>& logits, int target) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  if (target < 0 || target >= static_cast<int>(logits.size()))
    throw std::invalid_argument("target class out of range");
  LossResult r;
  r.loss = log_sum_exp(logits) - logits[target];
  r.grad = softmax(logits);
  r.grad[target] -= 1.0;
  return r;
}

/// Cross-entropy between tempered softmaxes: targets are the teacher's
/// tempered probabilities. Gradient is (student_prob − teacher_prob)/T.
inline LossResult softmax_kd(const std::vector<double>& student,
                             const std::vector<double>& teacher, double temperature) {
  if (student.size() != teacher.size())
    throw std::invalid_argument("student/teacher logit lengths differ");
  if (student.empty()) throw std::invalid_argument("empty logits");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");

  std::vector<double> scaled(student.size());
  for (std::size_t i = 0; i < student.size(); ++i) scaled[i] = student[i] / temperature;
  const double lse = log_sum_exp(scaled);
  const auto pi = softmax(student, temperature);
  const auto pi_hat = softmax(teacher, temperature);

  LossResult r;
  r.grad.resize(student.size());
  for (std::size_t i = 0; i < student.size(); ++i) {
    r.loss -= pi_hat[i] * (scaled[i] - lse);
    r.grad[i] = (pi[i] - pi_hat[i]) / temperature;
  }
  return r;
}

namespace detail {

/// Stable binary cross-entropy on one logit against a (possibly soft) target
/// in [0,1]: loss = max(o,0) − o·t + log(1+e^{−|o|}), d/do = σ(o) − t.
/// Every sigmoid-family loss funnels through this, which is what makes
/// algebraically-equal method configurations produce bit-equal numbers.
inline double binary_ce_logit(double logit, double target, double& grad_out) {
  grad_out = stable_sigmoid(logit) - target;
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace detail

/// Multi-label binary cross-entropy over per-class sigmoid heads; targets
/// are hard 0/1. Gradient is with respect to the logits.
inline LossResult bce(const std::vector<double>& logits, const std::vector<double>& targets) {
  if (logits.size() != targets.size())
    throw std::invalid_argument("logit/target lengths differ");
  LossResult r;
  r.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (targets[i] != 0.0 && targets[i] != 1.0)
      throw std::invalid_argument("targets must be 0 or 1");
    r.loss += detail::binary_ce_logit(logits[i], targets[i], r.grad[i]);
  }
  return r;
}

/// Same core with soft targets: distills a teacher's sigmoid scores into the
/// matching slice of student logits.
inline LossResult sigmoid_kd(const std::vector<double>& student_logits,
                             const std::vector<double>& teacher_scores) {
  if (student_logits.size() != teacher_scores.size())
    throw std::invalid_argument("student/teacher slice lengths differ");
  LossResult r;
  r.grad.resize(student_logits.size());
  for (std::size_t i = 0; i < student_logits.size(); ++i) {
    if (teacher_scores[i] < 0.0 || teacher_scores[i] > 1.0)
      throw std::invalid_argument("teacher scores must lie in [0,1]");
    r.loss += detail::binary_ce_logit(student_logits[i], teacher_scores[i], r.grad[i]);
  }
  return r;
}

/// The combined objective and its component values. grad covers all student
/// classes; entries in [n, n+m) carry only the plain-BCE part.
struct MtkdResult {
  double total = 0.0;
  double bce = 0.0;
  double general_kd = 0.0;  // classes [n0, n) vs. the previous-step model
  double super_kd = 0.0;    // classes [0, n0) vs. the initial-step model
  std::vector<double> grad;
};

/// total = bce + λ·general_kd + μ·super_kd. The two distillation slices are
/// disjoint: the superclass teacher owns the initial classes [0, n0), the
/// general teacher the later old classes [n0, n); new classes [n, n+m) see
/// only the hard targets. A teacher pointer may be null whenever its term
/// vanishes (zero weight or empty slice).
inline MtkdResult mtkd_loss(const std::vector<double>& student_logits,
                            const std::vector<double>& targets,
                            const std::vector<double>* general_scores,
                            const std::vector<double>* super_scores, int n0, int n,
                            const LossWeights& w) {
  w.validate();
  const int total_classes = static_cast<int>(student_logits.size());
  if (n0 < 1 || n0 > n || n > total_classes)
    throw std::invalid_argument("class counts must satisfy 0 < n0 <= n <= outputs");
  if (general_scores && static_cast<int>(general_scores->size()) != n)
    throw std::invalid_argument("general teacher must score exactly the first " +
                                std::to_string(n) + " classes");
  if (super_scores && static_cast<int>(super_scores->size()) != n0)
    throw std::invalid_argument("superclass teacher must score exactly the first " +
                                std::to_string(n0) + " classes");
  const bool need_general = w.lambda > 0.0 && n > n0;
  const bool need_super = w.mu > 0.0;
  if (need_general && !general_scores)
    throw std::invalid_argument("general teacher scores required");
  if (need_super && !super_scores)
    throw std::invalid_argument("superclass teacher scores required");

  MtkdResult r;
  auto base = bce(student_logits, targets);
  r.bce = base.loss;
  r.grad = std::move(base.grad);

  if (need_general) {
    double g = 0.0;
    for (int i = n0; i < n; ++i) {
      double gi;
      g += detail::binary_ce_logit(student_logits[i], (*general_scores)[i], gi);
      r.grad[i] += w.lambda * gi;
    }
    r.general_kd = g;
  }
  if (need_super) {
    double s = 0.0;
    for (int i = 0; i < n0; ++i) {
      double gi;
      s += detail::binary_ce_logit(student_logits[i], (*super_scores)[i], gi);
      r.grad[i] += w.mu * gi;
    }
    r.super_kd = s;
  }
  r.total = (r.bce + w.lambda * r.general_kd) + w.mu * r.super_kd;
  return r;
}

}  // namespace iirc
