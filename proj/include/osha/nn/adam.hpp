#pragma once

#include <cmath>
#include <map>
#include <string>

#include "osha/nn/model.hpp"

namespace osha::nn {

// Adam with bias correction; one slot pair per named parameter tensor.
class Adam {
 public:
  explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long long step_count() const { return t_; }

  void step(ParamStore& ps, const std::map<std::string, Mat>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, g] : grads) {
      Mat& w = ps[name];
      if (!w.same_shape(g)) throw std::invalid_argument("adam: grad shape mismatch " + name);
      Mat& m = m_[name];
      Mat& v = v_[name];
      if (m.size() != w.size()) {
        m = Mat(w.r, w.c);
        v = Mat(w.r, w.c);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        m.a[i] = beta1_ * m.a[i] + (1.0 - beta1_) * g.a[i];
        v.a[i] = beta2_ * v.a[i] + (1.0 - beta2_) * g.a[i] * g.a[i];
        const double mhat = m.a[i] / bc1;
        const double vhat = v.a[i] / bc2;
        w.a[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

} // namespace osha::nn
