#pragma once

// AdamW with decoupled weight decay and bias correction.

#include <cmath>
#include <vector>

#include "spanforge/model.hpp"

namespace spanforge {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(const ModelParams& params, AdamWConfig cfg = {}) : cfg_(cfg) {
    for (const Mat& m : params.tensors) {
      m_.emplace_back(m.rows, m.cols);
      v_.emplace_back(m.rows, m.cols);
    }
  }

  // One update over all parameter tensors; decay is applied to weight
  // matrices but not to biases or normalization parameters.
  void step(ModelParams& params, const Grads& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t i = 0; i < params.tensors.size(); ++i) {
      bool decay = decays(params.names[i]);
      Mat& w = params.tensors[i];
      const Mat& g = grads.tensors[i];
      Mat& mm = m_[i];
      Mat& vv = v_[i];
      for (size_t k = 0; k < w.a.size(); ++k) {
        double gk = g.a[k];
        mm.a[k] = cfg_.beta1 * mm.a[k] + (1.0 - cfg_.beta1) * gk;
        vv.a[k] = cfg_.beta2 * vv.a[k] + (1.0 - cfg_.beta2) * gk * gk;
        double mhat = mm.a[k] / bc1;
        double vhat = vv.a[k] / bc2;
        w.a[k] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                             (decay ? cfg_.weight_decay * w.a[k] : 0.0));
      }
    }
  }

  static bool decays(const std::string& name) {
    std::string leaf = name.substr(name.rfind('.') + 1);
    if (leaf.empty()) return false;
    if (leaf[0] == 'b') return false;                   // biases
    if (leaf == "g") return false;                      // layer-norm scales
    if (name.rfind("ln", 0) == 0 ||
        name.find(".ln") != std::string::npos)
      return false;
    return true;
  }

  int64_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Mat> m_, v_;
  int64_t t_ = 0;
};

}  // namespace spanforge
