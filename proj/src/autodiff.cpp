#include "cyberdef/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cyberdef/errors.hpp"

namespace cyberdef::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractViolation(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Graph::push(Matrix value, bool needs_grad, std::function<void(Graph&, const Node&)> backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_ && needs_grad;
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Graph::grad_ref(Var v) {
  auto& node = nodes_[static_cast<std::size_t>(v.id)];
  if (node.grad.size() == 0) {
    const auto& val = value(v);
    node.grad.setZero(val.rows(), val.cols());
  }
  return node.grad;
}

Var Graph::constant(Matrix value) { return push(std::move(value), false); }

Var Graph::leaf(Matrix value) { return push(std::move(value), true); }

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  Var v = push(Matrix(), true);
  nodes_.back().param = &p;
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Graph::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows()) throw ContractViolation("matmul: inner dimensions differ");
  Matrix out(A.rows(), B.cols());
  out.noalias() = A * B;
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, const Node& self) {
    if (g.needs(a)) g.grad_ref(a).noalias() += self.grad * g.value(b).transpose();
    if (g.needs(b)) g.grad_ref(b).noalias() += g.value(a).transpose() * self.grad;
  });
}

Var Graph::linear(Var x, Var w, Var b) {
  const auto& X = value(x);
  const auto& W = value(w);
  const auto& B = value(b);
  if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols())
    throw ContractViolation("linear: incompatible shapes");
  Matrix out(X.rows(), W.cols());
  out.noalias() = X * W;
  out.rowwise() += B.row(0);
  return push(std::move(out), needs(x) || needs(w) || needs(b), [x, w, b](Graph& g, const Node& self) {
    if (g.needs(x)) g.grad_ref(x).noalias() += self.grad * g.value(w).transpose();
    if (g.needs(w)) g.grad_ref(w).noalias() += g.value(x).transpose() * self.grad;
    if (g.needs(b)) g.grad_ref(b) += self.grad.colwise().sum();
  });
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), needs(a) || needs(b), [a, b](Graph& g, const Node& self) {
    if (g.needs(a)) g.grad_ref(a) += self.grad;
    if (g.needs(b)) g.grad_ref(b) += self.grad;
  });
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), needs(a) || needs(b), [a, b](Graph& g, const Node& self) {
    if (g.needs(a)) g.grad_ref(a) += self.grad;
    if (g.needs(b)) g.grad_ref(b) -= self.grad;
  });
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b), [a, b](Graph& g, const Node& self) {
    if (g.needs(a)) g.grad_ref(a) += self.grad.cwiseProduct(g.value(b));
    if (g.needs(b)) g.grad_ref(b) += self.grad.cwiseProduct(g.value(a));
  });
}

Var Graph::scale(Var a, double c) {
  return push(value(a) * c, needs(a), [a, c](Graph& g, const Node& self) { g.grad_ref(a) += self.grad * c; });
}

Var Graph::gelu(Var a) {
  const auto& X = value(a);
  Matrix out = X.unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return push(std::move(out), needs(a), [a](Graph& g, const Node& self) {
    const auto& X = g.value(a);
    auto& dX = g.grad_ref(a);
    for (Eigen::Index i = 0; i < X.size(); ++i) {
      const double x = X.data()[i];
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      dX.data()[i] += self.grad.data()[i] * d;
    }
  });
}

Var Graph::exp(Var a) {
  return push(value(a).array().exp().matrix(), needs(a), [a](Graph& g, const Node& self) {
    g.grad_ref(a) += self.grad.cwiseProduct(self.value);
  });
}

Var Graph::log(Var a) {
  return push(value(a).array().log().matrix(), needs(a), [a](Graph& g, const Node& self) {
    g.grad_ref(a) += self.grad.cwiseQuotient(g.value(a));
  });
}

Var Graph::square(Var a) {
  return push(value(a).cwiseAbs2(), needs(a), [a](Graph& g, const Node& self) {
    g.grad_ref(a) += 2.0 * self.grad.cwiseProduct(g.value(a));
  });
}

Var Graph::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  return push(value(a).cwiseMin(value(b)), needs(a) || needs(b), [a, b](Graph& g, const Node& self) {
    const auto& A = g.value(a);
    const auto& B = g.value(b);
    for (Eigen::Index i = 0; i < A.size(); ++i) {
      const bool take_a = A.data()[i] <= B.data()[i];
      if (take_a && g.needs(a)) g.grad_ref(a).data()[i] += self.grad.data()[i];
      if (!take_a && g.needs(b)) g.grad_ref(b).data()[i] += self.grad.data()[i];
    }
  });
}

Var Graph::clamp(Var a, double lo, double hi) {
  return push(value(a).cwiseMax(lo).cwiseMin(hi), needs(a), [a, lo, hi](Graph& g, const Node& self) {
    const auto& A = g.value(a);
    auto& dA = g.grad_ref(a);
    for (Eigen::Index i = 0; i < A.size(); ++i)
      if (A.data()[i] >= lo && A.data()[i] <= hi) dA.data()[i] += self.grad.data()[i];
  });
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
  const auto& X = value(x);
  const auto& G = value(gain);
  const auto& B = value(bias);
  if (G.rows() != 1 || G.cols() != X.cols() || B.rows() != 1 || B.cols() != X.cols())
    throw ContractViolation("layer_norm: gain/bias must be 1 x cols");
  const Eigen::Index n = X.cols();
  Matrix xhat(X.rows(), n);
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * G.row(0).array();
  out.rowwise() += B.row(0);
  const bool any = needs(x) || needs(gain) || needs(bias);
  if (!record_ || !any) return push(std::move(out), false);
  return push(std::move(out), true,
              [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, const Node& self) {
                const auto& dY = self.grad;
                if (g.needs(gain)) g.grad_ref(gain) += dY.cwiseProduct(xhat).colwise().sum();
                if (g.needs(bias)) g.grad_ref(bias) += dY.colwise().sum();
                if (!g.needs(x)) return;
                const auto& G = g.value(gain);
                auto& dX = g.grad_ref(x);
                for (Eigen::Index r = 0; r < dY.rows(); ++r) {
                  Eigen::RowVectorXd dxhat = dY.row(r).cwiseProduct(G.row(0));
                  const double m1 = dxhat.mean();
                  const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                  dX.row(r).array() += inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
                }
              });
}

Var Graph::attention(Var q, Var k, Var v, Var gate, const AttentionLayout& L) {
  const auto& Q = value(q);
  const auto& K = value(k);
  const auto& V = value(v);
  const auto& Gt = value(gate);
  const Eigen::Index d = Q.cols();
  if (K.cols() != d || V.cols() != d || d % L.heads != 0)
    throw ContractViolation("attention: model width must match and divide by heads");
  if (Q.rows() != static_cast<Eigen::Index>(L.samples) * L.queries ||
      K.rows() != static_cast<Eigen::Index>(L.samples) * L.keys || V.rows() != K.rows() || Gt.rows() != Q.rows() ||
      Gt.cols() != L.keys)
    throw ContractViolation("attention: tensor shapes disagree with layout");
  const Eigen::Index dh = d / L.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix out = Matrix::Zero(Q.rows(), d);
  // Attention weights per (query row, head, key).
  Matrix weights = Matrix::Zero(Q.rows(), static_cast<Eigen::Index>(L.heads) * L.keys);
  std::vector<double> scores(static_cast<std::size_t>(L.keys));
  for (int s = 0; s < L.samples; ++s) {
    for (int i = 0; i < L.queries; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(s) * L.queries + i;
      bool any = false;
      for (int j = 0; j < L.keys; ++j) any = any || Gt(r, j) != 0.0;
      if (!any) throw ContractViolation("attention: query row has no permitted key");
      for (int h = 0; h < L.heads; ++h) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < L.keys; ++j) {
          if (Gt(r, j) == 0.0) continue;
          const Eigen::Index kr = static_cast<Eigen::Index>(s) * L.keys + j;
          scores[static_cast<std::size_t>(j)] = scale * Q.row(r).segment(c0, dh).dot(K.row(kr).segment(c0, dh));
          mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
        }
        double z = 0.0;
        for (int j = 0; j < L.keys; ++j) {
          if (Gt(r, j) == 0.0) continue;
          const double u = Gt(r, j) * std::exp(scores[static_cast<std::size_t>(j)] - mx);
          weights(r, static_cast<Eigen::Index>(h) * L.keys + j) = u;
          z += u;
        }
        for (int j = 0; j < L.keys; ++j) {
          if (Gt(r, j) == 0.0) continue;
          double& w = weights(r, static_cast<Eigen::Index>(h) * L.keys + j);
          w /= z;
          const Eigen::Index kr = static_cast<Eigen::Index>(s) * L.keys + j;
          out.row(r).segment(c0, dh) += w * V.row(kr).segment(c0, dh);
        }
      }
    }
  }

  const bool any_grad = needs(q) || needs(k) || needs(v) || needs(gate);
  if (!record_ || !any_grad) return push(std::move(out), false);
  return push(std::move(out), true, [q, k, v, gate, L, dh, scale, weights = std::move(weights)](Graph& g, const Node& self) {
    const auto& Q = g.value(q);
    const auto& K = g.value(k);
    const auto& V = g.value(v);
    const auto& Gt = g.value(gate);
    const auto& dO = self.grad;
    Matrix* dQ = g.needs(q) ? &g.grad_ref(q) : nullptr;
    Matrix* dK = g.needs(k) ? &g.grad_ref(k) : nullptr;
    Matrix* dV = g.needs(v) ? &g.grad_ref(v) : nullptr;
    Matrix* dG = g.needs(gate) ? &g.grad_ref(gate) : nullptr;
    std::vector<double> dw(static_cast<std::size_t>(L.keys));
    std::vector<double> sc(static_cast<std::size_t>(L.keys));
    for (int s = 0; s < L.samples; ++s) {
      for (int i = 0; i < L.queries; ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(s) * L.queries + i;
        for (int h = 0; h < L.heads; ++h) {
          const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
          const auto dOr = dO.row(r).segment(c0, dh);
          double rho = 0.0;
          for (int j = 0; j < L.keys; ++j) {
            const Eigen::Index kr = static_cast<Eigen::Index>(s) * L.keys + j;
            dw[static_cast<std::size_t>(j)] = dOr.dot(V.row(kr).segment(c0, dh));
            rho += weights(r, static_cast<Eigen::Index>(h) * L.keys + j) * dw[static_cast<std::size_t>(j)];
          }
          double mx = -std::numeric_limits<double>::infinity();
          double z = 0.0;
          if (dG) {
            for (int j = 0; j < L.keys; ++j) {
              const Eigen::Index kr = static_cast<Eigen::Index>(s) * L.keys + j;
              sc[static_cast<std::size_t>(j)] = scale * Q.row(r).segment(c0, dh).dot(K.row(kr).segment(c0, dh));
              if (Gt(r, j) != 0.0) mx = std::max(mx, sc[static_cast<std::size_t>(j)]);
            }
            for (int j = 0; j < L.keys; ++j)
              if (Gt(r, j) != 0.0) z += Gt(r, j) * std::exp(sc[static_cast<std::size_t>(j)] - mx);
          }
          for (int j = 0; j < L.keys; ++j) {
            const Eigen::Index kr = static_cast<Eigen::Index>(s) * L.keys + j;
            const double w = weights(r, static_cast<Eigen::Index>(h) * L.keys + j);
            const double excess = dw[static_cast<std::size_t>(j)] - rho;
            if (dG) {
              // d weight-normalized output / d gate(i, j) = (dw_j - rho) e_j / Z.
              const double e = std::exp(std::min(sc[static_cast<std::size_t>(j)] - mx, 700.0));
              (*dG)(r, j) += excess * e / z;
            }
            if (Gt(r, j) == 0.0) continue;
            if (dV) dV->row(kr).segment(c0, dh) += w * dOr;
            const double ds = excess * w * scale;
            if (dQ) dQ->row(r).segment(c0, dh) += ds * K.row(kr).segment(c0, dh);
            if (dK) dK->row(kr).segment(c0, dh) += ds * Q.row(r).segment(c0, dh);
          }
        }
      }
    }
  });
}

Var Graph::log_softmax_masked(Var logits, const Matrix& available) {
  const auto& X = value(logits);
  require_same_shape(X, available, "log_softmax_masked");
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      if (available(r, c) != 0.0) mx = std::max(mx, X(r, c));
    if (!std::isfinite(mx)) throw ContractViolation("log_softmax_masked: row has no available entry");
    double z = 0.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      if (available(r, c) != 0.0) z += std::exp(X(r, c) - mx);
    const double lse = mx + std::log(z);
    for (Eigen::Index c = 0; c < X.cols(); ++c) out(r, c) = available(r, c) != 0.0 ? X(r, c) - lse : kMaskedLogProb;
  }
  return push(std::move(out), needs(logits), [logits, available](Graph& g, const Node& self) {
    auto& dX = g.grad_ref(logits);
    for (Eigen::Index r = 0; r < self.value.rows(); ++r) {
      double total = 0.0;
      for (Eigen::Index c = 0; c < self.value.cols(); ++c)
        if (available(r, c) != 0.0) total += self.grad(r, c);
      for (Eigen::Index c = 0; c < self.value.cols(); ++c)
        if (available(r, c) != 0.0) dX(r, c) += self.grad(r, c) - std::exp(self.value(r, c)) * total;
    }
  });
}

Var Graph::gather_cols(Var x, std::span<const int> index) {
  const auto& X = value(x);
  if (static_cast<Eigen::Index>(index.size()) != X.rows()) throw ContractViolation("gather_cols: one index per row");
  Matrix out(X.rows(), 1);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c < 0 || c >= X.cols()) throw ContractViolation("gather_cols: index out of range");
    out(r, 0) = X(r, c);
  }
  std::vector<int> idx(index.begin(), index.end());
  return push(std::move(out), needs(x), [x, idx = std::move(idx)](Graph& g, const Node& self) {
    auto& dX = g.grad_ref(x);
    for (std::size_t r = 0; r < idx.size(); ++r) dX(static_cast<Eigen::Index>(r), idx[r]) += self.grad(static_cast<Eigen::Index>(r), 0);
  });
}

Var Graph::gather_rows(Var x, std::span<const int> index) {
  const auto& X = value(x);
  Matrix out(static_cast<Eigen::Index>(index.size()), X.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= X.rows()) throw ContractViolation("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = X.row(index[r]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return push(std::move(out), needs(x), [x, idx = std::move(idx)](Graph& g, const Node& self) {
    auto& dX = g.grad_ref(x);
    for (std::size_t r = 0; r < idx.size(); ++r) dX.row(idx[r]) += self.grad.row(static_cast<Eigen::Index>(r));
  });
}

Var Graph::assemble_rows(std::span<const Var> parts, std::span<const std::vector<int>> rows, int total_rows) {
  if (parts.empty() || parts.size() != rows.size()) throw ContractViolation("assemble_rows: parts/rows mismatch");
  const Eigen::Index cols = value(parts[0]).cols();
  Matrix out = Matrix::Zero(total_rows, cols);
  std::vector<int> covered(static_cast<std::size_t>(total_rows), 0);
  bool any = false;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& P = value(parts[p]);
    if (P.cols() != cols || P.rows() != static_cast<Eigen::Index>(rows[p].size()))
      throw ContractViolation("assemble_rows: part shape mismatch");
    for (std::size_t r = 0; r < rows[p].size(); ++r) {
      const int dst = rows[p][r];
      if (dst < 0 || dst >= total_rows || covered[static_cast<std::size_t>(dst)]++)
        throw ContractViolation("assemble_rows: rows must cover the output exactly once");
      out.row(dst) = P.row(static_cast<Eigen::Index>(r));
    }
    any = any || needs(parts[p]);
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end())
    throw ContractViolation("assemble_rows: rows must cover the output exactly once");
  std::vector<Var> ps(parts.begin(), parts.end());
  std::vector<std::vector<int>> rs(rows.begin(), rows.end());
  return push(std::move(out), any, [ps = std::move(ps), rs = std::move(rs)](Graph& g, const Node& self) {
    for (std::size_t p = 0; p < ps.size(); ++p) {
      if (!g.needs(ps[p])) continue;
      auto& dP = g.grad_ref(ps[p]);
      for (std::size_t r = 0; r < rs[p].size(); ++r) dP.row(static_cast<Eigen::Index>(r)) += self.grad.row(rs[p][r]);
    }
  });
}

Var Graph::hstack(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows()) throw ContractViolation("hstack: row counts differ");
  Matrix out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Eigen::Index ca = A.cols();
  const Eigen::Index cb = B.cols();
  return push(std::move(out), needs(a) || needs(b), [a, b, ca, cb](Graph& g, const Node& self) {
    if (g.needs(a)) g.grad_ref(a) += self.grad.leftCols(ca);
    if (g.needs(b)) g.grad_ref(b) += self.grad.rightCols(cb);
  });
}

Var Graph::row_sum(Var a) {
  Matrix out = value(a).rowwise().sum();
  return push(std::move(out), needs(a), [a](Graph& g, const Node& self) {
    auto& dA = g.grad_ref(a);
    dA.colwise() += self.grad.col(0);
  });
}

Var Graph::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), needs(a), [a](Graph& g, const Node& self) {
    g.grad_ref(a).array() += self.grad(0, 0);
  });
}

Var Graph::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  Matrix out(1, 1);
  out(0, 0) = value(a).sum() / n;
  return push(std::move(out), needs(a), [a, n](Graph& g, const Node& self) {
    g.grad_ref(a).array() += self.grad(0, 0) / n;
  });
}

void Graph::backward(Var loss) {
  if (!record_) throw ContractViolation("backward: graph was built without recording");
  const auto& L = value(loss);
  if (L.rows() != 1 || L.cols() != 1) throw ContractViolation("backward: loss must be a scalar");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!needs(loss)) return;
  grad_ref(loss)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, node);
    if (node.param) {
      if (node.param->grad.size() == 0) node.param->zero_grad();
      node.param->grad += node.grad;
    }
  }
}

GradCheckResult grad_check(const std::function<Var(Graph&)>& loss, std::span<Parameter* const> params, double eps,
                           bool extrapolate) {
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  const auto evaluate = [&loss] {
    Graph g(false);
    return g.value(loss(g))(0, 0);
  };
  GradCheckResult result;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      const auto central = [&](double h) {
        x = saved + h;
        const double up = evaluate();
        x = saved - h;
        const double down = evaluate();
        x = saved;
        return (up - down) / (2.0 * h);
      };
      const double d1 = central(eps);
      // (4 D(h) - D(2h)) / 3 cancels the h^2 error term.
      const double numeric = extrapolate ? (4.0 * d1 - central(2.0 * eps)) / 3.0 : d1;
      const double analytic = p->grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_parameter = p->name + "[" + std::to_string(i) + "]";
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace cyberdef::nn
