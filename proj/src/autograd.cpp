#include "inhibitor/autograd.hpp"

#include <cmath>

#include "inhibitor/attention.hpp"
#include "inhibitor/errors.hpp"

namespace inhibitor::ag {

const Tensor2D& Var::value() const { return graph->value(id); }
const Tensor2D& Var::grad() const { return graph->grad(id); }

Var Graph::leaf(Tensor2D value) { return push(std::move(value), nullptr); }

Var Graph::push(Tensor2D value, Backward backward) {
  nodes_.push_back({std::move(value), Tensor2D{}, std::move(backward)});
  return {this, nodes_.size() - 1};
}

Tensor2D& Graph::grad_mut(std::size_t id) {
  Record& r = nodes_[id];
  if (r.grad.rows() != r.value.rows() || r.grad.cols() != r.value.cols()) {
    r.grad = Tensor2D(r.value.rows(), r.value.cols());
  }
  return r.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this || loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionError("backward: loss must be a 1x1 node of this graph");
  }
  for (auto& r : nodes_) r.grad = Tensor2D(r.value.rows(), r.value.cols());
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

namespace {

void accumulate(Tensor2D& dst, const Tensor2D& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void same_graph(Var a, Var b, const char* op) {
  if (a.graph != b.graph) throw DimensionError(std::string(op) + ": operands from different graphs");
}

}  // namespace

Var matmul(Var a, Var b) {
  same_graph(a, b, "matmul");
  return a.graph->push(inhibitor::matmul(a.value(), b.value()),
                       [a, b](Graph& g, std::size_t self) {
                         const Tensor2D& gy = g.grad(self);
                         accumulate(g.grad_mut(a.id), inhibitor::matmul_nt(gy, g.value(b.id)));
                         accumulate(g.grad_mut(b.id), inhibitor::matmul_tn(g.value(a.id), gy));
                       });
}

Var matmul_nt(Var a, Var b) {
  same_graph(a, b, "matmul_nt");
  return a.graph->push(inhibitor::matmul_nt(a.value(), b.value()),
                       [a, b](Graph& g, std::size_t self) {
                         const Tensor2D& gy = g.grad(self);
                         accumulate(g.grad_mut(a.id), inhibitor::matmul(gy, g.value(b.id)));
                         accumulate(g.grad_mut(b.id), inhibitor::matmul_tn(gy, g.value(a.id)));
                       });
}

Var add(Var a, Var b) {
  same_graph(a, b, "add");
  return a.graph->push(inhibitor::add(a.value(), b.value()), [a, b](Graph& g, std::size_t self) {
    accumulate(g.grad_mut(a.id), g.grad(self));
    accumulate(g.grad_mut(b.id), g.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_graph(a, b, "sub");
  return a.graph->push(inhibitor::sub(a.value(), b.value()), [a, b](Graph& g, std::size_t self) {
    accumulate(g.grad_mut(a.id), g.grad(self));
    accumulate(g.grad_mut(b.id), g.grad(self), -1.0);
  });
}

Var add_row(Var x, Var bias) {
  same_graph(x, bias, "add_row");
  return x.graph->push(inhibitor::add_row(x.value(), bias.value()),
                       [x, bias](Graph& g, std::size_t self) {
                         accumulate(g.grad_mut(x.id), g.grad(self));
                         accumulate(g.grad_mut(bias.id), colsum(g.grad(self)));
                       });
}

Var scale(Var a, double factor) {
  return a.graph->push(inhibitor::scale(a.value(), factor),
                       [a, factor](Graph& g, std::size_t self) {
                         accumulate(g.grad_mut(a.id), g.grad(self), factor);
                       });
}

Var relu(Var a) {
  for (double x : a.value().data()) a.graph->note_kink_distance(std::fabs(x));
  return a.graph->push(inhibitor::relu(a.value()), [a](Graph& g, std::size_t self) {
    auto x = g.value(a.id).data();
    auto gy = g.grad(self).data();
    auto gx = g.grad_mut(a.id).data();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) gx[i] += gy[i];
  });
}

Var abs(Var a) {
  for (double x : a.value().data()) a.graph->note_kink_distance(std::fabs(x));
  return a.graph->push(inhibitor::abs(a.value()), [a](Graph& g, std::size_t self) {
    auto x = g.value(a.id).data();
    auto gy = g.grad(self).data();
    auto gx = g.grad_mut(a.id).data();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += sign(x[i]) * gy[i];
  });
}

Var cdist_manhattan(Var a, Var b) {
  same_graph(a, b, "cdist_manhattan");
  const Tensor2D& av = a.value();
  const Tensor2D& bv = b.value();
  require_shape(av.cols() == bv.cols(), "cdist_manhattan", av, bv);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j)
      for (std::size_t k = 0; k < av.cols(); ++k)
        a.graph->note_kink_distance(std::fabs(av(i, k) - bv(j, k)));
  return a.graph->push(inhibitor::cdist_manhattan(av, bv), [a, b](Graph& g, std::size_t self) {
    const Tensor2D& x = g.value(a.id);
    const Tensor2D& y = g.value(b.id);
    const Tensor2D& gy = g.grad(self);
    Tensor2D& gx = g.grad_mut(a.id);
    Tensor2D& gyb = g.grad_mut(b.id);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < y.rows(); ++j) {
        const double w = gy(i, j);
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double s = sign(x(i, k) - y(j, k)) * w;
          gx(i, k) += s;
          gyb(j, k) -= s;
        }
      }
  });
}

Var manhattan_scores(Var q, Var k, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("manhattan_scores: gamma must be > 0");
  return scale(cdist_manhattan(q, k), 1.0 / gamma);
}

Var shift_scores(Var z, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("shift_scores: alpha must be >= 0");
  if (alpha == 0.0) return z;
  for (double x : z.value().data()) z.graph->note_kink_distance(std::fabs(x - alpha));
  return z.graph->push(inhibitor::shift_scores(z.value(), alpha),
                       [z, alpha](Graph& g, std::size_t self) {
                         auto x = g.value(z.id).data();
                         auto gy = g.grad(self).data();
                         auto gx = g.grad_mut(z.id).data();
                         for (std::size_t i = 0; i < x.size(); ++i)
                           if (x[i] > alpha) gx[i] += gy[i];
                       });
}

Var inhibit_fused(Var v, Var z) {
  same_graph(v, z, "inhibit_fused");
  const Tensor2D& vv = v.value();
  const Tensor2D& zv = z.value();
  require_shape(zv.cols() == vv.rows(), "inhibit_fused", vv, zv);
  for (std::size_t i = 0; i < zv.rows(); ++i)
    for (std::size_t j = 0; j < vv.rows(); ++j)
      for (std::size_t k = 0; k < vv.cols(); ++k)
        v.graph->note_kink_distance(std::fabs(vv(j, k) - zv(i, j)));
  // d/dV relu(V - Z) = [V > Z], d/dZ = -[V > Z].
  return v.graph->push(inhibitor::inhibit_fused(vv, zv), [v, z](Graph& g, std::size_t self) {
    const Tensor2D& vx = g.value(v.id);
    const Tensor2D& zx = g.value(z.id);
    const Tensor2D& gy = g.grad(self);
    Tensor2D& gv = g.grad_mut(v.id);
    Tensor2D& gz = g.grad_mut(z.id);
    for (std::size_t i = 0; i < zx.rows(); ++i)
      for (std::size_t j = 0; j < vx.rows(); ++j) {
        const double zij = zx(i, j);
        double dz = 0.0;
        for (std::size_t k = 0; k < vx.cols(); ++k) {
          if (vx(j, k) > zij) {
            gv(j, k) += gy(i, k);
            dz -= gy(i, k);
          }
        }
        gz(i, j) += dz;
      }
  });
}

Var signed_inhibit_fused(Var v, Var z) {
  same_graph(v, z, "signed_inhibit_fused");
  const Tensor2D& vv = v.value();
  const Tensor2D& zv = z.value();
  require_shape(zv.cols() == vv.rows(), "signed_inhibit_fused", vv, zv);
  for (std::size_t i = 0; i < zv.rows(); ++i)
    for (std::size_t j = 0; j < vv.rows(); ++j)
      for (std::size_t k = 0; k < vv.cols(); ++k) {
        const double x = vv(j, k);
        v.graph->note_kink_distance(std::fabs(x));
        v.graph->note_kink_distance(std::fabs(x > 0.0 ? x - zv(i, j) : x + zv(i, j)));
      }
  // Positive entries: relu(V - Z); negative entries: min(0, V + Z).
  return v.graph->push(inhibitor::signed_inhibit_fused(vv, zv), [v, z](Graph& g, std::size_t self) {
    const Tensor2D& vx = g.value(v.id);
    const Tensor2D& zx = g.value(z.id);
    const Tensor2D& gy = g.grad(self);
    Tensor2D& gv = g.grad_mut(v.id);
    Tensor2D& gz = g.grad_mut(z.id);
    for (std::size_t i = 0; i < zx.rows(); ++i)
      for (std::size_t j = 0; j < vx.rows(); ++j) {
        const double zij = zx(i, j);
        double dz = 0.0;
        for (std::size_t k = 0; k < vx.cols(); ++k) {
          const double x = vx(j, k);
          if (x > 0.0 && x > zij) {
            gv(j, k) += gy(i, k);
            dz -= gy(i, k);
          } else if (x < 0.0 && x + zij < 0.0) {
            gv(j, k) += gy(i, k);
            dz += gy(i, k);
          }
        }
        gz(i, j) += dz;
      }
  });
}

Var softmax_rows(Var a) {
  return a.graph->push(inhibitor::softmax_rows(a.value()), [a](Graph& g, std::size_t self) {
    const Tensor2D& s = g.value(self);
    const Tensor2D& gy = g.grad(self);
    Tensor2D& gx = g.grad_mut(a.id);
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) dot += gy(i, j) * s(i, j);
      for (std::size_t j = 0; j < s.cols(); ++j) gx(i, j) += s(i, j) * (gy(i, j) - dot);
    }
  });
}

Var layer_norm(Var x, double eps) {
  const Tensor2D& xv = x.value();
  std::vector<double> inv_sd(xv.rows());
  const double inv_n = 1.0 / static_cast<double>(xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mean = 0.0;
    for (double v : xv.row(i)) mean += v;
    mean *= inv_n;
    double var = 0.0;
    for (double v : xv.row(i)) var += (v - mean) * (v - mean);
    inv_sd[i] = 1.0 / std::sqrt(var * inv_n + eps);
  }
  return x.graph->push(inhibitor::layer_norm(xv, eps),
                       [x, inv_sd = std::move(inv_sd), inv_n](Graph& g, std::size_t self) {
                         const Tensor2D& y = g.value(self);
                         const Tensor2D& gy = g.grad(self);
                         Tensor2D& gx = g.grad_mut(x.id);
                         for (std::size_t i = 0; i < y.rows(); ++i) {
                           double mg = 0.0, mgy = 0.0;
                           for (std::size_t j = 0; j < y.cols(); ++j) {
                             mg += gy(i, j);
                             mgy += gy(i, j) * y(i, j);
                           }
                           mg *= inv_n;
                           mgy *= inv_n;
                           for (std::size_t j = 0; j < y.cols(); ++j)
                             gx(i, j) += inv_sd[i] * (gy(i, j) - mg - y(i, j) * mgy);
                         }
                       });
}

Var ffn(Var x, Var w1, Var b1, Var w2, Var b2) {
  return add_row(matmul(relu(add_row(matmul_nt(x, w1), b1)), w2), b2);
}

Var mean_pool(Var x, std::size_t group) {
  const Tensor2D& xv = x.value();
  if (group == 0 || xv.rows() % group != 0) {
    throw DimensionError("mean_pool: group " + std::to_string(group) + " does not divide " +
                         xv.shape_str());
  }
  const std::size_t groups = xv.rows() / group;
  const double inv = 1.0 / static_cast<double>(group);
  Tensor2D out(groups, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r / group, c) += xv(r, c) * inv;
  return x.graph->push(std::move(out), [x, group, inv](Graph& g, std::size_t self) {
    const Tensor2D& gy = g.grad(self);
    Tensor2D& gx = g.grad_mut(x.id);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += gy(r / group, c) * inv;
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  return x.graph->push(inhibitor::slice_rows(x.value(), begin, end),
                       [x, begin](Graph& g, std::size_t self) {
                         const Tensor2D& gy = g.grad(self);
                         Tensor2D& gx = g.grad_mut(x.id);
                         for (std::size_t r = 0; r < gy.rows(); ++r)
                           for (std::size_t c = 0; c < gy.cols(); ++c) gx(begin + r, c) += gy(r, c);
                       });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no parts");
  std::vector<Tensor2D> values;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    same_graph(parts[0], p, "concat_rows");
    values.push_back(p.value());
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return parts[0].graph->push(inhibitor::concat_rows(values),
                              [ids = std::move(ids)](Graph& g, std::size_t self) {
                                const Tensor2D& gy = g.grad(self);
                                std::size_t offset = 0;
                                for (const Var& p : ids) {
                                  Tensor2D& gx = g.grad_mut(p.id);
                                  for (std::size_t r = 0; r < gx.rows(); ++r)
                                    for (std::size_t c = 0; c < gx.cols(); ++c)
                                      gx(r, c) += gy(offset + r, c);
                                  offset += gx.rows();
                                }
                              });
}

Var mse_loss(Var pred, const Tensor2D& target) {
  const Tensor2D& p = pred.value();
  require_shape(p.rows() == target.rows() && p.cols() == target.cols(), "mse_loss", p, target);
  const double inv = 1.0 / static_cast<double>(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p.data()[i] - target.data()[i];
    loss += e * e;
  }
  return pred.graph->push(Tensor2D(1, 1, loss * inv),
                          [pred, target, inv](Graph& g, std::size_t self) {
                            const double gy = g.grad(self)(0, 0);
                            auto pv = g.value(pred.id).data();
                            auto gx = g.grad_mut(pred.id).data();
                            for (std::size_t i = 0; i < pv.size(); ++i)
                              gx[i] += gy * 2.0 * (pv[i] - target.data()[i]) * inv;
                          });
}

}  // namespace inhibitor::ag
