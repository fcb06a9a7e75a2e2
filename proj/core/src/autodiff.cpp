#include "moereid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace moereid {

Param& ParamStore::add(std::string name, Tensor init, bool trainable) {
  if (by_name_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>(Param{name, std::move(init), trainable});
  Param& ref = *p;
  by_name_[ref.name] = items_.size();
  items_.push_back(std::move(p));
  return ref;
}

Param* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : items_[it->second].get();
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : items_[it->second].get();
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

namespace ad {

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Tensor Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

NodeId Tape::constant(Tensor v) { return push(std::move(v), false); }

NodeId Tape::leaf(Tensor v) { return push(std::move(v), true); }

NodeId Tape::param(Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return it->second;
  const NodeId id = push(p.value, true);
  param_nodes_[&p] = id;
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add shape mismatch");
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) + vb.at_flat(i);
  const bool needs = rg(a) || rg(b);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      if (rg(a)) {
        Tensor& ga = grad_buf(a);
        for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
      }
      if (rg(b)) {
        Tensor& gb = grad_buf(b);
        for (Index i = 0; i < g.size(); ++i) gb.at_flat(i) += g.at_flat(i);
      }
    };
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("sub shape mismatch");
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) - vb.at_flat(i);
  const bool needs = rg(a) || rg(b);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      if (rg(a)) {
        Tensor& ga = grad_buf(a);
        for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
      }
      if (rg(b)) {
        Tensor& gb = grad_buf(b);
        for (Index i = 0; i < g.size(); ++i) gb.at_flat(i) -= g.at_flat(i);
      }
    };
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("mul shape mismatch");
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) * vb.at_flat(i);
  const bool needs = rg(a) || rg(b);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& va2 = value(a);
      const Tensor& vb2 = value(b);
      if (rg(a)) {
        Tensor& ga = grad_buf(a);
        for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i) * vb2.at_flat(i);
      }
      if (rg(b)) {
        Tensor& gb = grad_buf(b);
        for (Index i = 0; i < g.size(); ++i) gb.at_flat(i) += g.at_flat(i) * va2.at_flat(i);
      }
    };
  return id;
}

NodeId Tape::scale(NodeId a, double c) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) * c;
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, c] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i) * c;
    };
  return id;
}

NodeId Tape::add_scalar(NodeId a, double c) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) + c;
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
    };
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.rows()) throw std::invalid_argument("matmul shape mismatch");
  Tensor out(va.rows(), vb.cols());
  out.map().noalias() = va.map() * vb.map();
  const bool needs = rg(a) || rg(b);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      if (rg(a)) grad_buf(a).map().noalias() += g.map() * value(b).map().transpose();
      if (rg(b)) grad_buf(b).map().noalias() += value(a).map().transpose() * g.map();
    };
  return id;
}

NodeId Tape::transpose(NodeId a) {
  const Tensor& va = value(a);
  Tensor out(va.cols(), va.rows());
  out.map() = va.map().transpose();
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      grad_buf(a).map() += g.map().transpose();
    };
  return id;
}

NodeId Tape::relu(NodeId a) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) > 0.0 ? va.at_flat(i) : 0.0;
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& va2 = value(a);
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i)
        if (va2.at_flat(i) > 0.0) ga.at_flat(i) += g.at_flat(i);
    };
  return id;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

NodeId Tape::gelu(NodeId a) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) {
    const double x = va.at_flat(i);
    out.at_flat(i) = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& va2 = value(a);
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i) {
        const double x = va2.at_flat(i);
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga.at_flat(i) += g.at_flat(i) * (cdf + x * pdf);
      }
    };
  return id;
}

NodeId Tape::tanh_fn(NodeId a) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = std::tanh(va.at_flat(i));
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& y = nodes_[static_cast<std::size_t>(id)].value;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i) * (1.0 - y.at_flat(i) * y.at_flat(i));
    };
  return id;
}

NodeId Tape::sqrt_guarded(NodeId a) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = std::sqrt(std::max(va.at_flat(i), 0.0));
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& y = nodes_[static_cast<std::size_t>(id)].value;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i)
        ga.at_flat(i) += g.at_flat(i) / (2.0 * std::max(y.at_flat(i), 1e-12));
    };
  return id;
}

NodeId Tape::add_row_broadcast(NodeId m, NodeId row) {
  const Tensor& vm = value(m);
  const Tensor& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != vm.cols()) throw std::invalid_argument("row broadcast mismatch");
  Tensor out(vm.rows(), vm.cols());
  for (Index i = 0; i < vm.rows(); ++i)
    for (Index j = 0; j < vm.cols(); ++j) out(i, j) = vm(i, j) + vr(0, j);
  const bool needs = rg(m) || rg(row);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, m, row] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      if (rg(m)) {
        Tensor& gm = grad_buf(m);
        for (Index i = 0; i < g.size(); ++i) gm.at_flat(i) += g.at_flat(i);
      }
      if (rg(row)) {
        Tensor& gr = grad_buf(row);
        for (Index i = 0; i < g.rows(); ++i)
          for (Index j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
      }
    };
  return id;
}

NodeId Tape::scale_rows(NodeId m, NodeId col) {
  const Tensor& vm = value(m);
  const Tensor& vc = value(col);
  if (vc.cols() != 1 || vc.rows() != vm.rows()) throw std::invalid_argument("scale_rows mismatch");
  Tensor out(vm.rows(), vm.cols());
  for (Index i = 0; i < vm.rows(); ++i)
    for (Index j = 0; j < vm.cols(); ++j) out(i, j) = vm(i, j) * vc(i, 0);
  const bool needs = rg(m) || rg(col);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, m, col] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& vm2 = value(m);
      const Tensor& vc2 = value(col);
      if (rg(m)) {
        Tensor& gm = grad_buf(m);
        for (Index i = 0; i < g.rows(); ++i)
          for (Index j = 0; j < g.cols(); ++j) gm(i, j) += g(i, j) * vc2(i, 0);
      }
      if (rg(col)) {
        Tensor& gc = grad_buf(col);
        for (Index i = 0; i < g.rows(); ++i) {
          double s = 0.0;
          for (Index j = 0; j < g.cols(); ++j) s += g(i, j) * vm2(i, j);
          gc(i, 0) += s;
        }
      }
    };
  return id;
}

NodeId Tape::scale_by_scalar(NodeId m, NodeId s) {
  const Tensor& vm = value(m);
  const Tensor& vs = value(s);
  if (vs.size() != 1) throw std::invalid_argument("scale_by_scalar needs 1x1");
  const double sv = vs.at_flat(0);
  Tensor out(vm.rows(), vm.cols());
  for (Index i = 0; i < vm.size(); ++i) out.at_flat(i) = vm.at_flat(i) * sv;
  const bool needs = rg(m) || rg(s);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, m, s] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& vm2 = value(m);
      const double sv2 = value(s).at_flat(0);
      if (rg(m)) {
        Tensor& gm = grad_buf(m);
        for (Index i = 0; i < g.size(); ++i) gm.at_flat(i) += g.at_flat(i) * sv2;
      }
      if (rg(s)) {
        double acc = 0.0;
        for (Index i = 0; i < g.size(); ++i) acc += g.at_flat(i) * vm2.at_flat(i);
        grad_buf(s).at_flat(0) += acc;
      }
    };
  return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  if (vg.size() != vx.cols() || vb.size() != vx.cols())
    throw std::invalid_argument("layer_norm parameter size mismatch");
  const Index n = vx.cols();
  Tensor out(vx.rows(), n);
  Tensor xhat(vx.rows(), n);
  Tensor inv_std(vx.rows(), 1);
  for (Index i = 0; i < vx.rows(); ++i) {
    double mean = 0.0;
    for (Index j = 0; j < n; ++j) mean += vx(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double d = vx(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = inv;
    for (Index j = 0; j < n; ++j) {
      xhat(i, j) = (vx(i, j) - mean) * inv;
      out(i, j) = xhat(i, j) * vg.at_flat(j) + vb.at_flat(j);
    }
  }
  const bool needs = rg(x) || rg(gain) || rg(bias);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, x, gain, bias, xhat = std::move(xhat),
                                                 inv_std = std::move(inv_std)] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& vg2 = value(gain);
      const Index n = g.cols();
      if (rg(gain) || rg(bias)) {
        for (Index i = 0; i < g.rows(); ++i)
          for (Index j = 0; j < n; ++j) {
            if (rg(gain)) grad_buf(gain).at_flat(j) += g(i, j) * xhat(i, j);
            if (rg(bias)) grad_buf(bias).at_flat(j) += g(i, j);
          }
      }
      if (rg(x)) {
        Tensor& gx = grad_buf(x);
        for (Index i = 0; i < g.rows(); ++i) {
          double mean_u = 0.0;
          double mean_ux = 0.0;
          for (Index j = 0; j < n; ++j) {
            const double u = g(i, j) * vg2.at_flat(j);
            mean_u += u;
            mean_ux += u * xhat(i, j);
          }
          mean_u /= static_cast<double>(n);
          mean_ux /= static_cast<double>(n);
          const double inv = inv_std(i, 0);
          for (Index j = 0; j < n; ++j) {
            const double u = g(i, j) * vg2.at_flat(j);
            gx(i, j) += inv * (u - mean_u - xhat(i, j) * mean_ux);
          }
        }
      }
    };
  return id;
}

NodeId Tape::softmax_rows(NodeId x) {
  Tensor out = moereid::softmax_rows(value(x));
  const bool needs = rg(x);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& y = nodes_[static_cast<std::size_t>(id)].value;
      Tensor& gx = grad_buf(x);
      for (Index i = 0; i < g.rows(); ++i) {
        double dot = 0.0;
        for (Index j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
        for (Index j = 0; j < g.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
      }
    };
  return id;
}

NodeId Tape::mean_rows(NodeId x) {
  const Tensor& vx = value(x);
  Tensor out(1, vx.cols());
  for (Index j = 0; j < vx.cols(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < vx.rows(); ++i) s += vx(i, j);
    out(0, j) = s / static_cast<double>(vx.rows());
  }
  const bool needs = rg(x);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& gx = grad_buf(x);
      const double inv = 1.0 / static_cast<double>(gx.rows());
      for (Index i = 0; i < gx.rows(); ++i)
        for (Index j = 0; j < gx.cols(); ++j) gx(i, j) += g(0, j) * inv;
    };
  return id;
}

NodeId Tape::sum_all(NodeId x) {
  const Tensor& vx = value(x);
  Tensor out = Tensor::scalar(vx.sum());
  const bool needs = rg(x);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
      const double g = nodes_[static_cast<std::size_t>(id)].grad.at_flat(0);
      Tensor& gx = grad_buf(x);
      for (Index i = 0; i < gx.size(); ++i) gx.at_flat(i) += g;
    };
  return id;
}

NodeId Tape::mean_all(NodeId x) {
  const Tensor& vx = value(x);
  Tensor out = Tensor::scalar(vx.sum() / static_cast<double>(vx.size()));
  const bool needs = rg(x);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
      const double g = nodes_[static_cast<std::size_t>(id)].grad.at_flat(0);
      Tensor& gx = grad_buf(x);
      const double inv = 1.0 / static_cast<double>(gx.size());
      for (Index i = 0; i < gx.size(); ++i) gx.at_flat(i) += g * inv;
    };
  return id;
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  const Index cols = value(parts[0]).cols();
  Index rows = 0;
  bool needs = false;
  for (NodeId p : parts) {
    if (value(p).cols() != cols) throw std::invalid_argument("concat_rows col mismatch");
    rows += value(p).rows();
    needs = needs || rg(p);
  }
  Tensor out(rows, cols);
  Index r = 0;
  for (NodeId p : parts) {
    const Tensor& v = value(p);
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < cols; ++j) out(r + i, j) = v(i, j);
    r += v.rows();
  }
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, ps = std::vector<NodeId>(parts.begin(), parts.end())] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Index r = 0;
      for (NodeId p : ps) {
        const Index pr = value(p).rows();
        if (rg(p)) {
          Tensor& gp = grad_buf(p);
          for (Index i = 0; i < pr; ++i)
            for (Index j = 0; j < g.cols(); ++j) gp(i, j) += g(r + i, j);
        }
        r += pr;
      }
    };
  return id;
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const Index rows = value(parts[0]).rows();
  Index cols = 0;
  bool needs = false;
  for (NodeId p : parts) {
    if (value(p).rows() != rows) throw std::invalid_argument("concat_cols row mismatch");
    cols += value(p).cols();
    needs = needs || rg(p);
  }
  Tensor out(rows, cols);
  Index c = 0;
  for (NodeId p : parts) {
    const Tensor& v = value(p);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < v.cols(); ++j) out(i, c + j) = v(i, j);
    c += v.cols();
  }
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, ps = std::vector<NodeId>(parts.begin(), parts.end())] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Index c = 0;
      for (NodeId p : ps) {
        const Index pc = value(p).cols();
        if (rg(p)) {
          Tensor& gp = grad_buf(p);
          for (Index i = 0; i < g.rows(); ++i)
            for (Index j = 0; j < pc; ++j) gp(i, j) += g(i, c + j);
        }
        c += pc;
      }
    };
  return id;
}

NodeId Tape::slice_rows(NodeId a, Index r0, Index count) {
  const Tensor& va = value(a);
  if (r0 < 0 || r0 + count > va.rows()) throw std::out_of_range("slice_rows range");
  Tensor out(count, va.cols());
  for (Index i = 0; i < count; ++i)
    for (Index j = 0; j < va.cols(); ++j) out(i, j) = va(r0 + i, j);
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, r0] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.rows(); ++i)
        for (Index j = 0; j < g.cols(); ++j) ga(r0 + i, j) += g(i, j);
    };
  return id;
}

NodeId Tape::slice_cols(NodeId a, Index c0, Index count) {
  const Tensor& va = value(a);
  if (c0 < 0 || c0 + count > va.cols()) throw std::out_of_range("slice_cols range");
  Tensor out(va.rows(), count);
  for (Index i = 0; i < va.rows(); ++i)
    for (Index j = 0; j < count; ++j) out(i, j) = va(i, c0 + j);
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, c0] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.rows(); ++i)
        for (Index j = 0; j < g.cols(); ++j) ga(i, c0 + j) += g(i, j);
    };
  return id;
}

NodeId Tape::reshape(NodeId a, Index rows, Index cols) {
  Tensor out = value(a).reshaped(rows, cols);
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i);
    };
  return id;
}

NodeId Tape::dropout(NodeId a, double rate, RandomStream& rs, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Tensor& va = value(a);
  Tensor mask(va.rows(), va.cols());
  const double keep = 1.0 - rate;
  for (Index i = 0; i < mask.size(); ++i) mask.at_flat(i) = rs.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out(va.rows(), va.cols());
  for (Index i = 0; i < va.size(); ++i) out.at_flat(i) = va.at_flat(i) * mask.at_flat(i);
  const bool needs = rg(a);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, a, mask = std::move(mask)] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& ga = grad_buf(a);
      for (Index i = 0; i < g.size(); ++i) ga.at_flat(i) += g.at_flat(i) * mask.at_flat(i);
    };
  return id;
}

NodeId Tape::threshold_gate(NodeId map, NodeId sigma, GateMode mode) {
  const Tensor& vm = value(map);
  const Tensor& vs = value(sigma);
  if (vs.size() != 1) throw std::invalid_argument("threshold_gate sigma must be 1x1");
  const double s = vs.at_flat(0);
  Tensor out(vm.rows(), vm.cols());
  for (Index i = 0; i < vm.size(); ++i)
    out.at_flat(i) = mode == GateMode::kHard ? (vm.at_flat(i) > s ? 1.0 : 0.0) : vm.at_flat(i) - s;
  const bool needs = rg(map) || rg(sigma);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, map, sigma] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      if (rg(map)) {
        Tensor& gm = grad_buf(map);
        for (Index i = 0; i < g.size(); ++i) gm.at_flat(i) += g.at_flat(i);
      }
      if (rg(sigma)) {
        double s = 0.0;
        for (Index i = 0; i < g.size(); ++i) s += g.at_flat(i);
        grad_buf(sigma).at_flat(0) -= s;
      }
    };
  return id;
}

NodeId Tape::threshold_gate_const(NodeId map, double sigma, GateMode mode) {
  const Tensor& vm = value(map);
  Tensor out(vm.rows(), vm.cols());
  for (Index i = 0; i < vm.size(); ++i)
    out.at_flat(i) = mode == GateMode::kHard ? (vm.at_flat(i) > sigma ? 1.0 : 0.0) : vm.at_flat(i) - sigma;
  const bool needs = rg(map);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, map] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& gm = grad_buf(map);
      for (Index i = 0; i < g.size(); ++i) gm.at_flat(i) += g.at_flat(i);
    };
  return id;
}

NodeId Tape::topk_gate(NodeId map, Index k) {
  const Tensor& vm = value(map);
  if (k < 0 || k > vm.size()) throw std::invalid_argument("topk_gate k out of range");
  std::vector<Index> order(static_cast<std::size_t>(vm.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return vm.at_flat(a) > vm.at_flat(b); });
  Tensor out(vm.rows(), vm.cols());
  for (Index i = 0; i < k; ++i) out.at_flat(order[static_cast<std::size_t>(i)]) = 1.0;
  const bool needs = rg(map);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, map] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& gm = grad_buf(map);
      for (Index i = 0; i < g.size(); ++i) gm.at_flat(i) += g.at_flat(i);
    };
  return id;
}

NodeId Tape::cosine_rows(NodeId text_row, NodeId tokens, double eps) {
  const Tensor& t = value(text_row);
  const Tensor& x = value(tokens);
  if (t.rows() != 1 || t.cols() != x.cols()) throw std::invalid_argument("cosine_rows shape mismatch");
  const Index n = x.rows();
  const Index d = x.cols();
  double a2 = 0.0;
  for (Index j = 0; j < d; ++j) a2 += t(0, j) * t(0, j);
  const double a = std::sqrt(a2);
  Tensor out(n, 1);
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    double b2 = 0.0;
    for (Index j = 0; j < d; ++j) {
      s += t(0, j) * x(i, j);
      b2 += x(i, j) * x(i, j);
    }
    out(i, 0) = s / std::max(a * std::sqrt(b2), eps);
  }
  const bool needs = rg(text_row) || rg(tokens);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, text_row, tokens, eps] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& t2 = value(text_row);
      const Tensor& x2 = value(tokens);
      const Index n = x2.rows();
      const Index d = x2.cols();
      double a2 = 0.0;
      for (Index j = 0; j < d; ++j) a2 += t2(0, j) * t2(0, j);
      const double a = std::sqrt(a2);
      for (Index i = 0; i < n; ++i) {
        if (g(i, 0) == 0.0) continue;
        double s = 0.0;
        double b2 = 0.0;
        for (Index j = 0; j < d; ++j) {
          s += t2(0, j) * x2(i, j);
          b2 += x2(i, j) * x2(i, j);
        }
        const double b = std::sqrt(b2);
        if (a * b < eps) continue;  // clamped: treat as locally constant
        const double gi = g(i, 0);
        if (rg(tokens)) {
          Tensor& gx = grad_buf(tokens);
          for (Index j = 0; j < d; ++j)
            gx(i, j) += gi * (t2(0, j) / (a * b) - s * x2(i, j) / (a * b * b * b));
        }
        if (rg(text_row)) {
          Tensor& gt = grad_buf(text_row);
          for (Index j = 0; j < d; ++j)
            gt(0, j) += gi * (x2(i, j) / (a * b) - s * t2(0, j) / (a * a * a * b));
        }
      }
    };
  return id;
}

NodeId Tape::pairwise_distances(NodeId emb) {
  const Tensor& e = value(emb);
  const Index b = e.rows();
  const Index d = e.cols();
  Tensor out(b, b);
  for (Index i = 0; i < b; ++i)
    for (Index j = i + 1; j < b; ++j) {
      double s = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double diff = e(i, k) - e(j, k);
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      out(i, j) = dist;
      out(j, i) = dist;
    }
  const bool needs = rg(emb);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, emb] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      const Tensor& e2 = value(emb);
      const Tensor& dist = nodes_[static_cast<std::size_t>(id)].value;
      Tensor& ge = grad_buf(emb);
      const Index b = e2.rows();
      const Index d = e2.cols();
      for (Index i = 0; i < b; ++i)
        for (Index j = 0; j < b; ++j) {
          if (i == j || g(i, j) == 0.0) continue;
          const double inv = 1.0 / std::max(dist(i, j), 1e-12);
          for (Index k = 0; k < d; ++k) {
            const double diff = (e2(i, k) - e2(j, k)) * inv * g(i, j);
            ge(i, k) += diff;
            ge(j, k) -= diff;
          }
        }
    };
  return id;
}

NodeId Tape::gather_pairs(NodeId mat, std::vector<std::pair<Index, Index>> pairs) {
  const Tensor& m = value(mat);
  Tensor out(static_cast<Index>(pairs.size()), 1);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [r, c] = pairs[k];
    if (r < 0 || r >= m.rows() || c < 0 || c >= m.cols()) throw std::out_of_range("gather_pairs index");
    out(static_cast<Index>(k), 0) = m(r, c);
  }
  const bool needs = rg(mat);
  const NodeId id = push(std::move(out), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, mat, pairs = std::move(pairs)] {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      Tensor& gm = grad_buf(mat);
      for (std::size_t k = 0; k < pairs.size(); ++k) gm(pairs[k].first, pairs[k].second) += g(static_cast<Index>(k), 0);
    };
  return id;
}

NodeId Tape::cross_entropy_smoothed(NodeId logits, std::vector<int> labels, double smoothing) {
  const Tensor& z = value(logits);
  const Index b = z.rows();
  const Index c = z.cols();
  if (c < 2) throw std::invalid_argument("cross entropy needs at least 2 classes");
  if (static_cast<Index>(labels.size()) != b) throw std::invalid_argument("label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= c) throw std::out_of_range("label outside class range");
  Tensor probs(b, c);
  double loss = 0.0;
  for (Index i = 0; i < b; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < c; ++j) mx = std::max(mx, z(i, j));
    double denom = 0.0;
    for (Index j = 0; j < c; ++j) denom += std::exp(z(i, j) - mx);
    const double lse = mx + std::log(denom);
    double qz = 0.0;
    for (Index j = 0; j < c; ++j) {
      probs(i, j) = std::exp(z(i, j) - lse);
      const double q = smoothing / static_cast<double>(c) + (j == labels[static_cast<std::size_t>(i)] ? 1.0 - smoothing : 0.0);
      qz += q * z(i, j);
    }
    loss += lse - qz;
  }
  loss /= static_cast<double>(b);
  const bool needs = rg(logits);
  const NodeId id = push(Tensor::scalar(loss), needs);
  if (needs)
    nodes_[static_cast<std::size_t>(id)].back = [this, id, logits, labels = std::move(labels), smoothing,
                                                 probs = std::move(probs)] {
      const double g = nodes_[static_cast<std::size_t>(id)].grad.at_flat(0);
      Tensor& gz = grad_buf(logits);
      const Index b = gz.rows();
      const Index c = gz.cols();
      const double inv_b = 1.0 / static_cast<double>(b);
      for (Index i = 0; i < b; ++i)
        for (Index j = 0; j < c; ++j) {
          const double q = smoothing / static_cast<double>(c) + (j == labels[static_cast<std::size_t>(i)] ? 1.0 - smoothing : 0.0);
          gz(i, j) += g * (probs(i, j) - q) * inv_b;
        }
    };
  return id;
}

void Tape::backward(NodeId root) {
  if (value(root).size() != 1) throw std::logic_error("backward root must be a scalar");
  for (auto& n : nodes_)
    if (!n.grad.empty()) n.grad.set_zero();
  grad_buf(root).fill(1.0);
  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.back && !n.grad.empty()) n.back();
  }
}

}  // namespace ad
}  // namespace moereid
