#include "fairsr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fairsr {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument(where + ": " + what);
}

std::string shape_of(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) fail("ParamStore::add", "duplicate parameter " + name);
  int id = static_cast<int>(values_.size());
  grads_.emplace_back(value.rows, value.cols);
  values_.push_back(std::move(value));
  names_.push_back(name);
  index_[name] = id;
  return id;
}

int ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("ParamStore::id", "unknown parameter " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grads() {
  for (Tensor& g : grads_) g.fill(0.0);
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const Tensor& v : values_)
    for (double x : v.data) s += x * x;
  return s;
}

// ---------------------------------------------------------------------------
// Graph construction

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check(int node) const {
  if (node < 0 || node >= static_cast<int>(nodes_.size()))
    fail("Graph", "node id " + std::to_string(node) + " out of range");
}

int Graph::input(const std::string& name, int rows, int cols) {
  Node n;
  n.op = Op::kInput;
  n.rows = rows;
  n.cols = cols;
  n.key = static_cast<int>(inputs_.size());
  int id = push(n);
  inputs_.emplace_back(name, id);
  return id;
}

int Graph::param(const ParamStore& store, int param_id) {
  const Tensor& v = store.value(param_id);
  Node n;
  n.op = Op::kParam;
  n.rows = v.rows;
  n.cols = v.cols;
  n.key = param_id;
  return push(n);
}

int Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.rows = value.rows;
  n.cols = value.cols;
  n.key = static_cast<int>(consts_.size());
  consts_.push_back(std::move(value));
  return push(n);
}

int Graph::matmul(int a, int b) {
  check(a);
  check(b);
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.cols != nb.rows)
    fail("matmul at node " + std::to_string(nodes_.size()),
         shape_of(na.rows, na.cols) + " * " + shape_of(nb.rows, nb.cols));
  Node n;
  n.op = Op::kMatMul;
  n.in0 = a;
  n.in1 = b;
  n.rows = na.rows;
  n.cols = nb.cols;
  return push(n);
}

static void require_same_shape(const Node& a, const Node& b, const char* op, size_t at) {
  if (a.rows != b.rows || a.cols != b.cols)
    fail(std::string(op) + " at node " + std::to_string(at),
         shape_of(a.rows, a.cols) + " vs " + shape_of(b.rows, b.cols));
}

int Graph::add(int a, int b) {
  check(a);
  check(b);
  require_same_shape(nodes_[a], nodes_[b], "add", nodes_.size());
  Node n;
  n.op = Op::kAdd;
  n.in0 = a;
  n.in1 = b;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::sub(int a, int b) {
  check(a);
  check(b);
  require_same_shape(nodes_[a], nodes_[b], "sub", nodes_.size());
  Node n;
  n.op = Op::kSub;
  n.in0 = a;
  n.in1 = b;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::mul(int a, int b) {
  check(a);
  check(b);
  require_same_shape(nodes_[a], nodes_[b], "mul", nodes_.size());
  Node n;
  n.op = Op::kMul;
  n.in0 = a;
  n.in1 = b;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::scale(int a, double factor) {
  check(a);
  Node n;
  n.op = Op::kScale;
  n.in0 = a;
  n.factor = factor;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::sigmoid(int a) {
  check(a);
  Node n;
  n.op = Op::kSigmoid;
  n.in0 = a;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::tanh(int a) {
  check(a);
  Node n;
  n.op = Op::kTanh;
  n.in0 = a;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::log(int a) {
  check(a);
  Node n;
  n.op = Op::kLog;
  n.in0 = a;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::softmax(int a, int axis) {
  check(a);
  if (axis != 0 && axis != 1) fail("softmax", "axis must be 0 or 1");
  Node n;
  n.op = Op::kSoftmax;
  n.in0 = a;
  n.axis = axis;
  n.rows = nodes_[a].rows;
  n.cols = nodes_[a].cols;
  return push(n);
}

int Graph::max_reduce(int a, int axis) {
  check(a);
  if (axis != 0 && axis != 1) fail("max_reduce", "axis must be 0 or 1");
  Node n;
  n.op = Op::kMaxReduce;
  n.in0 = a;
  n.axis = axis;
  n.rows = axis == 0 ? 1 : nodes_[a].rows;
  n.cols = axis == 0 ? nodes_[a].cols : 1;
  return push(n);
}

int Graph::concat(const std::vector<int>& parts, int axis) {
  if (parts.empty()) fail("concat", "no inputs");
  if (axis != 0 && axis != 1) fail("concat", "axis must be 0 or 1");
  for (int p : parts) check(p);
  int rows = nodes_[parts[0]].rows;
  int cols = nodes_[parts[0]].cols;
  for (size_t i = 1; i < parts.size(); ++i) {
    const Node& p = nodes_[parts[i]];
    if (axis == 0) {
      if (p.cols != cols)
        fail("concat at node " + std::to_string(nodes_.size()), "column mismatch");
      rows += p.rows;
    } else {
      if (p.rows != rows)
        fail("concat at node " + std::to_string(nodes_.size()), "row mismatch");
      cols += p.cols;
    }
  }
  Node n;
  n.op = Op::kConcat;
  n.in0 = parts[0];
  if (parts.size() > 1) n.in1 = parts[1];
  for (size_t i = 2; i < parts.size(); ++i) n.more.push_back(parts[i]);
  n.axis = axis;
  n.rows = rows;
  n.cols = cols;
  return push(n);
}

int Graph::slice(int a, int r0, int r1, int c0, int c1) {
  check(a);
  const Node& na = nodes_[a];
  if (r0 < 0 || c0 < 0 || r1 > na.rows || c1 > na.cols || r0 >= r1 || c0 >= c1)
    fail("slice at node " + std::to_string(nodes_.size()),
         "bounds [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
             std::to_string(c0) + "," + std::to_string(c1) + ") of " +
             shape_of(na.rows, na.cols));
  Node n;
  n.op = Op::kSlice;
  n.in0 = a;
  n.r0 = r0;
  n.r1 = r1;
  n.c0 = c0;
  n.c1 = c1;
  n.rows = r1 - r0;
  n.cols = c1 - c0;
  return push(n);
}

int Graph::outer(int a, int b) {
  check(a);
  check(b);
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.cols != 1 || nb.cols != 1)
    fail("outer at node " + std::to_string(nodes_.size()),
         "expects column vectors, got " + shape_of(na.rows, na.cols) + " and " +
             shape_of(nb.rows, nb.cols));
  Node n;
  n.op = Op::kOuter;
  n.in0 = a;
  n.in1 = b;
  n.rows = na.rows;
  n.cols = nb.rows;
  return push(n);
}

int Graph::sum(int a) {
  check(a);
  Node n;
  n.op = Op::kSum;
  n.in0 = a;
  n.rows = 1;
  n.cols = 1;
  return push(n);
}

int Graph::transpose(int a) {
  check(a);
  Node n;
  n.op = Op::kTranspose;
  n.in0 = a;
  n.rows = nodes_[a].cols;
  n.cols = nodes_[a].rows;
  return push(n);
}

void Graph::mark_output(const std::string& name, int node) {
  check(node);
  outputs_.emplace_back(name, node);
}

// ---------------------------------------------------------------------------
// Forward

const Tensor& Evaluation::output(const std::string& name) const {
  for (const auto& [n, id] : graph->outputs())
    if (n == name) return values[id];
  throw std::invalid_argument("Evaluation::output: unknown output " + name);
}

namespace {

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  if (!accumulate) out.fill(0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
    double* orow = &out.data[static_cast<size_t>(i) * b.cols];
    for (int k = 0; k < a.cols; ++k) {
      double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

Evaluation forward(const Graph& g, const ParamStore& params,
                   const std::map<std::string, Tensor>& inputs, Precision prec) {
  Evaluation ev;
  ev.graph = &g;
  ev.values.resize(g.node_count());

  for (int i = 0; i < g.node_count(); ++i) {
    const Node& n = g.node(i);
    Tensor& out = ev.values[i];
    switch (n.op) {
      case Op::kInput: {
        const std::string& name = g.inputs()[n.key].first;
        auto it = inputs.find(name);
        if (it == inputs.end())
          throw std::invalid_argument("forward: missing input " + name);
        if (it->second.rows != n.rows || it->second.cols != n.cols)
          throw std::invalid_argument("forward: input " + name + " has shape " +
                                      it->second.shape_str() + ", declared " +
                                      shape_of(n.rows, n.cols));
        out = it->second;
        break;
      }
      case Op::kParam:
        out = params.value(n.key);
        break;
      case Op::kConst:
        out = g.const_value(n.key);
        break;
      case Op::kMatMul: {
        out = Tensor(n.rows, n.cols);
        matmul_into(ev.values[n.in0], ev.values[n.in1], out, false);
        break;
      }
      case Op::kAdd: {
        const Tensor& a = ev.values[n.in0];
        const Tensor& b = ev.values[n.in1];
        out = a;
        for (size_t k = 0; k < out.size(); ++k) out.data[k] += b.data[k];
        break;
      }
      case Op::kSub: {
        const Tensor& a = ev.values[n.in0];
        const Tensor& b = ev.values[n.in1];
        out = a;
        for (size_t k = 0; k < out.size(); ++k) out.data[k] -= b.data[k];
        break;
      }
      case Op::kMul: {
        const Tensor& a = ev.values[n.in0];
        const Tensor& b = ev.values[n.in1];
        out = a;
        for (size_t k = 0; k < out.size(); ++k) out.data[k] *= b.data[k];
        break;
      }
      case Op::kScale: {
        out = ev.values[n.in0];
        for (double& v : out.data) v *= n.factor;
        break;
      }
      case Op::kSigmoid: {
        out = ev.values[n.in0];
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        break;
      }
      case Op::kTanh: {
        out = ev.values[n.in0];
        for (double& v : out.data) v = std::tanh(v);
        break;
      }
      case Op::kLog: {
        out = ev.values[n.in0];
        for (double& v : out.data) v = std::log(v);
        break;
      }
      case Op::kSoftmax: {
        const Tensor& a = ev.values[n.in0];
        out = Tensor(n.rows, n.cols);
        int slices = n.axis == 0 ? n.cols : n.rows;
        int len = n.axis == 0 ? n.rows : n.cols;
        for (int s = 0; s < slices; ++s) {
          double mx = -std::numeric_limits<double>::infinity();
          for (int k = 0; k < len; ++k) {
            double v = n.axis == 0 ? a.at(k, s) : a.at(s, k);
            mx = std::max(mx, v);
          }
          double z = 0.0;
          for (int k = 0; k < len; ++k) {
            double v = n.axis == 0 ? a.at(k, s) : a.at(s, k);
            double e = std::exp(v - mx);
            (n.axis == 0 ? out.at(k, s) : out.at(s, k)) = e;
            z += e;
          }
          for (int k = 0; k < len; ++k) (n.axis == 0 ? out.at(k, s) : out.at(s, k)) /= z;
        }
        break;
      }
      case Op::kMaxReduce: {
        const Tensor& a = ev.values[n.in0];
        out = Tensor(n.rows, n.cols);
        if (n.axis == 0) {
          for (int c = 0; c < a.cols; ++c) {
            double mx = a.at(0, c);
            for (int r = 1; r < a.rows; ++r) mx = std::max(mx, a.at(r, c));
            out.at(0, c) = mx;
          }
        } else {
          for (int r = 0; r < a.rows; ++r) {
            double mx = a.at(r, 0);
            for (int c = 1; c < a.cols; ++c) mx = std::max(mx, a.at(r, c));
            out.at(r, 0) = mx;
          }
        }
        break;
      }
      case Op::kConcat: {
        out = Tensor(n.rows, n.cols);
        std::vector<int> parts = {n.in0};
        if (n.in1 >= 0) parts.push_back(n.in1);
        for (int p : n.more) parts.push_back(p);
        int off = 0;
        for (int p : parts) {
          const Tensor& t = ev.values[p];
          if (n.axis == 0) {
            std::copy(t.data.begin(), t.data.end(),
                      out.data.begin() + static_cast<size_t>(off) * n.cols);
            off += t.rows;
          } else {
            for (int r = 0; r < t.rows; ++r)
              for (int c = 0; c < t.cols; ++c) out.at(r, off + c) = t.at(r, c);
            off += t.cols;
          }
        }
        break;
      }
      case Op::kSlice: {
        const Tensor& a = ev.values[n.in0];
        out = Tensor(n.rows, n.cols);
        for (int r = 0; r < n.rows; ++r)
          for (int c = 0; c < n.cols; ++c) out.at(r, c) = a.at(n.r0 + r, n.c0 + c);
        break;
      }
      case Op::kOuter: {
        const Tensor& a = ev.values[n.in0];
        const Tensor& b = ev.values[n.in1];
        out = Tensor(n.rows, n.cols);
        for (int r = 0; r < n.rows; ++r)
          for (int c = 0; c < n.cols; ++c) out.at(r, c) = a.data[r] * b.data[c];
        break;
      }
      case Op::kSum: {
        const Tensor& a = ev.values[n.in0];
        double s = 0.0;
        for (double v : a.data) s += v;
        out = Tensor::scalar(s);
        break;
      }
      case Op::kTranspose: {
        const Tensor& a = ev.values[n.in0];
        out = Tensor(n.rows, n.cols);
        for (int r = 0; r < a.rows; ++r)
          for (int c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
        break;
      }
    }
    round_to_precision(out, prec);
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Graph& g, ParamStore& params, const Evaluation& eval,
              int loss_node, Precision prec) {
  const Node& loss = g.node(loss_node);
  if (loss.rows != 1 || loss.cols != 1)
    throw std::invalid_argument("backward: loss node must be scalar, got " +
                                shape_of(loss.rows, loss.cols));

  std::vector<Tensor> grads(g.node_count());
  auto grad_of = [&](int i) -> Tensor& {
    if (grads[i].size() == 0) grads[i] = Tensor(g.rows(i), g.cols(i));
    return grads[i];
  };
  grad_of(loss_node).data[0] = 1.0;

  for (int i = loss_node; i >= 0; --i) {
    const Node& n = g.node(i);
    if (grads[i].size() == 0) continue;  // not on a path to the loss
    Tensor& gy = grads[i];
    round_to_precision(gy, prec);
    switch (n.op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kParam: {
        Tensor& pg = params.grad(n.key);
        for (size_t k = 0; k < pg.size(); ++k) pg.data[k] += gy.data[k];
        break;
      }
      case Op::kMatMul: {
        const Tensor& a = eval.values[n.in0];
        const Tensor& b = eval.values[n.in1];
        Tensor& ga = grad_of(n.in0);
        Tensor& gb = grad_of(n.in1);
        // ga += gy * b^T
        for (int r = 0; r < a.rows; ++r)
          for (int k = 0; k < b.rows; ++k) {
            double s = 0.0;
            for (int c = 0; c < b.cols; ++c) s += gy.at(r, c) * b.at(k, c);
            ga.at(r, k) += s;
          }
        // gb += a^T * gy
        for (int k = 0; k < a.cols; ++k)
          for (int c = 0; c < b.cols; ++c) {
            double s = 0.0;
            for (int r = 0; r < a.rows; ++r) s += a.at(r, k) * gy.at(r, c);
            gb.at(k, c) += s;
          }
        break;
      }
      case Op::kAdd: {
        Tensor& ga = grad_of(n.in0);
        Tensor& gb = grad_of(n.in1);
        for (size_t k = 0; k < gy.size(); ++k) {
          ga.data[k] += gy.data[k];
          gb.data[k] += gy.data[k];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = grad_of(n.in0);
        Tensor& gb = grad_of(n.in1);
        for (size_t k = 0; k < gy.size(); ++k) {
          ga.data[k] += gy.data[k];
          gb.data[k] -= gy.data[k];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = eval.values[n.in0];
        const Tensor& b = eval.values[n.in1];
        Tensor& ga = grad_of(n.in0);
        Tensor& gb = grad_of(n.in1);
        for (size_t k = 0; k < gy.size(); ++k) {
          ga.data[k] += gy.data[k] * b.data[k];
          gb.data[k] += gy.data[k] * a.data[k];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grad_of(n.in0);
        for (size_t k = 0; k < gy.size(); ++k) ga.data[k] += n.factor * gy.data[k];
        break;
      }
      case Op::kSigmoid: {
        const Tensor& y = eval.values[i];
        Tensor& ga = grad_of(n.in0);
        for (size_t k = 0; k < gy.size(); ++k)
          ga.data[k] += gy.data[k] * y.data[k] * (1.0 - y.data[k]);
        break;
      }
      case Op::kTanh: {
        const Tensor& y = eval.values[i];
        Tensor& ga = grad_of(n.in0);
        for (size_t k = 0; k < gy.size(); ++k)
          ga.data[k] += gy.data[k] * (1.0 - y.data[k] * y.data[k]);
        break;
      }
      case Op::kLog: {
        const Tensor& a = eval.values[n.in0];
        Tensor& ga = grad_of(n.in0);
        for (size_t k = 0; k < gy.size(); ++k) ga.data[k] += gy.data[k] / a.data[k];
        break;
      }
      case Op::kSoftmax: {
        const Tensor& y = eval.values[i];
        Tensor& ga = grad_of(n.in0);
        int slices = n.axis == 0 ? n.cols : n.rows;
        int len = n.axis == 0 ? n.rows : n.cols;
        for (int s = 0; s < slices; ++s) {
          double dot = 0.0;
          for (int k = 0; k < len; ++k) {
            double yv = n.axis == 0 ? y.at(k, s) : y.at(s, k);
            double gv = n.axis == 0 ? gy.at(k, s) : gy.at(s, k);
            dot += yv * gv;
          }
          for (int k = 0; k < len; ++k) {
            double yv = n.axis == 0 ? y.at(k, s) : y.at(s, k);
            double gv = n.axis == 0 ? gy.at(k, s) : gy.at(s, k);
            (n.axis == 0 ? ga.at(k, s) : ga.at(s, k)) += yv * (gv - dot);
          }
        }
        break;
      }
      case Op::kMaxReduce: {
        const Tensor& a = eval.values[n.in0];
        Tensor& ga = grad_of(n.in0);
        if (n.axis == 0) {
          for (int c = 0; c < a.cols; ++c) {
            int arg = 0;
            for (int r = 1; r < a.rows; ++r)
              if (a.at(r, c) > a.at(arg, c)) arg = r;
            ga.at(arg, c) += gy.at(0, c);
          }
        } else {
          for (int r = 0; r < a.rows; ++r) {
            int arg = 0;
            for (int c = 1; c < a.cols; ++c)
              if (a.at(r, c) > a.at(r, arg)) arg = c;
            ga.at(r, arg) += gy.at(r, 0);
          }
        }
        break;
      }
      case Op::kConcat: {
        std::vector<int> parts = {n.in0};
        if (n.in1 >= 0) parts.push_back(n.in1);
        for (int p : n.more) parts.push_back(p);
        int off = 0;
        for (int p : parts) {
          Tensor& gp = grad_of(p);
          if (n.axis == 0) {
            for (size_t k = 0; k < gp.size(); ++k)
              gp.data[k] += gy.data[static_cast<size_t>(off) * n.cols + k];
            off += gp.rows;
          } else {
            for (int r = 0; r < gp.rows; ++r)
              for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += gy.at(r, off + c);
            off += gp.cols;
          }
        }
        break;
      }
      case Op::kSlice: {
        Tensor& ga = grad_of(n.in0);
        for (int r = 0; r < n.rows; ++r)
          for (int c = 0; c < n.cols; ++c) ga.at(n.r0 + r, n.c0 + c) += gy.at(r, c);
        break;
      }
      case Op::kOuter: {
        const Tensor& a = eval.values[n.in0];
        const Tensor& b = eval.values[n.in1];
        Tensor& ga = grad_of(n.in0);
        Tensor& gb = grad_of(n.in1);
        for (int r = 0; r < n.rows; ++r)
          for (int c = 0; c < n.cols; ++c) {
            ga.data[r] += gy.at(r, c) * b.data[c];
            gb.data[c] += gy.at(r, c) * a.data[r];
          }
        break;
      }
      case Op::kSum: {
        Tensor& ga = grad_of(n.in0);
        double gv = gy.data[0];
        for (double& v : ga.data) v += gv;
        break;
      }
      case Op::kTranspose: {
        Tensor& ga = grad_of(n.in0);
        for (int r = 0; r < n.rows; ++r)
          for (int c = 0; c < n.cols; ++c) ga.at(c, r) += gy.at(r, c);
        break;
      }
    }
  }
}

Evaluation compute_gradients(const Graph& g, ParamStore& params, int loss_node,
                             const std::map<std::string, Tensor>& inputs,
                             Precision prec) {
  params.zero_grads();
  Evaluation ev = forward(g, params, inputs, prec);
  backward(g, params, ev, loss_node, prec);
  return ev;
}

}  // namespace fairsr
