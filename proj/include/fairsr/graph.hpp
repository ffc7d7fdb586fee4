#pragma once

#include <map>
#include <string>
#include <vector>

#include "fairsr/tensor.hpp"

namespace fairsr {

// Named learnable tensors plus their gradient buffers. Parameter ids are
// stable registration indices; registration order defines update order.
class ParamStore {
 public:
  int add(const std::string& name, Tensor value);
  int id(const std::string& name) const;
  bool has(const std::string& name) const;
  int count() const { return static_cast<int>(values_.size()); }

  const std::string& name(int id) const { return names_[id]; }
  Tensor& value(int id) { return values_[id]; }
  const Tensor& value(int id) const { return values_[id]; }
  Tensor& grad(int id) { return grads_[id]; }
  const Tensor& grad(int id) const { return grads_[id]; }

  void zero_grads();
  double squared_norm() const;  // sum of squares over every parameter entry

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::map<std::string, int> index_;
};

enum class Op {
  kInput,
  kParam,
  kConst,
  kMatMul,
  kAdd,
  kSub,
  kMul,       // elementwise
  kScale,     // multiply by fixed constant
  kSigmoid,
  kTanh,
  kLog,
  kSoftmax,   // normalized along `axis`
  kMaxReduce, // max along `axis`, ties resolved to the first index
  kConcat,    // stacked along `axis`
  kSlice,
  kOuter,     // (m x 1, n x 1) -> m x n
  kSum,       // all entries -> 1 x 1
  kTranspose,
};

// axis = 0: operate down the rows (per column); axis = 1: across columns
// (per row). MaxReduce with axis 0 yields 1 x cols, with axis 1 rows x 1.

struct Node {
  Op op;
  int in0 = -1;
  int in1 = -1;
  std::vector<int> more;  // inputs beyond the second (concat)
  int rows = 0;
  int cols = 0;
  int axis = 0;
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // slice bounds [r0, r1) x [c0, c1)
  double factor = 1.0;
  int key = -1;  // param id or input slot
};

// A directed acyclic program over tensors. Shapes are checked when nodes are
// created, so a successfully built graph cannot fail shape checks at
// evaluation time. Graphs are cheap to build and are typically rebuilt per
// batch while parameters live in a shared ParamStore.
class Graph {
 public:
  int input(const std::string& name, int rows, int cols);
  int param(const ParamStore& store, int param_id);
  int constant(Tensor value);

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double factor);
  int sigmoid(int a);
  int tanh(int a);
  int log(int a);
  int softmax(int a, int axis);
  int max_reduce(int a, int axis);
  int concat(const std::vector<int>& parts, int axis);
  int slice(int a, int r0, int r1, int c0, int c1);
  int outer(int a, int b);
  int sum(int a);
  int transpose(int a);

  void mark_output(const std::string& name, int node);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[i]; }
  const std::vector<std::pair<std::string, int>>& inputs() const { return inputs_; }
  const std::vector<std::pair<std::string, int>>& outputs() const { return outputs_; }
  const Tensor& const_value(int key) const { return consts_[key]; }

  int rows(int node) const { return nodes_[node].rows; }
  int cols(int node) const { return nodes_[node].cols; }

 private:
  int push(Node n);
  void check(int node) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> consts_;
  std::vector<std::pair<std::string, int>> inputs_;
  std::vector<std::pair<std::string, int>> outputs_;
};

struct Evaluation {
  const Graph* graph = nullptr;
  std::vector<Tensor> values;

  const Tensor& value(int node) const { return values[node]; }
  const Tensor& output(const std::string& name) const;
};

// Evaluates every node in construction order. Same inputs and parameters give
// bitwise-identical outputs.
Evaluation forward(const Graph& g, const ParamStore& params,
                   const std::map<std::string, Tensor>& inputs = {},
                   Precision prec = Precision::f64);

// Reverse sweep from a scalar loss node. Parameter gradients are accumulated
// (+=) into the store; callers zero them when starting a fresh batch.
void backward(const Graph& g, ParamStore& params, const Evaluation& eval,
              int loss_node, Precision prec = Precision::f64);

// zero_grads + forward + backward in one call; returns the evaluation.
Evaluation compute_gradients(const Graph& g, ParamStore& params, int loss_node,
                             const std::map<std::string, Tensor>& inputs = {},
                             Precision prec = Precision::f64);

}  // namespace fairsr
