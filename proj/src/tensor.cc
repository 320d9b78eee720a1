#include "fovb/tensor.h"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace fovb {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

std::vector<double>& TensorNode::MutableGrad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor MakeLeaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (NumElements(shape) != data.size()) {
    throw DimensionError("tensor shape " + ShapeToString(shape) +
                         " does not match " + std::to_string(data.size()) +
                         " values");
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor MakeResult(const char* op, Shape shape, std::vector<double> data,
                  std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out = MakeLeaf(std::move(shape), std::move(data), false);
  bool needs_grad = false;
  for (const Tensor& in : inputs) needs_grad |= in.requires_grad();
  TensorNode* node = out.node();
  node->op = op;
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) node->inputs.push_back(in.shared_node());
    node->backward = std::move(backward);
  }
  return out;
}

Tensor Tensor::Zeros(const Shape& shape, bool requires_grad) {
  return MakeLeaf(shape, std::vector<double>(NumElements(shape), 0.0),
                  requires_grad);
}

Tensor Tensor::Full(const Shape& shape, double value, bool requires_grad) {
  return MakeLeaf(shape, std::vector<double>(NumElements(shape), value),
                  requires_grad);
}

Tensor Tensor::FromVector(const Shape& shape, std::vector<double> values,
                          bool requires_grad) {
  return MakeLeaf(shape, std::move(values), requires_grad);
}

Tensor Tensor::Scalar(double value) { return MakeLeaf({1}, {value}, false); }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " +
                        ShapeToString(shape()));
  }
  return node_->data[0];
}

Tape Tape::Record(const Tensor& loss) {
  Tape tape(loss);
  if (!loss.requires_grad()) return tape;
  // Iterative post-order DFS; post-order of a DAG is a topological order.
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::Backward() {
  if (nodes_.empty()) return;
  TensorNode* root = nodes_.back();
  root->MutableGrad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

void Backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  Tape::Record(loss).Backward();
}

}  // namespace fovb
