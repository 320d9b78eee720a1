#ifndef FOVB_TENSOR_H_
#define FOVB_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fovb {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a caller violates an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TensorNode;
using BackwardFn = std::function<void(TensorNode& self)>;

// One recorded value. Inputs are kept alive by the node so a loss owns the
// whole graph that produced it.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  BackwardFn backward;

  // Allocates a zero gradient buffer on first use.
  std::vector<double>& MutableGrad();
};

// Dense row-major float64 array. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(const Shape& shape, bool requires_grad = false);
  static Tensor Full(const Shape& shape, double value,
                     bool requires_grad = false);
  static Tensor FromVector(const Shape& shape, std::vector<double> values,
                           bool requires_grad = false);
  static Tensor Scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  double at(std::size_t i) const { return node_->data[i]; }
  // Value of a one-element tensor.
  double item() const;

  // Direct access for optimizers and loaders. Never call on a tensor that
  // already feeds a live graph.
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void ZeroGrad() { node_->grad.clear(); }

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  friend Tensor MakeResult(const char* op, Shape shape,
                           std::vector<double> data,
                           std::vector<Tensor> inputs, BackwardFn backward);
  friend Tensor MakeLeaf(Shape shape, std::vector<double> data,
                         bool requires_grad);

  std::shared_ptr<TensorNode> node_;
};

Tensor MakeLeaf(Shape shape, std::vector<double> data, bool requires_grad);

// Builds the output of an operation. The node is wired into the graph only
// when some input requires a gradient; otherwise it is a constant.
Tensor MakeResult(const char* op, Shape shape, std::vector<double> data,
                  std::vector<Tensor> inputs, BackwardFn backward);

// Topologically ordered view of every differentiable node reachable from a
// scalar loss. Inputs always precede the nodes that consume them.
class Tape {
 public:
  static Tape Record(const Tensor& loss);

  const std::vector<TensorNode*>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss) = 1 and runs each backward rule once, in reverse.
  void Backward();

 private:
  explicit Tape(const Tensor& loss) : loss_(loss) {}
  Tensor loss_;
  std::vector<TensorNode*> nodes_;
};

// Accumulates d(loss)/dT into every requires_grad tensor feeding `loss`.
// Gradients add across fan-out and across repeated calls.
void Backward(const Tensor& loss);

}  // namespace fovb

#endif  // FOVB_TENSOR_H_
