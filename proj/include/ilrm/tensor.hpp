#pragma once

// Dense row-major tensors with a reverse-mode gradient tape.
//
// A Tensor is a cheap handle onto a shared node. Leaves created with
// requires_grad accumulate gradients; every op executed while a Tape is
// active (see TapeScope) and that touches a requires_grad input is recorded
// on that tape together with a closure that propagates gradients to its
// inputs. Without an active tape ops run in inference mode and record nothing.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ilrm/errors.hpp"

namespace ilrm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
    bool recorded = false;  // produced by an op on a tape (non-leaf)
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

template <class T>
class Tape;

template <class T>
class Tensor {
public:
    using Node = TensorNode<T>;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        if (shape_numel(shape) != data.size()) {
            throw DimensionError("tensor data size " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    // Mutable access is for initialization and optimizer updates of leaves.
    std::span<T> mutable_data() { return node_->data; }
    std::vector<T>& storage() { return node_->data; }

    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool is_leaf() const { return !node_->recorded; }

    T item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return node_->data[0];
    }
    T operator[](std::size_t i) const { return node_->data[i]; }
    T at(std::size_t r, std::size_t c) const { return node_->data[r * node_->shape.back() + c]; }

    // Copy of the values with no graph history.
    Tensor detach() const { return Tensor(node_->shape, node_->data, false); }

    template <class U>
    Tensor<U> cast() const {
        return Tensor<U>(node_->shape, std::vector<U>(node_->data.begin(), node_->data.end()), false);
    }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Ordered record of differentiable operations.
template <class T>
class Tape {
public:
    void record(const std::shared_ptr<TensorNode<T>>& node) {
        node->recorded = true;
        nodes_.push_back(node);
    }

    // Propagates d(loss)/d(x) into every requires_grad leaf reachable from
    // loss. Leaf gradients accumulate across calls; intermediate gradients
    // are reset on every call.
    void backward(const Tensor<T>& loss) {
        if (!loss.defined() || loss.numel() != 1) {
            throw ContractError("backward requires a scalar loss, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
        }
        const auto& root = loss.node();
        std::size_t end = nodes_.size();
        if (root->recorded) {
            end = 0;
            for (std::size_t i = nodes_.size(); i-- > 0;) {
                if (nodes_[i] == root) {
                    end = i + 1;
                    break;
                }
            }
            if (end == 0) throw ContractError("backward: loss was recorded on a different tape");
        } else if (!root->requires_grad) {
            throw ContractError("backward: loss is not on the tape");
        }
        for (std::size_t i = 0; i < end; ++i) nodes_[i]->grad.clear();
        root->ensure_grad();
        root->grad[0] += T(1);
        for (std::size_t i = end; i-- > 0;) {
            auto& n = *nodes_[i];
            if (n.grad.empty() || !n.backward_fn) continue;
            n.backward_fn(n);
        }
    }

    // Drops the recorded graph. Parameter values and gradients are untouched.
    void clear() { nodes_.clear(); }

    std::size_t size() const { return nodes_.size(); }

    static Tape*& active() {
        thread_local Tape* current = nullptr;
        return current;
    }

private:
    std::vector<std::shared_ptr<TensorNode<T>>> nodes_;
};

// Makes `tape` the recording target for the current thread while alive.
template <class T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active()) { Tape<T>::active() = &tape; }
    ~TapeScope() { Tape<T>::active() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

template <class T>
void backward(const Tensor<T>& loss) {
    auto* tape = Tape<T>::active();
    if (tape == nullptr) throw ContractError("backward called without an active tape");
    tape->backward(loss);
}

namespace detail {

// Builds an op result and, when grad tracking applies, wires it into the tape.
// `fn(out)` reads out.grad and accumulates into the parents.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> fn) {
    Tensor<T> out(std::move(shape), std::move(data));
    auto* tape = Tape<T>::active();
    if (tape == nullptr) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node());
    node.backward_fn = std::move(fn);
    tape->record(out.node());
    return out;
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(TensorNode<T>&)> fn) {
    Tensor<T> out(std::move(shape), std::move(data));
    auto* tape = Tape<T>::active();
    if (tape == nullptr) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) node.parents.push_back(in.node());
    node.backward_fn = std::move(fn);
    tape->record(out.node());
    return out;
}

// Returns the parent's gradient buffer or nullptr if it does not want one.
template <class T>
T* grad_of(TensorNode<T>& out, std::size_t parent) {
    auto& p = *out.parents[parent];
    if (!p.requires_grad) return nullptr;
    p.ensure_grad();
    return p.grad.data();
}

} // namespace detail

} // namespace ilrm
