#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fast/tensor.hpp"

namespace fast::num {

// Reverse-mode tape. Nodes are recorded in execution order, so iterating the
// tape backwards is a valid topological order. Replay is deterministic for a
// fixed seed and input.
template <typename T>
class Tape {
public:
    // Backward closure: receives the tape and the id of its own node.
    using Back = std::function<void(Tape&, int)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int leaf(Tensor<T> value) {
        nodes_.push_back(Node{std::move(value), Tensor<T>{}, false, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    int push(Tensor<T> value, Back back) {
        nodes_.push_back(Node{std::move(value), Tensor<T>{}, false, std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }

    // Gradient buffer of a node, zero-initialized on first touch.
    Tensor<T>& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.has_grad) {
            n.grad = Tensor<T>::zeros(n.value.shape);
            n.has_grad = true;
        }
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].has_grad; }

    // Accumulate the full cotangent of `id` into `out += g`.
    void add_grad(int id, const Tensor<T>& g) {
        Tensor<T>& dst = grad(id);
        const T* src = g.data();
        T* d = dst.data();
        for (std::int64_t i = 0; i < g.size(); ++i) d[i] += src[i];
    }

    // Reverse pass from a scalar root. Nodes unreached by any cotangent are
    // skipped (dead branches, e.g. non-selected pooling windows).
    void backward(int root) {
        Node& r = nodes_[static_cast<size_t>(root)];
        if (r.value.size() != 1) throw ShapeError("backward root must be a scalar");
        grad(root).v[0] = T(1);
        for (int id = root; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.has_grad && n.back) n.back(*this, id);
        }
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad;
        Back back;
    };
    std::vector<Node> nodes_;
};

}  // namespace fast::num
