#pragma once

#include "matxfer/autodiff/param_store.hpp"
#include "matxfer/core/types.hpp"

#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace matxfer::ad {

template <typename Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
template <typename Scalar>
struct Var {
    Tape<Scalar>* tape = nullptr;
    int id = -1;

    const MatX<Scalar>& value() const { return tape->value(id); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape != nullptr && id >= 0; }
};

/// Reverse-mode tape over batch matrices. Nodes are appended in creation
/// order, which is a topological order, so backward walks ids downwards and
/// visits each node once.
template <typename Scalar>
class Tape {
public:
    using Mat = MatX<Scalar>;
    using Backward = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<Scalar> constant(Mat value) {
        nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}, {}, -1});
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    /// Leaf bound to a parameter block. The block is referenced, not copied,
    /// so the store must outlive the tape and stay unmodified until backward.
    Var<Scalar> param(const ParamStore<Scalar>& store, std::string_view name) {
        const std::size_t block = store.index_of(name);
        bind_store(store);
        if (auto it = leaf_of_block_.find(block); it != leaf_of_block_.end()) return {this, it->second};
        nodes_.push_back(Node{Mat(), &store.block(block), {}, true, {}, {}, static_cast<int>(block)});
        const int id = static_cast<int>(nodes_.size()) - 1;
        leaf_of_block_.emplace(block, id);
        return {this, id};
    }

    /// Appends an op result. The closure runs during backward only when
    /// `self` received gradient and at least one parent needs it.
    Var<Scalar> record(Mat value, std::vector<int> parents, Backward backward) {
        bool needs = false;
        for (int p : parents) needs = needs || nodes_[p].needs_grad;
        Node n{std::move(value), nullptr, {}, needs, {}, {}, -1};
        if (needs) {
            n.parents = std::move(parents);
            n.backward = std::move(backward);
        }
        nodes_.push_back(std::move(n));
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    const Mat& value(int id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }

    bool needs_grad(int id) const { return nodes_[id].needs_grad; }
    bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }

    Mat& grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) {
            const Mat& v = value(id);
            n.grad = Mat::Zero(v.rows(), v.cols());
        }
        return n.grad;
    }

    template <typename Expr>
    void accumulate(int id, const Expr& g) {
        if (!nodes_[id].needs_grad) return;
        grad(id) += g;
    }

    std::size_t size() const { return nodes_.size(); }

    Gradients<Scalar> backward(Var<Scalar> loss) {
        if (loss.rows() != 1 || loss.cols() != 1)
            throw ContractError("backward requires a scalar loss, got " + std::to_string(loss.rows()) + "x" +
                                std::to_string(loss.cols()));
        if (nodes_[loss.id].needs_grad) grad(loss.id)(0, 0) += Scalar(1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.backward || n.grad.size() == 0) continue;
            n.backward(*this, id);
        }
        Gradients<Scalar> out;
        if (!store_) return out;
        for (std::size_t b = 0; b < store_->size(); ++b) {
            out.names.push_back(store_->name(b));
            auto it = leaf_of_block_.find(b);
            if (it != leaf_of_block_.end() && nodes_[it->second].grad.size() > 0)
                out.blocks.push_back(std::move(nodes_[it->second].grad));
            else
                out.blocks.push_back(Mat::Zero(store_->block(b).rows(), store_->block(b).cols()));
        }
        return out;
    }

private:
    struct Node {
        Mat value;
        const Mat* external;
        Mat grad;
        bool needs_grad;
        std::vector<int> parents;
        Backward backward;
        int block;
    };

    void bind_store(const ParamStore<Scalar>& store) {
        if (store_ && store_ != &store) throw ContractError("a tape may reference a single parameter store");
        store_ = &store;
    }

    std::deque<Node> nodes_;
    std::unordered_map<std::size_t, int> leaf_of_block_;
    const ParamStore<Scalar>* store_ = nullptr;
};

}  // namespace matxfer::ad
