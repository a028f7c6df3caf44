#pragma once

#include "knobrec/numerics/matrix.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace knobrec {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;

    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

    const RealMatrix& value() const;
    const RealMatrix& grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Single-use reverse-mode recording. Nodes are appended in evaluation order,
/// so walking them backwards is a reverse topological order.
///
/// A tape is confined to one thread. Recorded values are never mutated after
/// insertion; gradients are allocated lazily on the backward pass.
class Tape {
public:
    /// Called once per node during backward(). Reads grad(self) and
    /// accumulates into the gradients of the node's inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(RealMatrix value, bool requires_grad = true);
    Var constant(RealMatrix value) { return leaf(std::move(value), false); }

    /// Appends an op result. The node requires a gradient iff any input does.
    Var record(RealMatrix value, std::vector<std::size_t> inputs, BackwardFn backward);

    /// Runs the backward pass from a 1x1 output. May be called once.
    void backward(const Var& output);

    const RealMatrix& value(std::size_t id) const { return nodes_.at(id).value; }
    const RealMatrix& grad(std::size_t id) const;
    /// Gradient accumulator for op authors; allocates zeros on first use.
    RealMatrix& grad_accumulator(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    std::size_t size() const { return nodes_.size(); }
    /// Node ids whose backward function ran, in execution order.
    const std::vector<std::size_t>& backward_order() const { return backward_order_; }

private:
    struct Node {
        RealMatrix value;
        RealMatrix grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::size_t> backward_order_;
    bool backward_done_ = false;
};

namespace ad {

Var linear(const Var& input, const Var& weight, const Var& bias);
Var tanh(const Var& input);
Var softplus(const Var& input);
Var log_softmax(const Var& logits);
/// `noise` is a constant supplied by the caller.
Var gaussian_reparameterize(const Var& mean, const Var& log_variance, const RealMatrix& noise);
/// rows x 1 column of per-row KL against the standard normal.
Var kl_diag_gaussian_vs_standard(const Var& mean, const Var& log_variance);
/// rows x 1 column of per-row multinomial negative log-likelihood; `x` is constant.
Var multinomial_nll(const RealMatrix& x, const Var& log_pi);
/// 1x1 mean over every entry.
Var mean(const Var& input);
/// 1x1 sum over every entry.
Var sum(const Var& input);
/// 1x1 sum of coefficient * term over 1x1 terms.
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);
/// Element-wise square.
Var square(const Var& input);

} // namespace ad

} // namespace knobrec
