#include "knobrec/numerics/tape.hpp"

#include "knobrec/errors.hpp"
#include "knobrec/numerics/kernels.hpp"

#include <cmath>
#include <string>

namespace knobrec {

const RealMatrix& Var::value() const { return tape_->value(id_); }
const RealMatrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(RealMatrix value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, requires_grad});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(RealMatrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (std::size_t id : inputs) {
        if (id >= nodes_.size()) {
            throw std::out_of_range("tape input id " + std::to_string(id) + " not recorded");
        }
        needs = needs || nodes_[id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(backward), needs});
    return Var(this, nodes_.size() - 1);
}

const RealMatrix& Tape::grad(std::size_t id) const {
    const Node& node = nodes_.at(id);
    if (node.grad.empty() && !node.value.empty()) {
        // never reached by backward: gradient is identically zero
        const_cast<Node&>(node).grad = RealMatrix(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

RealMatrix& Tape::grad_accumulator(std::size_t id) {
    Node& node = nodes_.at(id);
    if (node.grad.empty()) {
        node.grad = RealMatrix(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

void Tape::backward(const Var& output) {
    if (output.tape() != this) {
        throw std::invalid_argument("backward: output belongs to another tape");
    }
    if (backward_done_) {
        throw std::logic_error("backward: tape already consumed");
    }
    const RealMatrix& out = value(output.id());
    if (out.rows() != 1 || out.cols() != 1) {
        throw DimensionError("backward: output must be 1x1");
    }
    backward_done_ = true;
    grad_accumulator(output.id())(0, 0) = 1.0;
    for (std::size_t id = output.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
        backward_order_.push_back(id);
        node.backward(*this, id);
    }
}

namespace ad {

namespace {

Tape& tape_of(const Var& v) {
    if (!v.valid()) throw std::invalid_argument("operation on an unrecorded Var");
    return *v.tape();
}

void require_scalar(const Var& v, const char* what) {
    if (v.value().rows() != 1 || v.value().cols() != 1) {
        throw DimensionError(std::string(what) + ": expected a 1x1 operand");
    }
}

} // namespace

Var linear(const Var& input, const Var& weight, const Var& bias) {
    Tape& tape = tape_of(input);
    RealMatrix out = knobrec::linear(input.value(), weight.value(), bias.value());
    const std::size_t x = input.id(), w = weight.id(), b = bias.id();
    return tape.record(std::move(out), {x, w, b}, [x, w, b](Tape& t, std::size_t self) {
        const RealMatrix& g = t.grad(self);
        if (t.requires_grad(x)) matmul_add_bt(g, t.value(w), t.grad_accumulator(x));
        if (t.requires_grad(w)) matmul_add_at(t.value(x), g, t.grad_accumulator(w));
        if (t.requires_grad(b)) {
            RealMatrix& gb = t.grad_accumulator(b);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto row = g.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) gb(0, c) += row[c];
            }
        }
    });
}

Var tanh(const Var& input) {
    Tape& tape = tape_of(input);
    const std::size_t x = input.id();
    return tape.record(tanh_activation(input.value()), {x}, [x](Tape& t, std::size_t self) {
        auto g = t.grad(self).values();
        auto y = t.value(self).values();
        auto gx = t.grad_accumulator(x).values();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var softplus(const Var& input) {
    Tape& tape = tape_of(input);
    const std::size_t x = input.id();
    return tape.record(softplus_activation(input.value()), {x}, [x](Tape& t, std::size_t self) {
        auto g = t.grad(self).values();
        auto in = t.value(x).values();
        auto gx = t.grad_accumulator(x).values();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid(in[i]);
    });
}

Var log_softmax(const Var& logits) {
    Tape& tape = tape_of(logits);
    const std::size_t x = logits.id();
    return tape.record(knobrec::log_softmax(logits.value()), {x}, [x](Tape& t, std::size_t self) {
        const RealMatrix& g = t.grad(self);
        const RealMatrix& y = t.value(self);
        RealMatrix& gx = t.grad_accumulator(x);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto gr = g.row(r);
            auto yr = y.row(r);
            double total = 0.0;
            for (double v : gr) total += v;
            auto out = gx.row(r);
            for (std::size_t c = 0; c < gr.size(); ++c) out[c] += gr[c] - std::exp(yr[c]) * total;
        }
    });
}

Var gaussian_reparameterize(const Var& mean, const Var& log_variance, const RealMatrix& noise) {
    Tape& tape = tape_of(mean);
    const std::size_t m = mean.id(), lv = log_variance.id();
    RealMatrix z = knobrec::gaussian_reparameterize(mean.value(), log_variance.value(), noise);
    return tape.record(std::move(z), {m, lv}, [m, lv, noise](Tape& t, std::size_t self) {
        auto g = t.grad(self).values();
        if (t.requires_grad(m)) {
            auto gm = t.grad_accumulator(m).values();
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.requires_grad(lv)) {
            auto lvv = t.value(lv).values();
            auto eps = noise.values();
            auto glv = t.grad_accumulator(lv).values();
            for (std::size_t i = 0; i < g.size(); ++i) {
                glv[i] += g[i] * 0.5 * std::exp(0.5 * lvv[i]) * eps[i];
            }
        }
    });
}

Var kl_diag_gaussian_vs_standard(const Var& mean, const Var& log_variance) {
    Tape& tape = tape_of(mean);
    RealVector kl = knobrec::kl_diag_gaussian_vs_standard(mean.value(), log_variance.value());
    const std::size_t rows = kl.size();
    const std::size_t m = mean.id(), lv = log_variance.id();
    return tape.record(RealMatrix(rows, 1, std::move(kl)), {m, lv}, [m, lv](Tape& t, std::size_t self) {
        const RealMatrix& g = t.grad(self);
        const RealMatrix& mu = t.value(m);
        const RealMatrix& lvv = t.value(lv);
        RealMatrix* gm = t.requires_grad(m) ? &t.grad_accumulator(m) : nullptr;
        RealMatrix* glv = t.requires_grad(lv) ? &t.grad_accumulator(lv) : nullptr;
        for (std::size_t r = 0; r < mu.rows(); ++r) {
            const double gr = g(r, 0);
            for (std::size_t d = 0; d < mu.cols(); ++d) {
                if (gm) (*gm)(r, d) += gr * mu(r, d);
                if (glv) (*glv)(r, d) += gr * 0.5 * std::expm1(lvv(r, d));
            }
        }
    });
}

Var multinomial_nll(const RealMatrix& x, const Var& log_pi) {
    Tape& tape = tape_of(log_pi);
    RealVector nll = knobrec::multinomial_nll(x, log_pi.value());
    const std::size_t rows = nll.size();
    const std::size_t lp = log_pi.id();
    return tape.record(RealMatrix(rows, 1, std::move(nll)), {lp}, [lp, x](Tape& t, std::size_t self) {
        const RealMatrix& g = t.grad(self);
        RealMatrix& glp = t.grad_accumulator(lp);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            auto xr = x.row(r);
            auto out = glp.row(r);
            for (std::size_t c = 0; c < xr.size(); ++c) out[c] -= g(r, 0) * xr[c];
        }
    });
}

Var mean(const Var& input) {
    Tape& tape = tape_of(input);
    const std::size_t n = input.value().size();
    if (n == 0) throw DimensionError("mean of an empty matrix");
    double total = 0.0;
    for (double v : input.value().values()) total += v;
    const std::size_t x = input.id();
    return tape.record(RealMatrix(1, 1, total / static_cast<double>(n)), {x},
                       [x, n](Tape& t, std::size_t self) {
                           const double g = t.grad(self)(0, 0) / static_cast<double>(n);
                           for (double& v : t.grad_accumulator(x).values()) v += g;
                       });
}

Var sum(const Var& input) {
    Tape& tape = tape_of(input);
    double total = 0.0;
    for (double v : input.value().values()) total += v;
    const std::size_t x = input.id();
    return tape.record(RealMatrix(1, 1, total), {x}, [x](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        for (double& v : t.grad_accumulator(x).values()) v += g;
    });
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
    if (terms.empty()) throw std::invalid_argument("weighted_sum of no terms");
    Tape& tape = tape_of(terms.front().second);
    double total = 0.0;
    std::vector<std::size_t> ids;
    std::vector<double> coefficients;
    for (const auto& [c, v] : terms) {
        require_scalar(v, "weighted_sum");
        total += c * v.value()(0, 0);
        ids.push_back(v.id());
        coefficients.push_back(c);
    }
    return tape.record(RealMatrix(1, 1, total), ids, [ids, coefficients](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.requires_grad(ids[i])) t.grad_accumulator(ids[i])(0, 0) += coefficients[i] * g;
        }
    });
}

Var square(const Var& input) {
    Tape& tape = tape_of(input);
    RealMatrix out = input.value();
    for (double& v : out.values()) v *= v;
    const std::size_t x = input.id();
    return tape.record(std::move(out), {x}, [x](Tape& t, std::size_t self) {
        auto g = t.grad(self).values();
        auto in = t.value(x).values();
        auto gx = t.grad_accumulator(x).values();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * in[i] * g[i];
    });
}

} // namespace ad

} // namespace knobrec
