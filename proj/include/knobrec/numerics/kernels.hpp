#pragma once

#include "knobrec/numerics/matrix.hpp"

#include <cstddef>

namespace knobrec {

/// Worker threads used by the row-parallel matrix kernels. 1 disables
/// threading. Results are bit-identical for any thread count since every
/// output row is produced by exactly one worker in a fixed order.
void set_kernel_threads(std::size_t n);
std::size_t kernel_threads();

/// out = a * b
RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);
/// out += a * b^T
void matmul_add_bt(const RealMatrix& a, const RealMatrix& b, RealMatrix& out);
/// out += a^T * b
void matmul_add_at(const RealMatrix& a, const RealMatrix& b, RealMatrix& out);

/// input * weight + bias, bias being a 1 x weight.cols() row broadcast over rows.
RealMatrix linear(const RealMatrix& input, const RealMatrix& weight, const RealMatrix& bias);

RealMatrix tanh_activation(const RealMatrix& input);
/// log(1 + exp(x)), overflow-safe.
RealMatrix softplus_activation(const RealMatrix& input);
double softplus(double x);
double sigmoid(double x);

/// Row-wise log-softmax with max subtraction.
RealMatrix log_softmax(const RealMatrix& logits);

/// z = mean + exp(0.5 * log_variance) * noise
RealMatrix gaussian_reparameterize(const RealMatrix& mean, const RealMatrix& log_variance,
                                   const RealMatrix& noise);

/// Per-row KL[N(mean, exp(log_variance)) || N(0, I)].
RealVector kl_diag_gaussian_vs_standard(const RealMatrix& mean, const RealMatrix& log_variance);

/// Per-row -sum_i x_i * log_pi_i.
RealVector multinomial_nll(const RealMatrix& x, const RealMatrix& log_pi);

/// Rows scaled to unit L2 norm; all-zero rows stay zero.
RealMatrix l2_normalize_rows(const RealMatrix& x);

} // namespace knobrec
