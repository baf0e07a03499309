#pragma once

// Differentiable primitives over Tensor, recorded on a Tape.
//
// Broadcasting is limited to leading-batch tiling: binary elementwise ops
// accept either identical shapes or a right operand whose shape is a suffix
// of the left's (the right operand is tiled over the leading dims). matmul
// treats all but the last two dims as batch; the right matrix may be 2-D
// (shared across the batch) or carry the same batch dims.

#include <functional>

#include "ggp/tape.hpp"
#include "ggp/tensor.hpp"

namespace ggp::ad {

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr subtract(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr multiply(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& tape, const TensorPtr& a, double s);
TensorPtr gelu(Tape& tape, const TensorPtr& a);
TensorPtr relu(Tape& tape, const TensorPtr& a);
TensorPtr softmax(Tape& tape, const TensorPtr& a);  // last axis
TensorPtr layer_norm(Tape& tape, const TensorPtr& a, const TensorPtr& gamma, const TensorPtr& beta, double eps);
// out[i,:] = table[ids[i],:]; gradient scatters back into table.
TensorPtr embedding_lookup(Tape& tape, const TensorPtr& table, const std::vector<int>& ids);
// Row gather over a tensor viewed as 2-D [numel/last_dim, last_dim].
TensorPtr gather_rows(Tape& tape, const TensorPtr& a, const std::vector<int>& rows);
TensorPtr concatenate(Tape& tape, const TensorPtr& a, const TensorPtr& b, int axis);
TensorPtr slice(Tape& tape, const TensorPtr& a, int axis, int start, int len);
TensorPtr transpose(Tape& tape, const TensorPtr& a, int axis1, int axis2);
TensorPtr reshape(Tape& tape, const TensorPtr& a, std::vector<int> new_shape);
TensorPtr mean(Tape& tape, const TensorPtr& a);     // scalar
TensorPtr sum(Tape& tape, const TensorPtr& a);      // scalar
TensorPtr l2_norm(Tape& tape, const TensorPtr& a);  // scalar
// Unit-L2 rows; gradient is the tangential projection.
TensorPtr normalize_rows(Tape& tape, const TensorPtr& a);
// Mean over rows of -log softmax(logits)[target].
TensorPtr softmax_cross_entropy(Tape& tape, const TensorPtr& logits, const std::vector<int>& targets);

// Central-difference gradient check. Runs f once with autodiff to collect
// x.grad, then probes f(x +- h*e_i) forward-only coordinate by coordinate and
// returns the worst relative error. When max_coords > 0, a deterministic
// evenly-strided subset of coordinates is probed instead of all of them.
// h must lie in (0, 1e-2]; a non-finite f evaluation throws.
double finite_difference_check(const std::function<TensorPtr(Tape&)>& f, const TensorPtr& x, double h,
                               std::size_t max_coords = 0);

}  // namespace ggp::ad
