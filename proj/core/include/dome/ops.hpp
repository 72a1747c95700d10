#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "dome/rng.hpp"
#include "dome/segment.hpp"
#include "dome/tensor.hpp"

namespace dome {

/// Score assigned to masked attention positions.  Finite (so arithmetic never
/// produces NaN) but low enough that stabilized softmax maps it to exactly 0.
inline constexpr double kMaskedScore = std::numeric_limits<double>::lowest();

/// Standard matrix product of 2-D tensors; inner dimensions must agree.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise difference of same-shape tensors.
Tensor sub(const Tensor& a, const Tensor& b);

/// Elementwise (Hadamard) product of same-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiplies every element by a constant.
Tensor scale(const Tensor& a, double c);

/// Adds a length-C vector (or 1xC row) to every row of an RxC matrix.
Tensor add_rowvec(const Tensor& a, const Tensor& v);

/// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& a);

/// Column means over rows: RxC -> 1xC.
Tensor mean_rows(const Tensor& a);

/// Numerically stabilized softmax along `axis` (rows=1, columns=0 for 2-D;
/// a 1-D tensor is treated as one row with axis 0).  Entries at or below
/// kMaskedScore (or -inf) map to exactly 0.  A slice with no unmasked entry
/// raises DegenerateRow.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Per-row standardization followed by the affine map gain*xhat + bias.
/// gain/bias are length-C vectors (or 1xC rows).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Row l of the result is the columnwise max over the rows of segment l.
/// Gradient routes to the argmax cell; ties go to the lowest row index.
/// Segments must partition [0, rows) in order.
Tensor segment_max_pool(const Tensor& x, const Segments& segments);

/// Sinusoidal positional encoding table: PE(pos,2i) = sin(pos/10000^(2i/d)),
/// PE(pos,2i+1) = cos(same).  Constant (no gradient).
Tensor sinusoidal_pe(std::size_t length, std::size_t d);

/// Inverted dropout: each element zeroed with probability p during training,
/// survivors scaled by 1/(1-p); identity in inference mode.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

/// Elementwise max(0, x).
Tensor relu(const Tensor& x);

/// Elementwise logistic function.
Tensor sigmoid(const Tensor& x);

/// Matrix transpose.
Tensor transpose(const Tensor& a);

/// Horizontal concatenation: RxC1, RxC2 -> Rx(C1+C2).
Tensor concat_cols(const Tensor& a, const Tensor& b);

/// Vertical concatenation of matrices with equal column counts.
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Row slice [r0, r1) of a matrix.
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);

/// Column slice [c0, c1) of a matrix.
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);

/// Stacks `rows` copies of a length-C vector (or 1xC row) into rows x C.
Tensor repeat_row(const Tensor& v, std::size_t rows);

/// Scales row r of an RxC matrix by s[r]; s is length-R (or Rx1).
Tensor row_scale(const Tensor& a, const Tensor& s);

/// Replaces elements where mask is nonzero with `fill` (no gradient there);
/// mask length must equal the tensor size.
Tensor masked_fill(const Tensor& a, const std::vector<unsigned char>& mask,
                   double fill);

/// Gathers rows of an embedding table: ids -> |ids| x d.  Gradient
/// scatter-adds into the selected table rows.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

struct RowwiseCrossEntropy {
    Tensor sum;         ///< scalar: total negative log-likelihood over kept rows
    std::size_t rows;   ///< number of rows that contributed
};

/// Cross-entropy of row-wise softmax against integer targets.  Rows where
/// row_mask is nonzero are skipped entirely (zero loss, zero gradient).
/// An empty row_mask keeps every row.
RowwiseCrossEntropy cross_entropy_rowwise(const Tensor& logits,
                                          const std::vector<int>& targets,
                                          const std::vector<unsigned char>& row_mask = {});

}  // namespace dome
