#pragma once

#include "panofc/tensor.hpp"

namespace panofc {

// Parameters of one GRU cell over concatenated [x, h] inputs:
//   z = sigmoid([x,h] Wz + bz)
//   r = sigmoid([x,h] Wr + br)
//   n = tanh([x, r*h] Wn + bn)
//   h' = (1 - z) * n + z * h
struct GruParams {
  Tensor wz, bz;  // [(I+H), H], [H]
  Tensor wr, br;
  Tensor wn, bn;

  int input_size() const { return wz.dim(0) - hidden_size(); }
  int hidden_size() const { return wz.dim(1); }
};

inline Tensor gru_cell(const GruParams& p, const Tensor& x, const Tensor& h) {
  if (x.rank() != 2 || h.rank() != 2)
    throw DimError(str("gru_cell: x and h must be rank 2, got ", shape_str(x.shape()),
                       " and ", shape_str(h.shape())));
  const int H = p.hidden_size();
  if (h.dim(1) != H)
    throw DimError(str("gru_cell: hidden state width ", h.dim(1),
                       " does not match parameters (", H, ")"));
  if (x.dim(1) + H != p.wz.dim(0))
    throw DimError(str("gru_cell: input width ", x.dim(1), " + hidden ", H,
                       " does not match weight rows ", p.wz.dim(0)));
  if (x.dim(0) != h.dim(0))
    throw DimError(str("gru_cell: batch mismatch ", shape_str(x.shape()), " vs ",
                       shape_str(h.shape())));
  Tensor xh = concat_dim1(x, h);
  Tensor z = sigmoid(matmul_add(xh, p.wz, p.bz));
  Tensor r = sigmoid(matmul_add(xh, p.wr, p.br));
  Tensor n = tanh(matmul_add(concat_dim1(x, mul(r, h)), p.wn, p.bn));
  return add(mul(one_minus(z), n), mul(z, h));
}

// Parameters of one peephole-free ConvLSTM cell.  A single convolution
// over concatenated [x, h] produces the four gates (i, f, o, g):
//   c' = f * c + i * g,   h' = o * tanh(c')
struct ConvLstmParams {
  Tensor kernel;  // [4*Ch, Ci+Ch, K, K]
  Tensor bias;    // [4*Ch]

  int hidden_channels() const { return kernel.dim(0) / 4; }
  int input_channels() const { return kernel.dim(1) - hidden_channels(); }
};

struct ConvLstmState {
  Tensor h;  // [B,Ch,H,W]
  Tensor c;  // [B,Ch,H,W]
};

inline ConvLstmState convlstm_cell(const ConvLstmParams& p, const Tensor& x,
                                   const ConvLstmState& s) {
  if (x.rank() != 4 || s.h.rank() != 4 || s.c.rank() != 4)
    throw DimError(str("convlstm_cell: inputs must be rank 4, got x=",
                       shape_str(x.shape()), " h=", shape_str(s.h.shape()),
                       " c=", shape_str(s.c.shape())));
  const int Ch = p.hidden_channels();
  if (p.kernel.dim(0) != 4 * Ch)
    throw DimError(str("convlstm_cell: kernel output channels ", p.kernel.dim(0),
                       " must be a multiple of 4"));
  if (s.h.dim(1) != Ch || s.c.dim(1) != Ch)
    throw DimError(str("convlstm_cell: state channels ", s.h.dim(1), "/", s.c.dim(1),
                       " do not match parameters (", Ch, ")"));
  if (x.dim(1) + Ch != p.kernel.dim(1))
    throw DimError(str("convlstm_cell: input channels ", x.dim(1), " + hidden ", Ch,
                       " do not match kernel input channels ", p.kernel.dim(1)));
  if (x.dim(2) != s.h.dim(2) || x.dim(3) != s.h.dim(3) || x.dim(0) != s.h.dim(0))
    throw DimError(str("convlstm_cell: x ", shape_str(x.shape()),
                       " and state ", shape_str(s.h.shape()), " disagree"));
  Tensor gates = conv2d(concat_dim1(x, s.h), p.kernel, p.bias);
  Tensor i = sigmoid(slice_dim1(gates, 0, Ch));
  Tensor f = sigmoid(slice_dim1(gates, Ch, 2 * Ch));
  Tensor o = sigmoid(slice_dim1(gates, 2 * Ch, 3 * Ch));
  Tensor g = tanh(slice_dim1(gates, 3 * Ch, 4 * Ch));
  Tensor c_next = add(mul(f, s.c), mul(i, g));
  Tensor h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

}  // namespace panofc
