#pragma once

// k-sparse autoencoder forward pass.
//
//   encode_train(z)     = TopK(ReLU(W_enc (z - b_pre) + b_enc))
//   encode_inference(z) =      ReLU(W_enc (z - b_pre) + b_enc)
//   decode(h)           = W_dec h + b_pre
//
// Parameters are stored in float; the double instantiation exists for
// gradient checking. Reductions accumulate in double for both.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace saesteer {

template <class Real>
struct BasicSaeParams {
  std::size_t d = 0;  // input feature dimension
  std::size_t m = 0;  // latent dimension
  std::size_t k = 0;  // Top-k sparsity
  bool normalize_decoder = false;

  std::vector<Real> w_enc;  // m x d, row-major
  std::vector<Real> b_enc;  // m
  std::vector<Real> w_dec;  // d x m, row-major
  std::vector<Real> b_pre;  // d

  static BasicSaeParams zeros(std::size_t d, std::size_t m, std::size_t k);

  std::size_t expansion_factor() const { return d == 0 ? 0 : m / d; }

  std::span<const Real> encoder_row(std::size_t latent) const {
    return {w_enc.data() + latent * d, d};
  }
  std::span<Real> encoder_row(std::size_t latent) { return {w_enc.data() + latent * d, d}; }
  std::span<const Real> decoder_row(std::size_t feature) const {
    return {w_dec.data() + feature * m, m};
  }
  std::span<Real> decoder_row(std::size_t feature) { return {w_dec.data() + feature * m, m}; }
  Real decoder_at(std::size_t feature, std::size_t latent) const {
    return w_dec[feature * m + latent];
  }

  // Throws ValidationError on any broken invariant: shapes, m >= k >= 1,
  // m a multiple of d, finite entries, unit decoder columns (1e-6) when
  // normalize_decoder is set.
  void validate() const;

  // Euclidean norm of decoder column `latent`, 64-bit accumulation.
  double decoder_column_norm(std::size_t latent) const;
  void normalize_decoder_columns();

  template <class Other>
  BasicSaeParams<Other> cast() const {
    BasicSaeParams<Other> out;
    out.d = d;
    out.m = m;
    out.k = k;
    out.normalize_decoder = normalize_decoder;
    out.w_enc.assign(w_enc.begin(), w_enc.end());
    out.b_enc.assign(b_enc.begin(), b_enc.end());
    out.w_dec.assign(w_dec.begin(), w_dec.end());
    out.b_pre.assign(b_pre.begin(), b_pre.end());
    return out;
  }

  bool operator==(const BasicSaeParams&) const = default;
};

using SaeParams = BasicSaeParams<float>;

enum class EncodeMode : std::uint8_t { TrainTopK, InferenceDense };

template <class Real>
struct BasicSparseCode {
  std::vector<Real> values;  // length m, dense
  EncodeMode mode = EncodeMode::InferenceDense;

  std::size_t nonzero_count() const;
};

using SparseCode = BasicSparseCode<float>;

// W_enc (z - b_pre) + b_enc, before ReLU.
template <class Real>
std::vector<Real> pre_activations(std::span<const Real> z, const BasicSaeParams<Real>& params);

// Indices of the k largest entries. Ties at equal value keep the lower index.
// Returned in rank order (largest first).
template <class Real>
std::vector<std::size_t> top_k_indices(std::span<const Real> values, std::size_t k);

// Zeroes every entry outside top_k_indices(values, k).
template <class Real>
void keep_top_k(std::span<Real> values, std::size_t k);

template <class Real>
BasicSparseCode<Real> encode_train(std::span<const Real> z, const BasicSaeParams<Real>& params);

template <class Real>
BasicSparseCode<Real> encode_inference(std::span<const Real> z,
                                       const BasicSaeParams<Real>& params);

template <class Real>
BasicSparseCode<Real> encode(std::span<const Real> z, const BasicSaeParams<Real>& params,
                             EncodeMode mode) {
  return mode == EncodeMode::TrainTopK ? encode_train(z, params) : encode_inference(z, params);
}

template <class Real>
std::vector<Real> decode(std::span<const Real> h, const BasicSaeParams<Real>& params);

template <class Real>
std::vector<Real> decode(const BasicSparseCode<Real>& h, const BasicSaeParams<Real>& params) {
  return decode(std::span<const Real>(h.values), params);
}

// W_dec h without the pre-bias. Used for steering shifts and the auxiliary loss.
template <class Real>
std::vector<Real> decode_linear(std::span<const Real> h, const BasicSaeParams<Real>& params);

// (1/n) sum ||z_i - decode(encode_train(z_i))||^2
template <class Real>
double mse_loss(std::span<const std::span<const Real>> batch, const BasicSaeParams<Real>& params);

template <class Real>
std::vector<std::span<const Real>> as_rows(const std::vector<std::vector<Real>>& rows) {
  return {rows.begin(), rows.end()};
}

}  // namespace saesteer
