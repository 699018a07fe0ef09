#include "saesteer/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

template <class Real>
bool all_finite(const std::vector<Real>& v) {
  return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
}

template <class Real>
double squared_error(std::span<const Real> a, std::span<const Real> b) {
  if constexpr (std::is_same_v<Real, float>) {
    return kernels::squared_distance(a, b);
  } else {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      sum += diff * diff;
    }
    return sum;
  }
}

}  // namespace

template <class Real>
BasicSaeParams<Real> BasicSaeParams<Real>::zeros(std::size_t d, std::size_t m, std::size_t k) {
  BasicSaeParams p;
  p.d = d;
  p.m = m;
  p.k = k;
  p.w_enc.assign(m * d, Real(0));
  p.b_enc.assign(m, Real(0));
  p.w_dec.assign(d * m, Real(0));
  p.b_pre.assign(d, Real(0));
  return p;
}

template <class Real>
void BasicSaeParams<Real>::validate() const {
  if (d == 0 || m == 0) throw ValidationError("autoencoder dimensions must be positive");
  if (k < 1 || k > m) {
    throw ValidationError("sparsity k=" + std::to_string(k) + " must satisfy 1 <= k <= m=" +
                          std::to_string(m));
  }
  if (m % d != 0) {
    throw ValidationError("latent dimension m=" + std::to_string(m) +
                          " is not a multiple of d=" + std::to_string(d));
  }
  check_dimension("W_enc", m * d, w_enc.size());
  check_dimension("b_enc", m, b_enc.size());
  check_dimension("W_dec", d * m, w_dec.size());
  check_dimension("b_pre", d, b_pre.size());
  if (!all_finite(w_enc) || !all_finite(b_enc) || !all_finite(w_dec) || !all_finite(b_pre)) {
    throw ValidationError("autoencoder parameters contain non-finite entries");
  }
  if (normalize_decoder) {
    for (std::size_t j = 0; j < m; ++j) {
      const double norm = decoder_column_norm(j);
      if (std::abs(norm - 1.0) > 1e-6) {
        throw ValidationError("decoder column " + std::to_string(j) + " has norm " +
                              std::to_string(norm) + " but decoder normalization is on");
      }
    }
  }
}

template <class Real>
double BasicSaeParams<Real>::decoder_column_norm(std::size_t latent) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double v = w_dec[i * m + latent];
    sum += v * v;
  }
  return std::sqrt(sum);
}

template <class Real>
void BasicSaeParams<Real>::normalize_decoder_columns() {
  for (std::size_t j = 0; j < m; ++j) {
    const double norm = decoder_column_norm(j);
    if (norm == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i) {
      w_dec[i * m + j] = static_cast<Real>(w_dec[i * m + j] / norm);
    }
  }
}

template <class Real>
std::size_t BasicSparseCode<Real>::nonzero_count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](Real v) { return v != Real(0); }));
}

template <class Real>
std::vector<Real> pre_activations(std::span<const Real> z, const BasicSaeParams<Real>& params) {
  check_dimension("input feature vector", params.d, z.size());
  std::vector<Real> centered(params.d);
  for (std::size_t i = 0; i < params.d; ++i) {
    if (!std::isfinite(z[i])) {
      throw ValidationError("input feature vector has a non-finite entry at index " +
                            std::to_string(i));
    }
    centered[i] = z[i] - params.b_pre[i];
  }
  std::vector<Real> out(params.m);
  const std::span<const Real> x(centered);
  for (std::size_t j = 0; j < params.m; ++j) {
    out[j] = static_cast<Real>(kernels::dot(params.encoder_row(j), x) +
                               static_cast<double>(params.b_enc[j]));
  }
  return out;
}

template <class Real>
std::vector<std::size_t> top_k_indices(std::span<const Real> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, values.size());
  const auto ranks_before = [&](std::size_t a, std::size_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    ranks_before);
  order.resize(k);
  return order;
}

template <class Real>
void keep_top_k(std::span<Real> values, std::size_t k) {
  if (k >= values.size()) return;
  const auto keep = top_k_indices(std::span<const Real>(values), k);
  std::vector<Real> kept(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) kept[r] = values[keep[r]];
  std::fill(values.begin(), values.end(), Real(0));
  for (std::size_t r = 0; r < keep.size(); ++r) values[keep[r]] = kept[r];
}

template <class Real>
BasicSparseCode<Real> encode_inference(std::span<const Real> z,
                                       const BasicSaeParams<Real>& params) {
  BasicSparseCode<Real> code{pre_activations(z, params), EncodeMode::InferenceDense};
  for (auto& v : code.values) v = std::max(v, Real(0));
  return code;
}

template <class Real>
BasicSparseCode<Real> encode_train(std::span<const Real> z, const BasicSaeParams<Real>& params) {
  BasicSparseCode<Real> code = encode_inference(z, params);
  code.mode = EncodeMode::TrainTopK;
  keep_top_k(std::span<Real>(code.values), params.k);
  return code;
}

template <class Real>
std::vector<Real> decode_linear(std::span<const Real> h, const BasicSaeParams<Real>& params) {
  check_dimension("sparse code", params.m, h.size());
  std::vector<Real> out(params.d);
  for (std::size_t i = 0; i < params.d; ++i) {
    out[i] = static_cast<Real>(kernels::dot(params.decoder_row(i), h));
  }
  return out;
}

template <class Real>
std::vector<Real> decode(std::span<const Real> h, const BasicSaeParams<Real>& params) {
  check_dimension("sparse code", params.m, h.size());
  std::vector<Real> out(params.d);
  for (std::size_t i = 0; i < params.d; ++i) {
    out[i] = static_cast<Real>(kernels::dot(params.decoder_row(i), h) +
                               static_cast<double>(params.b_pre[i]));
  }
  return out;
}

template <class Real>
double mse_loss(std::span<const std::span<const Real>> batch, const BasicSaeParams<Real>& params) {
  if (batch.empty()) throw ValidationError("mse_loss requires a non-empty batch");
  double total = 0.0;
  for (const auto& z : batch) {
    const auto code = encode_train(z, params);
    const auto recon = decode(code, params);
    total += squared_error<Real>(z, recon);
  }
  return total / static_cast<double>(batch.size());
}

#define SAESTEER_INSTANTIATE(Real)                                                              \
  template struct BasicSaeParams<Real>;                                                         \
  template struct BasicSparseCode<Real>;                                                        \
  template std::vector<Real> pre_activations(std::span<const Real>,                             \
                                             const BasicSaeParams<Real>&);                      \
  template std::vector<std::size_t> top_k_indices(std::span<const Real>, std::size_t);          \
  template void keep_top_k(std::span<Real>, std::size_t);                                       \
  template BasicSparseCode<Real> encode_train(std::span<const Real>,                            \
                                              const BasicSaeParams<Real>&);                     \
  template BasicSparseCode<Real> encode_inference(std::span<const Real>,                        \
                                                  const BasicSaeParams<Real>&);                 \
  template std::vector<Real> decode(std::span<const Real>, const BasicSaeParams<Real>&);        \
  template std::vector<Real> decode_linear(std::span<const Real>, const BasicSaeParams<Real>&); \
  template double mse_loss(std::span<const std::span<const Real>>, const BasicSaeParams<Real>&);

SAESTEER_INSTANTIATE(float)
SAESTEER_INSTANTIATE(double)

#undef SAESTEER_INSTANTIATE

}  // namespace saesteer
