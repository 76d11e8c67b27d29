#include "inferlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <thread>

#include "inferlab/fp16.hpp"

namespace inferlab::kernels {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

void check_gemm_shapes(const Tensor& a, const PackedMatrix& b, DType adt) {
  if (a.dtype() != adt) throw ValidationError("gemm: unexpected activation dtype");
  if (a.dims().size() != 2) throw ValidationError("gemm: A must be [M,K]");
  if (a.dims()[1] != b.k())
    throw ValidationError("gemm: inner dims disagree, A K=" + std::to_string(a.dims()[1]) +
                          " vs packed K=" + std::to_string(b.k()));
}

// Runs fn(m0, m1) over a disjoint row partition. Each worker owns its rows,
// so the result is identical to the single-threaded run.
void parallel_rows(std::int64_t m, int threads, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(m)));
  if (workers == 1) {
    fn(0, m);
    return;
  }
  std::vector<std::thread> pool;
  const std::int64_t chunk = ceil_div(m, workers);
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min<std::int64_t>(m, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(fn, lo, hi);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// PackedMatrix
// ---------------------------------------------------------------------------

PackedMatrix PackedMatrix::pack(const Tensor& w, TileParams tp, std::int32_t zp_w) {
  if (w.dims().size() != 2 || w.dims()[0] < 1 || w.dims()[1] < 1)
    throw ValidationError("pack: weights must be [N,K] with positive dims");
  if (tp.tile_n < 1 || tp.tile_k < 1) throw ValidationError("pack: tile sizes must be >= 1");
  if (w.dtype() != DType::f32 && w.dtype() != DType::f16 && w.dtype() != DType::i8)
    throw ValidationError("pack: unsupported weight dtype");

  PackedMatrix p;
  p.n_ = w.dims()[0];
  p.k_ = w.dims()[1];
  p.tp_ = tp;
  p.dtype_ = w.dtype();
  p.zp_w_ = zp_w;
  p.storage_.resize(w.nbytes());

  const std::size_t esz = dtype_size(w.dtype());
  const auto* src = w.raw().data();
  for (std::int64_t n = 0; n < p.n_; ++n)
    for (std::int64_t k = 0; k < p.k_; ++k)
      std::memcpy(p.storage_.data() + p.index(n, k) * esz,
                  src + (static_cast<std::size_t>(n) * p.k_ + k) * esz, esz);

  if (w.dtype() == DType::i8) {
    p.col_sums_.assign(static_cast<std::size_t>(p.n_), 0);
    const auto wv = w.as<std::int8_t>();
    for (std::int64_t n = 0; n < p.n_; ++n) {
      std::int32_t s = 0;
      for (std::int64_t k = 0; k < p.k_; ++k) s += wv[n * p.k_ + k];
      p.col_sums_[static_cast<std::size_t>(n)] = s;
    }
  }
  return p;
}

std::size_t PackedMatrix::index(std::int64_t n, std::int64_t k) const {
  const std::int64_t ti = n / tp_.tile_n;
  const std::int64_t tj = k / tp_.tile_k;
  const std::int64_t rows = std::min(tp_.tile_n, n_ - ti * tp_.tile_n);
  const std::int64_t cols = std::min(tp_.tile_k, k_ - tj * tp_.tile_k);
  // Row-blocks first (each spans the full K), then tiles left to right within
  // the block, compact for edge tiles.
  const std::int64_t base = ti * tp_.tile_n * k_ + rows * (tj * tp_.tile_k);
  return static_cast<std::size_t>(base + (n % tp_.tile_n) * cols + (k % tp_.tile_k));
}

Tensor PackedMatrix::unpack() const {
  Tensor out(dtype_, {n_, k_});
  const std::size_t esz = dtype_size(dtype_);
  for (std::int64_t n = 0; n < n_; ++n)
    for (std::int64_t k = 0; k < k_; ++k)
      std::memcpy(out.raw().data() + (static_cast<std::size_t>(n) * k_ + k) * esz,
                  storage_.data() + index(n, k) * esz, esz);
  return out;
}

// ---------------------------------------------------------------------------
// SparseResidual
// ---------------------------------------------------------------------------

SparseResidual SparseResidual::from_dense(const Tensor& outliers) {
  if (outliers.dtype() != DType::i32 || outliers.dims().size() != 2)
    throw ValidationError("SparseResidual: expected i32 [N,K]");
  SparseResidual r;
  r.n = outliers.dims()[0];
  r.k = outliers.dims()[1];
  r.rows.resize(static_cast<std::size_t>(r.n));
  const auto v = outliers.as<std::int32_t>();
  for (std::int64_t n = 0; n < r.n; ++n)
    for (std::int64_t k = 0; k < r.k; ++k)
      if (const auto x = v[n * r.k + k]; x != 0)
        r.rows[static_cast<std::size_t>(n)].push_back({k, x});
  return r;
}

Tensor SparseResidual::densify() const {
  Tensor out(DType::i32, {n, k});
  auto v = out.as<std::int32_t>();
  std::fill(v.begin(), v.end(), 0);
  for (std::int64_t row = 0; row < n; ++row)
    for (const auto& e : rows[static_cast<std::size_t>(row)]) v[row * k + e.k] = e.value;
  return out;
}

std::int64_t SparseResidual::nnz() const {
  std::int64_t c = 0;
  for (const auto& row : rows) c += static_cast<std::int64_t>(row.size());
  return c;
}

// ---------------------------------------------------------------------------
// Output pipeline
// ---------------------------------------------------------------------------

namespace {

double rescale_for(const OutputPipeline& pipe, std::int64_t n) {
  return pipe.rescale.size() == 1 ? pipe.rescale[0]
                                  : pipe.rescale[static_cast<std::size_t>(n)];
}

void check_pipeline(const OutputPipeline& pipe, std::int64_t n) {
  if (pipe.bias_i32 && static_cast<std::int64_t>(pipe.bias_i32->size()) != n)
    throw ValidationError("output pipeline: bias length != N");
  const bool needs_scale = pipe.terminal != OutputPipeline::Terminal::i32_pass;
  if (needs_scale && pipe.rescale.size() != 1 &&
      static_cast<std::int64_t>(pipe.rescale.size()) != n)
    throw ValidationError("output pipeline: missing rescale multipliers");
}

}  // namespace

Tensor apply_output_pipeline(const Tensor& acc, const OutputPipeline& pipe) {
  if (acc.dtype() != DType::i32 || acc.dims().size() != 2)
    throw ValidationError("apply_output_pipeline: accumulators must be i32 [M,N]");
  const std::int64_t m = acc.dims()[0];
  const std::int64_t n = acc.dims()[1];
  check_pipeline(pipe, n);
  const auto av = acc.as<std::int32_t>();

  switch (pipe.terminal) {
    case OutputPipeline::Terminal::i32_pass: {
      Tensor out(DType::i32, {m, n});
      auto ov = out.as<std::int32_t>();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          std::int32_t v = av[i * n + j];
          if (pipe.bias_i32) v += (*pipe.bias_i32)[static_cast<std::size_t>(j)];
          if (pipe.relu) v = std::max(v, 0);
          ov[i * n + j] = v;
        }
      return out;
    }
    case OutputPipeline::Terminal::u8_requant: {
      Tensor out(DType::u8, {m, n});
      auto ov = out.as<std::uint8_t>();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          std::int64_t v = av[i * n + j];
          if (pipe.bias_i32) v += (*pipe.bias_i32)[static_cast<std::size_t>(j)];
          const double real = static_cast<double>(v) * rescale_for(pipe, j);
          std::int64_t q = static_cast<std::int64_t>(round_half_to_even(real)) + pipe.zp_out;
          q = std::clamp<std::int64_t>(q, 0, 255);
          // Relu in the quantized domain is a clamp at the zero point.
          if (pipe.relu) q = std::max<std::int64_t>(q, pipe.zp_out);
          ov[i * n + j] = static_cast<std::uint8_t>(q);
        }
      return out;
    }
    case OutputPipeline::Terminal::f32_out: {
      Tensor out(DType::f32, {m, n});
      auto ov = out.as<float>();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          std::int64_t v = av[i * n + j];
          if (pipe.bias_i32) v += (*pipe.bias_i32)[static_cast<std::size_t>(j)];
          float real = static_cast<float>(static_cast<double>(v) * rescale_for(pipe, j));
          if (pipe.relu) real = std::max(real, 0.0f);
          ov[i * n + j] = real;
        }
      return out;
    }
  }
  throw ValidationError("unreachable pipeline terminal");
}

// ---------------------------------------------------------------------------
// Float GEMMs
// ---------------------------------------------------------------------------

namespace {

template <typename WeightAt>
Tensor gemm_float_impl(const Tensor& a, const PackedMatrix& b, const OutputPipeline* pipe,
                       int threads, WeightAt weight_at) {
  const std::int64_t m = a.dims()[0];
  const std::int64_t k = b.k();
  const std::int64_t n = b.n();
  if (pipe) {
    if (pipe->terminal != OutputPipeline::Terminal::f32_out)
      throw ValidationError("float gemm: pipeline terminal must be f32");
    if (pipe->bias_f32 && static_cast<std::int64_t>(pipe->bias_f32->size()) != n)
      throw ValidationError("float gemm: bias length != N");
  }
  const auto av = a.as<float>();
  Tensor out(DType::f32, {m, n});
  auto ov = out.as<float>();

  parallel_rows(m, threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (std::int64_t kk = 0; kk < k; ++kk) acc += av[i * k + kk] * weight_at(j, kk);
        if (pipe) {
          if (pipe->bias_f32) acc += (*pipe->bias_f32)[static_cast<std::size_t>(j)];
          if (pipe->relu) acc = std::max(acc, 0.0f);
        }
        ov[i * n + j] = acc;
      }
  });
  return out;
}

}  // namespace

Tensor gemm_fp32(const Tensor& a, const PackedMatrix& b, const OutputPipeline* pipe,
                 int threads) {
  check_gemm_shapes(a, b, DType::f32);
  if (b.dtype() != DType::f32) throw ValidationError("gemm_fp32: weights must be f32");
  return gemm_float_impl(a, b, pipe, threads,
                         [&b](std::int64_t n, std::int64_t k) { return b.at<float>(n, k); });
}

Tensor gemm_fp16w(const Tensor& a, const PackedMatrix& b, const OutputPipeline* pipe,
                  int threads) {
  check_gemm_shapes(a, b, DType::f32);
  if (b.dtype() != DType::f16) throw ValidationError("gemm_fp16w: weights must be f16");
  return gemm_float_impl(a, b, pipe, threads, [&b](std::int64_t n, std::int64_t k) {
    return fp16::fp16_to_fp32(b.at<std::uint16_t>(n, k));
  });
}

// ---------------------------------------------------------------------------
// Quantized GEMMs
// ---------------------------------------------------------------------------

Tensor gemm_u8i8_acc32(const Tensor& a, std::int32_t zp_a, const PackedMatrix& b,
                       const OutputPipeline& pipe, int threads) {
  check_gemm_shapes(a, b, DType::u8);
  if (b.dtype() != DType::i8) throw ValidationError("gemm_u8i8_acc32: weights must be i8");
  const std::int64_t m = a.dims()[0];
  const std::int64_t k = b.k();
  const std::int64_t n = b.n();
  const auto av = a.as<std::uint8_t>();

  Tensor acc(DType::i32, {m, n});
  auto cv = acc.as<std::int32_t>();
  parallel_rows(m, threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      std::int32_t row_sum = 0;
      for (std::int64_t kk = 0; kk < k; ++kk) row_sum += av[i * k + kk];
      for (std::int64_t j = 0; j < n; ++j) {
        std::int32_t raw = 0;
        for (std::int64_t kk = 0; kk < k; ++kk)
          raw += static_cast<std::int32_t>(av[i * k + kk]) * b.at<std::int8_t>(j, kk);
        // Σ(a−zp_a)(w−zp_w) via the expanded correction terms.
        const std::int64_t corrected =
            static_cast<std::int64_t>(raw) -
            static_cast<std::int64_t>(b.zp_w()) * row_sum -
            static_cast<std::int64_t>(zp_a) * b.col_sums()[static_cast<std::size_t>(j)] +
            static_cast<std::int64_t>(k) * zp_a * b.zp_w();
        cv[i * n + j] = static_cast<std::int32_t>(corrected);
      }
    }
  });
  return apply_output_pipeline(acc, pipe);
}

namespace {

std::int16_t sat_add_i16(std::int16_t acc, std::int32_t add, std::int64_t& saturations) {
  const std::int32_t wide = static_cast<std::int32_t>(acc) + add;
  if (wide > 32767) {
    ++saturations;
    return 32767;
  }
  if (wide < -32768) {
    ++saturations;
    return -32768;
  }
  return static_cast<std::int16_t>(wide);
}

}  // namespace

Acc16Result gemm_u8i8_acc16(const Tensor& a, std::int32_t zp_a, const PackedMatrix& b_main,
                            int spill_period) {
  check_gemm_shapes(a, b_main, DType::u8);
  if (b_main.dtype() != DType::i8) throw ValidationError("gemm_u8i8_acc16: weights must be i8");
  if (spill_period < 2) throw ValidationError("gemm_u8i8_acc16: spill period must be >= 2");
  const std::int64_t m = a.dims()[0];
  const std::int64_t k = b_main.k();
  const std::int64_t n = b_main.n();
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const auto w = b_main.at<std::int8_t>(j, kk);
      if (w < -64 || w > 63)
        throw ValidationError("gemm_u8i8_acc16: weight outside [-64,63] at [" +
                              std::to_string(j) + "," + std::to_string(kk) + "]");
    }
  const auto av = a.as<std::uint8_t>();

  Acc16Result result;
  result.acc = Tensor(DType::i32, {m, n});
  auto cv = result.acc.as<std::int32_t>();
  for (std::int64_t i = 0; i < m; ++i) {
    std::int32_t row_sum = 0;
    for (std::int64_t kk = 0; kk < k; ++kk) row_sum += av[i * k + kk];
    for (std::int64_t j = 0; j < n; ++j) {
      std::int32_t spill = 0;
      std::int16_t acc16 = 0;
      int macs = 0;
      // Adjacent k pairs: |a0·w0 + a1·w1| ≤ 255·64·2 = 32640 < 2¹⁵, so the
      // pair product itself cannot saturate; only accumulation can.
      for (std::int64_t kk = 0; kk + 1 < k; kk += 2) {
        const std::int32_t pair =
            static_cast<std::int32_t>(av[i * k + kk]) * b_main.at<std::int8_t>(j, kk) +
            static_cast<std::int32_t>(av[i * k + kk + 1]) * b_main.at<std::int8_t>(j, kk + 1);
        acc16 = sat_add_i16(acc16, pair, result.saturation_count);
        macs += 2;
        if (macs >= spill_period) {
          spill += acc16;
          acc16 = 0;
          macs = 0;
        }
      }
      if (k % 2 == 1) {
        const std::int32_t last =
            static_cast<std::int32_t>(av[i * k + (k - 1)]) * b_main.at<std::int8_t>(j, k - 1);
        acc16 = sat_add_i16(acc16, last, result.saturation_count);
      }
      spill += acc16;
      const std::int64_t corrected =
          static_cast<std::int64_t>(spill) -
          static_cast<std::int64_t>(b_main.zp_w()) * row_sum -
          static_cast<std::int64_t>(zp_a) * b_main.col_sums()[static_cast<std::size_t>(j)] +
          static_cast<std::int64_t>(k) * zp_a * b_main.zp_w();
      cv[i * n + j] = static_cast<std::int32_t>(corrected);
    }
  }
  return result;
}

Tensor spmm_outlier(const Tensor& a, std::int32_t zp_a, const SparseResidual& r) {
  if (a.dtype() != DType::u8 || a.dims().size() != 2)
    throw ValidationError("spmm_outlier: A must be u8 [M,K]");
  const std::int64_t m = a.dims()[0];
  const std::int64_t k = a.dims()[1];
  if (k != r.k) throw ValidationError("spmm_outlier: reduction dims disagree");
  const auto av = a.as<std::uint8_t>();

  Tensor out(DType::i32, {m, r.n});
  auto ov = out.as<std::int32_t>();
  std::fill(ov.begin(), ov.end(), 0);
  for (std::int64_t j = 0; j < r.n; ++j) {
    for (const auto& e : r.rows[static_cast<std::size_t>(j)]) {
      if (e.k < 0 || e.k >= k) throw ValidationError("spmm_outlier: index out of range");
      for (std::int64_t i = 0; i < m; ++i)
        ov[i * r.n + j] +=
            (static_cast<std::int32_t>(av[i * k + e.k]) - zp_a) * e.value;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

// Row-major decode of a flat index into coordinates.
void decode(std::int64_t flat, const std::vector<std::int64_t>& dims,
            std::vector<std::int64_t>& coord) {
  for (std::size_t d = dims.size(); d-- > 0;) {
    coord[d] = flat % dims[d];
    flat /= dims[d];
  }
}

}  // namespace

Tensor im2col(const Tensor& input, const ir::ConvSpec& spec, std::int64_t group,
              double pad_value) {
  if (group < 0 || group >= spec.groups) throw ValidationError("im2col: group out of range");
  if (input.dtype() != DType::f32 && input.dtype() != DType::u8)
    throw ValidationError("im2col: input must be f32 or u8");
  const auto rank = spec.in_spatial.size();
  const std::int64_t d = spec.group_width();
  const std::int64_t positions = spec.out_positions();
  const std::int64_t kvol = spec.kernel_volume();
  const std::int64_t m = spec.batch * positions;
  const std::int64_t kg = d * kvol;

  std::int64_t in_positions = 1;
  for (auto s : spec.in_spatial) in_positions *= s;

  Tensor out(input.dtype(), {m, kg});
  std::vector<std::int64_t> ocoord(rank), koff(rank), icoord(rank);

  auto fill = [&](auto in_view, auto out_view, auto pad) {
    for (std::int64_t b = 0; b < spec.batch; ++b) {
      for (std::int64_t pos = 0; pos < positions; ++pos) {
        decode(pos, spec.out_spatial, ocoord);
        const std::int64_t row = b * positions + pos;
        for (std::int64_t c = 0; c < d; ++c) {
          const std::int64_t cin = group * d + c;
          for (std::int64_t kv = 0; kv < kvol; ++kv) {
            decode(kv, spec.kernel, koff);
            bool inside = true;
            for (std::size_t ax = 0; ax < rank; ++ax) {
              icoord[ax] = ocoord[ax] * spec.stride[ax] - spec.pad[ax] + koff[ax];
              inside = inside && icoord[ax] >= 0 && icoord[ax] < spec.in_spatial[ax];
            }
            auto val = pad;
            if (inside) {
              std::int64_t flat = (b * spec.in_channels + cin);
              for (std::size_t ax = 0; ax < rank; ++ax)
                flat = flat * spec.in_spatial[ax] + icoord[ax];
              val = in_view[flat];
            }
            out_view[row * kg + c * kvol + kv] = val;
          }
        }
      }
    }
  };

  if (input.dtype() == DType::f32)
    fill(input.as<float>(), out.as<float>(), static_cast<float>(pad_value));
  else
    fill(input.as<std::uint8_t>(), out.as<std::uint8_t>(),
         static_cast<std::uint8_t>(pad_value));
  return out;
}

namespace {

// Per-channel pipeline entries for one group's channel range [n0, n0+ng).
OutputPipeline slice_pipeline(const OutputPipeline& pipe, std::int64_t n0, std::int64_t ng) {
  OutputPipeline s = pipe;
  if (pipe.bias_i32 && static_cast<std::int64_t>(pipe.bias_i32->size()) > ng)
    s.bias_i32 = std::vector<std::int32_t>(pipe.bias_i32->begin() + n0,
                                           pipe.bias_i32->begin() + n0 + ng);
  if (pipe.bias_f32 && static_cast<std::int64_t>(pipe.bias_f32->size()) > ng)
    s.bias_f32 = std::vector<float>(pipe.bias_f32->begin() + n0,
                                    pipe.bias_f32->begin() + n0 + ng);
  if (pipe.rescale.size() > 1 && static_cast<std::int64_t>(pipe.rescale.size()) > ng)
    s.rescale = std::vector<double>(pipe.rescale.begin() + n0, pipe.rescale.begin() + n0 + ng);
  return s;
}

Tensor group_weight_matrix(const Tensor& weights, const ir::ConvSpec& spec,
                           std::int64_t group) {
  const std::int64_t ng = spec.out_channels / spec.groups;
  const std::int64_t kg = spec.group_width() * spec.kernel_volume();
  Tensor w(weights.dtype(), {ng, kg});
  const std::size_t esz = dtype_size(weights.dtype());
  std::memcpy(w.raw().data(),
              weights.raw().data() + static_cast<std::size_t>(group * ng * kg) * esz,
              static_cast<std::size_t>(ng * kg) * esz);
  return w;
}

template <typename Gemm>
Tensor conv_groups(const Tensor& input, const Tensor& weights, const ir::ConvSpec& spec,
                   DType out_dtype, Gemm gemm_group) {
  std::vector<std::int64_t> out_dims = {spec.batch, spec.out_channels};
  out_dims.insert(out_dims.end(), spec.out_spatial.begin(), spec.out_spatial.end());
  Tensor out(out_dtype, out_dims);

  const std::int64_t ng = spec.out_channels / spec.groups;
  const std::int64_t positions = spec.out_positions();
  const std::size_t esz = dtype_size(out_dtype);
  auto* ov = out.raw().data();

  for (std::int64_t g = 0; g < spec.groups; ++g) {
    const Tensor wg = group_weight_matrix(weights, spec, g);
    const Tensor cg = gemm_group(g, wg);  // [batch*positions, ng]
    const auto* cv = cg.raw().data();
    for (std::int64_t b = 0; b < spec.batch; ++b)
      for (std::int64_t n = 0; n < ng; ++n)
        for (std::int64_t p = 0; p < positions; ++p) {
          const std::int64_t src = (b * positions + p) * ng + n;
          const std::int64_t dst = (b * spec.out_channels + g * ng + n) * positions + p;
          std::memcpy(ov + dst * esz, cv + src * esz, esz);
        }
  }
  return out;
}

}  // namespace

Tensor conv_im2col_f32(const Tensor& input, const Tensor& weights, const ir::ConvSpec& spec,
                       const OutputPipeline* pipe) {
  const std::int64_t ng = spec.out_channels / spec.groups;
  return conv_groups(input, weights, spec, DType::f32, [&](std::int64_t g, const Tensor& wg) {
    const Tensor a = im2col(input, spec, g, 0.0);
    const OutputPipeline sliced =
        pipe ? slice_pipeline(*pipe, g * ng, ng) : OutputPipeline{};
    return gemm_fp32(a, PackedMatrix::pack(wg), pipe ? &sliced : nullptr);
  });
}

Tensor conv_im2col_u8(const Tensor& input, std::int32_t zp_a, const Tensor& weights,
                      std::int32_t zp_w, const ir::ConvSpec& spec,
                      const OutputPipeline& pipe) {
  const std::int64_t ng = spec.out_channels / spec.groups;
  DType out_dtype = pipe.terminal == OutputPipeline::Terminal::u8_requant ? DType::u8
                    : pipe.terminal == OutputPipeline::Terminal::f32_out  ? DType::f32
                                                                          : DType::i32;
  return conv_groups(input, weights, spec, out_dtype, [&](std::int64_t g, const Tensor& wg) {
    const Tensor a = im2col(input, spec, g, static_cast<double>(zp_a));
    const OutputPipeline sliced = slice_pipeline(pipe, g * ng, ng);
    return gemm_u8i8_acc32(a, zp_a, PackedMatrix::pack(wg, {}, zp_w), sliced);
  });
}

namespace {

void check_depthwise(const Tensor& weights, const ir::ConvSpec& spec) {
  if (!spec.depthwise())
    throw ValidationError("depthwise kernel requires G == C_i == C_o");
  if (weights.dims().empty() || weights.dims()[0] != spec.out_channels)
    throw ValidationError("depthwise kernel: weights/channel mismatch");
}

}  // namespace

Tensor depthwise_conv_direct_f32(const Tensor& input, const Tensor& weights,
                                 const ir::ConvSpec& spec, const OutputPipeline* pipe) {
  check_depthwise(weights, spec);
  const auto rank = spec.in_spatial.size();
  const std::int64_t positions = spec.out_positions();
  const std::int64_t kvol = spec.kernel_volume();
  const auto in = input.as<float>();
  const auto wv = weights.as<float>();

  std::vector<std::int64_t> out_dims = {spec.batch, spec.out_channels};
  out_dims.insert(out_dims.end(), spec.out_spatial.begin(), spec.out_spatial.end());
  Tensor out(DType::f32, out_dims);
  auto ov = out.as<float>();

  std::vector<std::int64_t> ocoord(rank), koff(rank), icoord(rank);
  for (std::int64_t b = 0; b < spec.batch; ++b)
    for (std::int64_t c = 0; c < spec.out_channels; ++c)
      for (std::int64_t pos = 0; pos < positions; ++pos) {
        decode(pos, spec.out_spatial, ocoord);
        float acc = 0.0f;
        // Padding contributes explicit 0.0f·w terms so the adds are the same
        // ones the im2col path performs, in the same order.
        for (std::int64_t kv = 0; kv < kvol; ++kv) {
          decode(kv, spec.kernel, koff);
          bool inside = true;
          for (std::size_t ax = 0; ax < rank; ++ax) {
            icoord[ax] = ocoord[ax] * spec.stride[ax] - spec.pad[ax] + koff[ax];
            inside = inside && icoord[ax] >= 0 && icoord[ax] < spec.in_spatial[ax];
          }
          float a = 0.0f;
          if (inside) {
            std::int64_t flat = b * spec.in_channels + c;
            for (std::size_t ax = 0; ax < rank; ++ax)
              flat = flat * spec.in_spatial[ax] + icoord[ax];
            a = in[flat];
          }
          acc += a * wv[c * kvol + kv];
        }
        if (pipe) {
          if (pipe->bias_f32) acc += (*pipe->bias_f32)[static_cast<std::size_t>(c)];
          if (pipe->relu) acc = std::max(acc, 0.0f);
        }
        ov[(b * spec.out_channels + c) * positions + pos] = acc;
      }
  return out;
}

Tensor depthwise_conv_direct_u8(const Tensor& input, std::int32_t zp_a, const Tensor& weights,
                                std::int32_t zp_w, const ir::ConvSpec& spec,
                                const OutputPipeline& pipe) {
  check_depthwise(weights, spec);
  const auto rank = spec.in_spatial.size();
  const std::int64_t positions = spec.out_positions();
  const std::int64_t kvol = spec.kernel_volume();
  const auto in = input.as<std::uint8_t>();
  const auto wv = weights.as<std::int8_t>();

  Tensor acc(DType::i32, {spec.batch * positions, spec.out_channels});
  auto accv = acc.as<std::int32_t>();

  std::vector<std::int64_t> ocoord(rank), koff(rank), icoord(rank);
  for (std::int64_t b = 0; b < spec.batch; ++b)
    for (std::int64_t c = 0; c < spec.out_channels; ++c) {
      std::int32_t wsum = 0;
      for (std::int64_t kv = 0; kv < kvol; ++kv) wsum += wv[c * kvol + kv];
      for (std::int64_t pos = 0; pos < positions; ++pos) {
        decode(pos, spec.out_spatial, ocoord);
        std::int32_t raw = 0;
        std::int32_t asum = 0;
        for (std::int64_t kv = 0; kv < kvol; ++kv) {
          decode(kv, spec.kernel, koff);
          bool inside = true;
          for (std::size_t ax = 0; ax < rank; ++ax) {
            icoord[ax] = ocoord[ax] * spec.stride[ax] - spec.pad[ax] + koff[ax];
            inside = inside && icoord[ax] >= 0 && icoord[ax] < spec.in_spatial[ax];
          }
          std::int32_t a = zp_a;  // padding reads the zero point
          if (inside) {
            std::int64_t flat = b * spec.in_channels + c;
            for (std::size_t ax = 0; ax < rank; ++ax)
              flat = flat * spec.in_spatial[ax] + icoord[ax];
            a = in[flat];
          }
          raw += a * wv[c * kvol + kv];
          asum += a;
        }
        const std::int64_t corrected = static_cast<std::int64_t>(raw) -
                                       static_cast<std::int64_t>(zp_w) * asum -
                                       static_cast<std::int64_t>(zp_a) * wsum +
                                       static_cast<std::int64_t>(kvol) * zp_a * zp_w;
        accv[(b * positions + pos) * spec.out_channels + c] =
            static_cast<std::int32_t>(corrected);
      }
    }

  const Tensor piped = apply_output_pipeline(acc, pipe);
  // [batch*positions, C] -> [batch, C, positions]
  std::vector<std::int64_t> out_dims = {spec.batch, spec.out_channels};
  out_dims.insert(out_dims.end(), spec.out_spatial.begin(), spec.out_spatial.end());
  Tensor out(piped.dtype(), out_dims);
  const std::size_t esz = dtype_size(piped.dtype());
  const auto* src = piped.raw().data();
  auto* dst = out.raw().data();
  for (std::int64_t b = 0; b < spec.batch; ++b)
    for (std::int64_t c = 0; c < spec.out_channels; ++c)
      for (std::int64_t p = 0; p < positions; ++p)
        std::memcpy(dst + ((b * spec.out_channels + c) * positions + p) * esz,
                    src + ((b * positions + p) * spec.out_channels + c) * esz, esz);
  return out;
}

// ---------------------------------------------------------------------------
// SparseLengthsSum
// ---------------------------------------------------------------------------

Tensor sparse_lengths_sum(const Tensor& table, const Tensor& indices, const Tensor& lengths) {
  if (table.dims().size() != 2) throw ValidationError("sparse_lengths_sum: table must be 2D");
  if (indices.dtype() != DType::i32 || lengths.dtype() != DType::i32)
    throw ValidationError("sparse_lengths_sum: indices and lengths must be i32");
  const auto idx = indices.as<std::int32_t>();
  const auto len = lengths.as<std::int32_t>();
  std::int64_t total = 0;
  for (auto l : len) {
    if (l < 0) throw ValidationError("sparse_lengths_sum: negative segment length");
    total += l;
  }
  if (total != static_cast<std::int64_t>(idx.size()))
    throw ValidationError("sparse_lengths_sum: lengths sum to " + std::to_string(total) +
                          " but there are " + std::to_string(idx.size()) + " indices");

  const std::int64_t rows = table.dims()[0];
  const bool quantized = table.dtype() == DType::u8;
  if (!quantized && table.dtype() != DType::f32)
    throw ValidationError("sparse_lengths_sum: table must be f32 or row-quantized u8");
  const std::int64_t d = quantized ? table.dims()[1] - 8 : table.dims()[1];
  if (d < 1) throw ValidationError("sparse_lengths_sum: table row too small");

  Tensor out(DType::f32, {static_cast<std::int64_t>(len.size()), d});
  auto ov = out.as<float>();
  std::fill(ov.begin(), ov.end(), 0.0f);

  std::int64_t cursor = 0;
  for (std::size_t s = 0; s < len.size(); ++s) {
    for (std::int32_t e = 0; e < len[s]; ++e, ++cursor) {
      const std::int64_t r = idx[cursor];
      if (r < 0 || r >= rows)
        throw ValidationError("sparse_lengths_sum: index " + std::to_string(r) +
                              " out of bounds for " + std::to_string(rows) + " rows");
      if (quantized) {
        const auto* row =
            reinterpret_cast<const std::uint8_t*>(table.raw().data()) + r * (d + 8);
        float scale, bias;
        std::memcpy(&scale, row + d, sizeof(float));
        std::memcpy(&bias, row + d + 4, sizeof(float));
        for (std::int64_t c = 0; c < d; ++c)
          ov[s * d + c] += static_cast<float>(row[c]) * scale + bias;
      } else {
        const auto tv = table.as<float>();
        for (std::int64_t c = 0; c < d; ++c) ov[s * d + c] += tv[r * d + c];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// fp16 tensor converters
// ---------------------------------------------------------------------------

Tensor tensor_to_fp16(const Tensor& f32) {
  if (f32.dtype() != DType::f32) throw ValidationError("tensor_to_fp16: expected f32");
  Tensor out(DType::f16, f32.dims());
  const auto in = f32.as<float>();
  auto ov = out.as<std::uint16_t>();
  for (std::size_t i = 0; i < in.size(); ++i) ov[i] = fp16::fp32_to_fp16(in[i]);
  return out;
}

Tensor tensor_from_fp16(const Tensor& f16) {
  if (f16.dtype() != DType::f16) throw ValidationError("tensor_from_fp16: expected f16");
  Tensor out(DType::f32, f16.dims());
  const auto in = f16.as<std::uint16_t>();
  auto ov = out.as<float>();
  for (std::size_t i = 0; i < in.size(); ++i) ov[i] = fp16::fp16_to_fp32(in[i]);
  return out;
}

}  // namespace inferlab::kernels
