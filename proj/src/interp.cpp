#include "inferlab/interp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "inferlab/kernels.hpp"
#include "json.hpp"

namespace inferlab::interp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

// Cost of timing an empty section; reported alongside the run so readers can
// judge how much of a tiny op's wall time is measurement.
double measure_probe_overhead() {
  constexpr int kReps = 64;
  double acc = 0.0;
  for (int i = 0; i < kReps; ++i) {
    const auto t0 = Clock::now();
    const auto t1 = Clock::now();
    acc += seconds_between(t0, t1);
  }
  return acc / kReps;
}

const char* bound_label(roofline::Bound b) {
  switch (b) {
    case roofline::Bound::compute: return "compute";
    case roofline::Bound::dram: return "dram";
    case roofline::Bound::onchip: return "onchip";
  }
  return "compute";
}

// Tensor values live here during a run; weights resolve to the graph's
// attached data without copying.
class Env {
 public:
  explicit Env(const ir::Graph& g) : g_(g) {}

  const Tensor& get(const std::string& name) const {
    if (auto it = vals_.find(name); it != vals_.end()) return it->second;
    if (auto it = g_.weight_data.find(name); it != g_.weight_data.end()) return it->second;
    throw ValidationError("tensor '" + name + "' has no value");
  }
  void put(const std::string& name, Tensor t) { vals_[name] = std::move(t); }

 private:
  const ir::Graph& g_;
  std::map<std::string, Tensor> vals_;
};

const Tensor& f32_input(const Env& env, const ir::Node& node, std::size_t i) {
  const Tensor& t = env.get(node.inputs[i]);
  if (t.dtype() != DType::f32)
    throw ValidationError("node '" + node.name + "' input '" + node.inputs[i] +
                          "' must be f32 here, got " + std::string(dtype_name(t.dtype())));
  return t;
}

// Float weights as the kernels want them; f16 storage converts on the fly.
const Tensor& float_weight(const Env& env, const ir::Node& node, Tensor& scratch) {
  const Tensor& w = env.get(node.inputs[1]);
  if (w.dtype() == DType::f32) return w;
  if (w.dtype() == DType::f16) {
    scratch = kernels::tensor_from_fp16(w);
    return scratch;
  }
  throw ValidationError("node '" + node.name + "' weight '" + node.inputs[1] +
                        "' must be f32 or f16 (integer weights need a quantization plan)");
}

std::vector<float> bias_vector(const Env& env, const ir::Node& node) {
  const Tensor& b = f32_input(env, node, 2);
  const auto bv = b.as<float>();
  return {bv.begin(), bv.end()};
}

// ---------------------------------------------------------------------------
// f32 reference ops
// ---------------------------------------------------------------------------

Tensor exec_fc_f32(const ir::Node& node, const Env& env, int threads) {
  const Tensor& x = f32_input(env, node, 0);
  const Tensor& w = env.get(node.inputs[1]);
  if (w.dtype() != DType::f32 && w.dtype() != DType::f16)
    throw ValidationError("FC '" + node.name +
                          "': weights must be f32 or f16 (integer weights need a "
                          "quantization plan)");
  kernels::OutputPipeline pipe;
  pipe.terminal = kernels::OutputPipeline::Terminal::f32_out;
  if (node.inputs.size() > 2) pipe.bias_f32 = bias_vector(env, node);
  const auto packed = kernels::PackedMatrix::pack(w);
  return w.dtype() == DType::f16 ? kernels::gemm_fp16w(x, packed, &pipe, threads)
                                 : kernels::gemm_fp32(x, packed, &pipe, threads);
}

Tensor exec_conv_f32(const ir::Node& node, const ir::Graph& meta, const Env& env) {
  const Tensor& x = f32_input(env, node, 0);
  Tensor scratch;
  const Tensor& w = float_weight(env, node, scratch);
  const ir::ConvSpec spec = ir::conv_spec(node, meta);
  kernels::OutputPipeline pipe;
  pipe.terminal = kernels::OutputPipeline::Terminal::f32_out;
  if (node.inputs.size() > 2) pipe.bias_f32 = bias_vector(env, node);
  return spec.depthwise() ? kernels::depthwise_conv_direct_f32(x, w, spec, &pipe)
                          : kernels::conv_im2col_f32(x, w, spec, &pipe);
}

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(DType::f32, x.dims());
  const auto xv = x.as<float>();
  auto ov = out.as<float>();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  return out;
}

Tensor exec_relu(const ir::Node& node, const Env& env) {
  const Tensor& x = f32_input(env, node, 0);
  return map_unary(x, [](float v) { return std::max(v, 0.0f); });
}

Tensor exec_clip(const ir::Node& node, const Env& env) {
  const Tensor& x = f32_input(env, node, 0);
  const auto lo = static_cast<float>(
      node.attr_double("min", -std::numeric_limits<double>::infinity()));
  const auto hi = static_cast<float>(
      node.attr_double("max", std::numeric_limits<double>::infinity()));
  if (lo > hi) throw ValidationError("Clip '" + node.name + "': min exceeds max");
  return map_unary(x, [lo, hi](float v) { return std::min(std::max(v, lo), hi); });
}

Tensor exec_binary(const ir::Node& node, const Env& env) {
  const Tensor& a = f32_input(env, node, 0);
  const Tensor& b = f32_input(env, node, 1);
  Tensor out(DType::f32, a.dims());
  const auto av = a.as<float>();
  const auto bv = b.as<float>();
  auto ov = out.as<float>();
  if (node.op == ir::Op::Add)
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  else
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  return out;
}

Tensor exec_sum(const ir::Node& node, const Env& env) {
  Tensor out = f32_input(env, node, 0);  // copy of the first operand
  auto ov = out.as<float>();
  for (std::size_t i = 1; i < node.inputs.size(); ++i) {
    const auto xv = f32_input(env, node, i).as<float>();
    for (std::size_t e = 0; e < ov.size(); ++e) ov[e] += xv[e];
  }
  return out;
}

Tensor exec_spatial_bn(const ir::Node& node, const Env& env) {
  if (node.inputs.size() < 5)
    throw ValidationError("SpatialBN '" + node.name + "' needs x, scale, bias, mean, var");
  const Tensor& x = f32_input(env, node, 0);
  const auto sv = f32_input(env, node, 1).as<float>();
  const auto bv = f32_input(env, node, 2).as<float>();
  const auto mv = f32_input(env, node, 3).as<float>();
  const auto vv = f32_input(env, node, 4).as<float>();
  const double eps = node.attr_double("epsilon", 1e-5);

  const std::int64_t batch = x.dims()[0];
  const std::int64_t channels = x.dims()[1];
  const auto spatial =
      static_cast<std::int64_t>(x.elem_count()) / std::max<std::int64_t>(batch * channels, 1);
  Tensor out(DType::f32, x.dims());
  const auto xv = x.as<float>();
  auto ov = out.as<float>();
  for (std::int64_t c = 0; c < channels; ++c) {
    const float var_eps = vv[static_cast<std::size_t>(c)] + static_cast<float>(eps);
    if (!(var_eps > 0.0f))
      throw NumericError("SpatialBN '" + node.name + "': variance + epsilon must be positive");
    const float a = sv[static_cast<std::size_t>(c)] / std::sqrt(var_eps);
    const float b = bv[static_cast<std::size_t>(c)] - mv[static_cast<std::size_t>(c)] * a;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t base = (n * channels + c) * spatial;
      for (std::int64_t p = 0; p < spatial; ++p) {
        const auto i = static_cast<std::size_t>(base + p);
        ov[i] = xv[i] * a + b;
      }
    }
  }
  return out;
}

Tensor exec_softmax(const ir::Node& node, const Env& env) {
  const Tensor& x = f32_input(env, node, 0);
  const auto rank = static_cast<std::int64_t>(x.dims().size());
  const std::int64_t axis = node.attr_int("axis", rank - 1);
  if (axis < 0 || axis >= rank)
    throw ValidationError("Softmax '" + node.name + "' axis out of range");
  std::int64_t inner = 1;
  for (std::int64_t d = axis; d < rank; ++d) inner *= x.dims()[static_cast<std::size_t>(d)];
  const auto outer = static_cast<std::int64_t>(x.elem_count()) / inner;

  Tensor out(DType::f32, x.dims());
  const auto xv = x.as<float>();
  auto ov = out.as<float>();
  for (std::int64_t o = 0; o < outer; ++o) {
    const auto base = static_cast<std::size_t>(o * inner);
    float mx = xv[base];
    for (std::int64_t i = 1; i < inner; ++i)
      mx = std::max(mx, xv[base + static_cast<std::size_t>(i)]);
    float sum = 0.0f;
    for (std::int64_t i = 0; i < inner; ++i) {
      const float e = std::exp(xv[base + static_cast<std::size_t>(i)] - mx);
      ov[base + static_cast<std::size_t>(i)] = e;
      sum += e;
    }
    for (std::int64_t i = 0; i < inner; ++i) ov[base + static_cast<std::size_t>(i)] /= sum;
  }
  return out;
}

Tensor exec_concat(const ir::Node& node, const ir::Graph& meta, const Env& env) {
  const auto& spec = meta.tensor(node.outputs[0]);
  const Tensor& first = env.get(node.inputs[0]);
  const DType dt = first.dtype();
  const auto axis = node.attr_int("axis", 1);
  Tensor out(dt, spec.dims);

  const std::size_t esz = dtype_size(dt);
  std::int64_t outer = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= spec.dims[static_cast<std::size_t>(d)];
  std::size_t inner = esz;
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < spec.dims.size(); ++d)
    inner *= static_cast<std::size_t>(spec.dims[d]);
  const std::size_t out_stride = static_cast<std::size_t>(spec.dims[static_cast<std::size_t>(axis)]) * inner;

  std::byte* ob = out.raw().data();
  std::size_t off = 0;
  for (const auto& iname : node.inputs) {
    const Tensor& t = env.get(iname);
    if (t.dtype() != dt)
      throw ValidationError("Concat '" + node.name + "' input dtypes disagree");
    const std::size_t block =
        static_cast<std::size_t>(t.dims()[static_cast<std::size_t>(axis)]) * inner;
    const std::byte* ib = t.raw().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(ob + static_cast<std::size_t>(o) * out_stride + off,
                  ib + static_cast<std::size_t>(o) * block, block);
    off += block;
  }
  return out;
}

std::vector<Tensor> exec_split(const ir::Node& node, const ir::Graph& meta, const Env& env) {
  const Tensor& x = env.get(node.inputs[0]);
  const auto axis = node.attr_int("axis", 1);
  std::vector<std::int64_t> sizes;
  if (node.has_attr("split")) {
    sizes = node.attr_ints("split", node.outputs.size());
  } else {
    const auto parts = static_cast<std::int64_t>(node.outputs.size());
    sizes.assign(static_cast<std::size_t>(parts),
                 x.dims()[static_cast<std::size_t>(axis)] / parts);
  }

  const std::size_t esz = dtype_size(x.dtype());
  std::int64_t outer = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= x.dims()[static_cast<std::size_t>(d)];
  std::size_t inner = esz;
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < x.dims().size(); ++d)
    inner *= static_cast<std::size_t>(x.dims()[d]);
  const std::size_t in_stride =
      static_cast<std::size_t>(x.dims()[static_cast<std::size_t>(axis)]) * inner;

  std::vector<Tensor> outs;
  const std::byte* ib = x.raw().data();
  std::size_t off = 0;
  for (std::size_t oi = 0; oi < node.outputs.size(); ++oi) {
    Tensor out(x.dtype(), meta.tensor(node.outputs[oi]).dims);
    const std::size_t block = static_cast<std::size_t>(sizes[oi]) * inner;
    std::byte* ob = out.raw().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(ob + static_cast<std::size_t>(o) * block,
                  ib + static_cast<std::size_t>(o) * in_stride + off, block);
    off += block;
    outs.push_back(std::move(out));
  }
  return outs;
}

Tensor exec_flatten(const ir::Node& node, const ir::Graph& meta, const Env& env) {
  const Tensor& x = env.get(node.inputs[0]);
  Tensor out(x.dtype(), meta.tensor(node.outputs[0]).dims);
  std::memcpy(out.raw().data(), x.raw().data(), x.nbytes());
  return out;
}

Tensor exec_batch_matmul(const ir::Node& node, const ir::Graph& meta, const Env& env) {
  const Tensor& a = f32_input(env, node, 0);
  const Tensor& b = f32_input(env, node, 1);
  const auto rank = a.dims().size();
  const std::int64_t m = a.dims()[rank - 2];
  const std::int64_t k = a.dims()[rank - 1];
  const std::int64_t n = b.dims()[rank - 1];
  std::int64_t batch = 1;
  for (std::size_t d = 0; d + 2 < rank; ++d) batch *= a.dims()[d];

  Tensor out(DType::f32, meta.tensor(node.outputs[0]).dims);
  const auto av = a.as<float>();
  const auto bv = b.as<float>();
  auto ov = out.as<float>();
  for (std::int64_t t = 0; t < batch; ++t) {
    const float* pa = av.data() + t * m * k;
    const float* pb = bv.data() + t * k * n;
    float* po = ov.data() + t * m * n;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        float acc = 0.0f;
        for (std::int64_t kk = 0; kk < k; ++kk) acc += pa[i * k + kk] * pb[kk * n + j];
        po[i * n + j] = acc;
      }
  }
  return out;
}

Tensor exec_batch_gather(const ir::Node& node, const ir::Graph& meta, const Env& env) {
  const Tensor& data = env.get(node.inputs[0]);
  const Tensor& idx = env.get(node.inputs[1]);
  if (idx.dtype() != DType::i32)
    throw ValidationError("BatchGather '" + node.name + "' indices must be i32");
  const auto iv = idx.as<std::int32_t>();
  const std::int64_t batch = data.dims()[0];
  const std::int64_t rows = data.dims()[1];
  std::size_t rest = dtype_size(data.dtype());
  for (std::size_t d = 2; d < data.dims().size(); ++d)
    rest *= static_cast<std::size_t>(data.dims()[d]);

  Tensor out(data.dtype(), meta.tensor(node.outputs[0]).dims);
  const std::byte* ib = data.raw().data();
  std::byte* ob = out.raw().data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < iv.size(); ++i) {
      const std::int64_t j = iv[i];
      if (j < 0 || j >= rows)
        throw ValidationError("BatchGather '" + node.name + "' index out of range");
      std::memcpy(ob + (static_cast<std::size_t>(b) * iv.size() + i) * rest,
                  ib + static_cast<std::size_t>(b * rows + j) * rest, rest);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Quantized FC/Conv
// ---------------------------------------------------------------------------

struct QuantWeights {
  Tensor wq;  // i8, original weight dims
  std::vector<quant::QParams> params;
  std::int32_t zp_w = 0;
  std::vector<double> scales;  // one per slice
};

QuantWeights quantize_weights(const Tensor& w, const quant::LayerPlan& lp,
                              const std::string& node_name) {
  using Kind = quant::QGranularity::Kind;
  const auto& gran = lp.granularity;
  const bool kind_ok = gran.kind == Kind::per_tensor || gran.kind == Kind::per_row ||
                       (gran.kind == Kind::per_channel && gran.axis == 0);
  if (!kind_ok)
    throw ValidationError("plan layer '" + node_name +
                          "': weights quantize per tensor or along output channels");

  QuantWeights qw;
  qw.params = lp.params.empty()
                  ? quant::choose_qparams_tensor(w, gran, DType::i8, lp.symmetric)
                  : lp.params;
  if (static_cast<std::int64_t>(qw.params.size()) != gran.slices(w.dims()))
    throw ValidationError("plan layer '" + node_name +
                          "': params count does not match the weight's slice count");
  for (const auto& p : qw.params) {
    if (p.target != DType::i8)
      throw ValidationError("plan layer '" + node_name + "': weights must target i8");
    if (p.zero_point != qw.params[0].zero_point)
      throw ValidationError("plan layer '" + node_name +
                            "': weight zero points must agree across channels");
  }
  qw.zp_w = qw.params[0].zero_point;
  qw.wq = quant::quantize_affine(w, qw.params, gran);
  qw.scales.reserve(qw.params.size());
  for (const auto& p : qw.params) qw.scales.push_back(p.scale);
  return qw;
}

kernels::OutputPipeline make_quant_pipe(const QuantWeights& qw, const quant::LayerPlan& lp,
                                        const Tensor* bias) {
  kernels::OutputPipeline pipe;
  const std::size_t slices = qw.scales.size();
  pipe.rescale.resize(slices);
  if (lp.out_scale > 0) {
    pipe.terminal = kernels::OutputPipeline::Terminal::u8_requant;
    pipe.zp_out = lp.out_zero_point;
    for (std::size_t i = 0; i < slices; ++i)
      pipe.rescale[i] = lp.act_scale * qw.scales[i] / lp.out_scale;
  } else {
    pipe.terminal = kernels::OutputPipeline::Terminal::f32_out;
    for (std::size_t i = 0; i < slices; ++i) pipe.rescale[i] = lp.act_scale * qw.scales[i];
  }
  if (bias) {
    const auto bv = bias->as<float>();
    std::vector<std::int32_t> bq(bv.size());
    for (std::size_t j = 0; j < bv.size(); ++j) {
      const double s = lp.act_scale * qw.scales[slices == 1 ? 0 : j];
      double q = round_half_to_even(static_cast<double>(bv[j]) / s);
      q = std::clamp(q, -2147483648.0, 2147483647.0);
      bq[j] = static_cast<std::int32_t>(q);
    }
    pipe.bias_i32 = std::move(bq);
  }
  return pipe;
}

Tensor quantize_activations(const Tensor& x, const quant::LayerPlan& lp) {
  const quant::QParams ap{lp.act_scale, lp.act_zero_point, 0, 255, false, DType::u8};
  return quant::quantize_affine(x, {&ap, 1}, quant::QGranularity::per_tensor());
}

// Integer weights without the i8 storage clamp: on the outlier-split path the
// sparse residual is full-width, so values beyond the 8-bit range stay exact
// instead of saturating at the storage boundary.
Tensor quantize_weights_unclamped(const Tensor& w, const QuantWeights& qw,
                                  const quant::QGranularity& gran) {
  Tensor q(DType::i32, w.dims());
  const auto wv = w.as<float>();
  auto out = q.as<std::int32_t>();
  for (std::size_t i = 0; i < wv.size(); ++i) {
    const auto slice = gran.slice_of(static_cast<std::int64_t>(i), w.dims());
    const auto& p = qw.params[static_cast<std::size_t>(slice)];
    const double v = round_half_to_even(static_cast<double>(wv[i]) / p.scale) +
                     static_cast<double>(p.zero_point);
    out[i] = static_cast<std::int32_t>(std::clamp(v, -2147483648.0, 2147483647.0));
  }
  return q;
}

Tensor dequant_output(Tensor out, const quant::LayerPlan& lp) {
  if (out.dtype() != DType::u8) return out;
  const quant::QParams op{lp.out_scale, lp.out_zero_point, 0, 255, false, DType::u8};
  return quant::dequantize_affine(out, {&op, 1}, quant::QGranularity::per_tensor());
}

Tensor exec_fc_quant(const ir::Node& node, const Env& env, const quant::LayerPlan& lp,
                     int threads, std::int64_t* saturations) {
  const Tensor& x = f32_input(env, node, 0);
  Tensor scratch;
  const Tensor& w = float_weight(env, node, scratch);
  const QuantWeights qw = quantize_weights(w, lp, node.name);
  const Tensor xq = quantize_activations(x, lp);
  const Tensor* bias = node.inputs.size() > 2 ? &f32_input(env, node, 2) : nullptr;
  const kernels::OutputPipeline pipe = make_quant_pipe(qw, lp, bias);

  Tensor out;
  if (lp.split_outliers) {
    const quant::OutlierSplit os =
        quant::split_outliers(quantize_weights_unclamped(w, qw, lp.granularity));
    const auto packed = kernels::PackedMatrix::pack(os.main, {}, qw.zp_w);
    const auto r16 = kernels::gemm_u8i8_acc16(xq, lp.act_zero_point, packed);
    const Tensor rest = kernels::spmm_outlier(xq, lp.act_zero_point, os.outliers);
    Tensor acc(DType::i32, r16.acc.dims());
    const auto mv = r16.acc.as<std::int32_t>();
    const auto rv = rest.as<std::int32_t>();
    auto av = acc.as<std::int32_t>();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] = mv[i] + rv[i];
    *saturations = r16.saturation_count;
    out = kernels::apply_output_pipeline(acc, pipe);
  } else {
    const auto packed = kernels::PackedMatrix::pack(qw.wq, {}, qw.zp_w);
    out = kernels::gemm_u8i8_acc32(xq, lp.act_zero_point, packed, pipe, threads);
  }
  return dequant_output(std::move(out), lp);
}

Tensor exec_conv_quant(const ir::Node& node, const ir::Graph& meta, const Env& env,
                       const quant::LayerPlan& lp) {
  const Tensor& x = f32_input(env, node, 0);
  Tensor scratch;
  const Tensor& w = float_weight(env, node, scratch);
  const ir::ConvSpec spec = ir::conv_spec(node, meta);
  const QuantWeights qw = quantize_weights(w, lp, node.name);
  const Tensor xq = quantize_activations(x, lp);
  const Tensor* bias = node.inputs.size() > 2 ? &f32_input(env, node, 2) : nullptr;
  const kernels::OutputPipeline pipe = make_quant_pipe(qw, lp, bias);
  Tensor out = spec.depthwise()
                   ? kernels::depthwise_conv_direct_u8(xq, lp.act_zero_point, qw.wq,
                                                       qw.zp_w, spec, pipe)
                   : kernels::conv_im2col_u8(xq, lp.act_zero_point, qw.wq, qw.zp_w, spec,
                                             pipe);
  return dequant_output(std::move(out), lp);
}

// ---------------------------------------------------------------------------
// Dispatch and validation
// ---------------------------------------------------------------------------

std::vector<Tensor> execute_node(const ir::Node& node, const ir::Graph& meta, const Env& env,
                                 const RunOptions& opts, const quant::QuantPlan* plan,
                                 std::int64_t* saturations) {
  const quant::LayerPlan* lp = plan ? plan->find(node.name) : nullptr;
  const bool quantize = lp != nullptr && lp->quantize;
  switch (node.op) {
    case ir::Op::FC:
      return {quantize ? exec_fc_quant(node, env, *lp, opts.threads, saturations)
                       : exec_fc_f32(node, env, opts.threads)};
    case ir::Op::Conv:
      return {quantize ? exec_conv_quant(node, meta, env, *lp)
                       : exec_conv_f32(node, meta, env)};
    case ir::Op::SparseLengthsSum:
      return {kernels::sparse_lengths_sum(env.get(node.inputs[0]), env.get(node.inputs[1]),
                                          env.get(node.inputs[2]))};
    case ir::Op::Concat: return {exec_concat(node, meta, env)};
    case ir::Op::Split: return exec_split(node, meta, env);
    case ir::Op::Flatten: return {exec_flatten(node, meta, env)};
    case ir::Op::BatchMatMul: return {exec_batch_matmul(node, meta, env)};
    case ir::Op::BatchGather: return {exec_batch_gather(node, meta, env)};
    case ir::Op::Relu: return {exec_relu(node, env)};
    case ir::Op::Add:
    case ir::Op::Mul: return {exec_binary(node, env)};
    case ir::Op::Clip: return {exec_clip(node, env)};
    case ir::Op::Sum: return {exec_sum(node, env)};
    case ir::Op::SpatialBN: return {exec_spatial_bn(node, env)};
    case ir::Op::Softmax: return {exec_softmax(node, env)};
  }
  throw ValidationError("unreachable op in interpreter dispatch");
}

void validate_plan(const quant::QuantPlan& plan, const ir::Graph& meta) {
  std::map<std::string, const ir::Node*> by_name;
  for (const auto& n : meta.nodes) by_name[n.name] = &n;
  for (const auto& l : plan.layers) {
    const auto it = by_name.find(l.name);
    if (it == by_name.end())
      throw ValidationError("plan references unknown node '" + l.name + "'");
    if (!l.quantize) continue;
    const ir::Node& n = *it->second;
    if (n.op != ir::Op::FC && n.op != ir::Op::Conv)
      throw ValidationError("plan quantizes '" + l.name + "' but " +
                            std::string(ir::op_name(n.op)) + " has no quantized kernel");
    if (!(l.act_scale > 0) || !std::isfinite(l.act_scale))
      throw ValidationError("plan layer '" + l.name + "': act_scale must be positive");
    if (l.act_zero_point < 0 || l.act_zero_point > 255)
      throw ValidationError("plan layer '" + l.name + "': act_zero_point must be in [0,255]");
    if (l.out_scale < 0 || !std::isfinite(l.out_scale))
      throw ValidationError("plan layer '" + l.name + "': out_scale must be non-negative");
    if (l.out_scale > 0 && (l.out_zero_point < 0 || l.out_zero_point > 255))
      throw ValidationError("plan layer '" + l.name + "': out_zero_point must be in [0,255]");
    if (l.split_outliers && n.op != ir::Op::FC)
      throw ValidationError("plan layer '" + l.name +
                            "': outlier splitting is supported for FC only");
  }
}

std::vector<TensorMeta> tensor_metas(const std::vector<std::string>& names, const Env& env) {
  std::vector<TensorMeta> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    const Tensor& t = env.get(name);
    out.push_back({name, t.dims(), t.dtype()});
  }
  return out;
}

}  // namespace

RunResult run(const ir::Graph& g, const std::map<std::string, Tensor>& inputs,
              const RunOptions& opts, const std::vector<Observer*>& observers) {
  if (opts.threads < 1) throw ValidationError("threads must be >= 1");
  const auto diags = ir::validate_graph(g);
  if (!diags.empty())
    throw ValidationError("graph fails validation: [" + diags[0].code + "] " +
                          diags[0].message);

  // Shape-only copy: inferred dims for every tensor, no duplicated weight bytes.
  ir::Graph meta;
  meta.nodes = g.nodes;
  meta.tensors = g.tensors;
  meta.weights = g.weights;
  meta.inputs = g.inputs;
  meta.outputs = g.outputs;
  meta = ir::infer_shapes(meta);

  for (const auto& wname : meta.weights) {
    const auto it = g.weight_data.find(wname);
    if (it == g.weight_data.end())
      throw ValidationError("missing weight data for '" + wname + "'");
    const auto& spec = meta.tensor(wname);
    if (it->second.dims() != spec.dims || it->second.dtype() != spec.dtype)
      throw ValidationError("weight '" + wname + "' data does not match its declared spec");
  }
  for (const auto& iname : meta.inputs) {
    const auto it = inputs.find(iname);
    if (it == inputs.end()) throw ValidationError("missing graph input '" + iname + "'");
    const auto& spec = meta.tensor(iname);
    if (it->second.dims() != spec.dims)
      throw ValidationError("input '" + iname + "' dims do not match the graph");
    if (it->second.dtype() != spec.dtype)
      throw ValidationError("input '" + iname + "' dtype does not match the graph");
  }
  const quant::QuantPlan* plan = nullptr;
  if (opts.backend == Backend::quantized) {
    if (!opts.plan) throw ValidationError("quantized backend requires a quantization plan");
    plan = opts.plan;
    validate_plan(*plan, meta);
  }

  Env env(g);
  for (const auto& iname : meta.inputs) env.put(iname, inputs.at(iname));

  RunResult res;
  res.report.observer_overhead_s = opts.collect_timing ? measure_probe_overhead() : 0.0;

  for (const int ni : meta.topo_order()) {
    const ir::Node& node = meta.nodes[static_cast<std::size_t>(ni)];
    for (auto* ob : observers)
      if (ob) ob->on_node_start(node);

    std::int64_t saturations = 0;
    const auto t0 = Clock::now();
    std::vector<Tensor> outs = execute_node(node, meta, env, opts, plan, &saturations);
    const auto t1 = Clock::now();

    if (outs.size() != node.outputs.size())
      throw ValidationError("node '" + node.name + "' produced an unexpected output count");
    for (std::size_t oi = 0; oi < outs.size(); ++oi)
      env.put(node.outputs[oi], std::move(outs[oi]));

    const cost::OpCost c = cost::op_cost(node, meta);
    ObserverRecord rec;
    rec.node = node.name;
    rec.op = std::string(ir::op_name(node.op));
    rec.flops = static_cast<double>(c.flops);
    rec.weight_bytes = static_cast<double>(c.weight_bytes);
    rec.act_bytes = static_cast<double>(c.act_bytes());
    rec.saturations = saturations;
    const double compute_s =
        opts.host.peak_flops > 0 ? static_cast<double>(c.flops) / opts.host.peak_flops : 0.0;
    const double dram_s =
        opts.host.dram_bw > 0 ? static_cast<double>(c.total_bytes()) / opts.host.dram_bw : 0.0;
    rec.predicted_bound =
        compute_s >= dram_s ? roofline::Bound::compute : roofline::Bound::dram;
    if (opts.collect_timing) {
      rec.wall_s = seconds_between(t0, t1);
      if (rec.flops > 0 && rec.wall_s > 0) rec.attained_flops = rec.flops / rec.wall_s;
    }
    rec.inputs = tensor_metas(node.inputs, env);
    rec.outputs = tensor_metas(node.outputs, env);

    res.report.total_s += rec.wall_s;
    res.report.total_flops += rec.flops;
    res.report.records.push_back(std::move(rec));
    for (auto* ob : observers)
      if (ob) ob->on_node_end(res.report.records.back());
  }

  for (const auto& oname : meta.outputs) res.outputs.emplace(oname, env.get(oname));
  return res;
}

std::vector<OpShare> ExecutionReport::op_shares() const {
  std::map<std::string, double> time;
  std::map<std::string, std::int64_t> count;
  for (const auto& r : records) {
    time[r.op] += r.wall_s;
    ++count[r.op];
  }
  double total = 0.0;
  for (const auto& [op, t] : time) total += t;

  std::vector<OpShare> out;
  out.reserve(time.size());
  for (const auto& [op, t] : time) {
    OpShare s{op, t, 0.0};
    if (total > 0)
      s.share = t / total;
    else if (!records.empty())
      s.share = static_cast<double>(count[op]) / static_cast<double>(records.size());
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const OpShare& a, const OpShare& b) {
    if (a.share != b.share) return a.share > b.share;
    return a.op < b.op;
  });
  return out;
}

std::vector<Deviation> compare_predicted_measured(const ExecutionReport& report,
                                                  const roofline::AcceleratorConfig& cfg,
                                                  double band_lo, double band_hi) {
  if (band_lo > band_hi) throw ValidationError("deviation band is inverted");
  std::vector<Deviation> out;
  out.reserve(report.records.size());
  for (const auto& r : report.records) {
    const double compute_s = cfg.peak_flops > 0 ? r.flops / cfg.peak_flops : 0.0;
    const double bytes = r.weight_bytes + r.act_bytes;
    const double dram_s = cfg.dram_bw > 0 ? bytes / cfg.dram_bw : 0.0;
    Deviation d;
    d.node = r.node;
    d.op = r.op;
    d.measured_s = r.wall_s;
    d.predicted_s = std::max(compute_s, dram_s);
    d.ratio = d.predicted_s > 0 ? d.measured_s / d.predicted_s : 0.0;
    d.flagged = d.ratio < band_lo || d.ratio > band_hi;
    out.push_back(std::move(d));
  }
  return out;
}

std::string records_jsonl(const ExecutionReport& report) {
  std::string out;
  for (const auto& r : report.records) {
    nlohmann::ordered_json j;
    j["node"] = r.node;
    j["op"] = r.op;
    j["wall_s"] = r.wall_s;
    j["flops"] = r.flops;
    j["weight_bytes"] = r.weight_bytes;
    j["act_bytes"] = r.act_bytes;
    j["attained_flops"] = r.attained_flops;
    j["bound"] = bound_label(r.predicted_bound);
    j["saturations"] = r.saturations;
    auto meta_array = [](const std::vector<TensorMeta>& metas) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& m : metas) {
        nlohmann::ordered_json jm;
        jm["name"] = m.name;
        jm["dims"] = m.dims;
        jm["dtype"] = std::string(dtype_name(m.dtype));
        arr.push_back(jm);
      }
      return arr;
    };
    j["inputs"] = meta_array(r.inputs);
    j["outputs"] = meta_array(r.outputs);
    out += j.dump();
    out += "\n";
  }
  return out;
}

std::string aggregation_csv(const ExecutionReport& report) {
  std::ostringstream out;
  out << "op_type,total_s,share\n";
  for (const auto& s : report.op_shares())
    out << s.op << "," << format_double(s.total_s) << "," << format_double(s.share) << "\n";
  return out.str();
}

std::string deviation_csv(const std::vector<Deviation>& rows) {
  std::ostringstream out;
  out << "node,op,measured_s,predicted_s,ratio,flagged\n";
  for (const auto& d : rows)
    out << d.node << "," << d.op << "," << format_double(d.measured_s) << ","
        << format_double(d.predicted_s) << "," << format_double(d.ratio) << ","
        << (d.flagged ? 1 : 0) << "\n";
  return out.str();
}

}  // namespace inferlab::interp
