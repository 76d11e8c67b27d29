#include "inferlab/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace inferlab::quant {

namespace {

void quant_limits(DType target, std::int32_t& qmin, std::int32_t& qmax) {
  switch (target) {
    case DType::u8: qmin = 0; qmax = 255; return;
    case DType::i8: qmin = -128; qmax = 127; return;
    default: throw ValidationError("quantization target must be u8 or i8");
  }
}

}  // namespace

QParams choose_qparams_minmax(double min, double max, DType target, bool symmetric) {
  if (!std::isfinite(min) || !std::isfinite(max))
    throw NumericError("choose_qparams_minmax: non-finite range");
  if (min > max) throw ValidationError("choose_qparams_minmax: min > max");

  QParams p;
  p.symmetric = symmetric;
  p.target = target;
  quant_limits(target, p.qmin, p.qmax);

  // Zero must be exactly representable, so the range always includes it.
  min = std::min(min, 0.0);
  max = std::max(max, 0.0);

  if (symmetric) {
    // Signed symmetry pins the zero point at 0; unsigned at the midpoint.
    p.zero_point = target == DType::u8 ? 128 : 0;
    const double amax = std::max(std::abs(min), std::abs(max));
    p.scale = amax == 0.0 ? 1.0 : amax / (p.qmax - p.zero_point);
    return p;
  }

  if (min == max) {  // only possible when both are exactly 0
    p.scale = 1.0;
    p.zero_point = p.qmin;
    return p;
  }
  p.scale = (max - min) / (p.qmax - p.qmin);
  const double zp = round_half_to_even(p.qmin - min / p.scale);
  p.zero_point = static_cast<std::int32_t>(
      std::clamp<double>(zp, p.qmin, p.qmax));
  return p;
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

Histogram Histogram::collect(std::span<const float> values, int bins) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  if (values.empty()) throw ValidationError("histogram of an empty sample");
  Histogram h;
  h.min = std::numeric_limits<double>::infinity();
  h.max = -h.min;
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError("histogram: non-finite observation");
    h.min = std::min<double>(h.min, v);
    h.max = std::max<double>(h.max, v);
  }
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  h.add(values);
  return h;
}

void Histogram::add(std::span<const float> values) {
  const double width = bin_width();
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError("histogram: non-finite observation");
    std::int64_t i = width > 0
                         ? static_cast<std::int64_t>((static_cast<double>(v) - min) / width)
                         : 0;
    i = std::clamp<std::int64_t>(i, 0, bins() - 1);  // out-of-range clamps to edge bins
    ++counts[static_cast<std::size_t>(i)];
  }
}

void Histogram::merge(const Histogram& other) {
  if (other.min != min || other.max != max || other.bins() != bins())
    throw ValidationError("histogram merge requires identical edges");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

std::int64_t Histogram::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

// ---------------------------------------------------------------------------
// L2 range selection
// ---------------------------------------------------------------------------

namespace {

// ∫ (x-c)² dx over [a,b].
double clip_integral(double a, double b, double c) {
  const double u = b - c, l = a - c;
  return (u * u * u - l * l * l) / 3.0;
}

}  // namespace

double estimate_l2_error(const Histogram& h, double lo, double hi, int levels) {
  if (hi < lo) throw ValidationError("estimate_l2_error: empty range");
  if (levels < 1) throw ValidationError("estimate_l2_error: levels must be positive");
  const double step = (hi - lo) / levels;
  const double noise = step * step / 12.0;
  const double width = h.bin_width();

  double err = 0.0;
  for (int i = 0; i < h.bins(); ++i) {
    const double cnt = static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
    if (cnt == 0) continue;
    const double l = h.edge(i), r = h.edge(i + 1);
    if (width == 0) {  // point mass
      const double v = h.min;
      if (v < lo) err += cnt * (lo - v) * (lo - v);
      else if (v > hi) err += cnt * (v - hi) * (v - hi);
      else err += cnt * noise;
      continue;
    }
    const double density = cnt / width;
    const double left = std::min(r, lo);
    if (left > l) err += density * clip_integral(l, left, lo);
    const double right = std::max(l, hi);
    if (r > right) err += density * clip_integral(right, r, hi);
    const double in = std::max(0.0, std::min(r, hi) - std::max(l, lo));
    err += density * in * noise;
  }
  return err;
}

QParams choose_qparams_l2(const Histogram& h, DType target, bool symmetric) {
  return choose_qparams_l2_detail(h, target, symmetric).params;
}

L2Selection choose_qparams_l2_detail(const Histogram& h, DType target, bool symmetric) {
  if (h.total() == 0) throw ValidationError("choose_qparams_l2: empty histogram");
  std::int32_t qmin, qmax;
  quant_limits(target, qmin, qmax);
  if (h.min == h.max) {
    L2Selection sel;
    sel.params = choose_qparams_minmax(h.min, h.max, target, symmetric);
    sel.lo = std::min(h.min, 0.0);
    sel.hi = std::max(h.max, 0.0);
    sel.levels = symmetric ? 2 * (qmax - sel.params.zero_point) : qmax - qmin;
    sel.error = estimate_l2_error(h, sel.lo, sel.hi, std::max(sel.levels, 1));
    return sel;
  }

  double best_err = std::numeric_limits<double>::infinity();
  double best_lo = h.min, best_hi = h.max;
  auto consider = [&](double lo, double hi, double err) {
    // Ties break toward the smaller range, then the smaller lower edge.
    const double tol =
        std::isinf(best_err) ? 0.0 : 1e-12 * std::max(1.0, best_err);
    if (err < best_err - tol ||
        (err <= best_err + tol &&
         (hi - lo < best_hi - best_lo ||
          (hi - lo == best_hi - best_lo && lo < best_lo)))) {
      best_err = err;
      best_lo = lo;
      best_hi = hi;
    }
  };

  if (symmetric) {
    // [-t, t] over a uniform magnitude grid; the representable step is
    // t / qmax_mag, i.e. 2t over 2·qmax_mag levels.
    const double amax = std::max(std::abs(h.min), std::abs(h.max));
    const std::int32_t zp = target == DType::u8 ? 128 : 0;
    const int levels = 2 * (qmax - zp);
    for (int i = 1; i <= h.bins(); ++i) {
      const double t = amax * i / h.bins();
      consider(-t, t, estimate_l2_error(h, -t, t, levels));
    }
    return {choose_qparams_minmax(best_lo, best_hi, target, true), best_lo, best_hi,
            estimate_l2_error(h, best_lo, best_hi, levels), levels};
  }

  const int levels = qmax - qmin;
  const int b = h.bins();

  // Candidates containing zero need no widening, and every bin falls wholly
  // inside or outside them, so prefix sums give O(1) evaluation. E[x] and
  // E[x²] per bin come from the within-bin uniform density.
  std::vector<double> p0(static_cast<std::size_t>(b) + 1, 0.0);
  std::vector<double> p1 = p0, p2 = p0;
  const double w = h.bin_width();
  for (int i = 0; i < b; ++i) {
    const double cnt = static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
    const double mid = (h.edge(i) + h.edge(i + 1)) / 2.0;
    p0[i + 1] = p0[i] + cnt;
    p1[i + 1] = p1[i] + cnt * mid;
    p2[i + 1] = p2[i] + cnt * (mid * mid + w * w / 12.0);
  }
  for (int i = 0; i <= b; ++i) {
    const double lo = h.edge(i);
    if (lo > 0) break;
    for (int j = b; j > i; --j) {
      const double hi = h.edge(j);
      if (hi < 0) break;
      const double step = (hi - lo) / levels;
      const double left = lo * lo * p0[i] - 2 * lo * p1[i] + p2[i];
      const double right = (p2[b] - p2[j]) - 2 * hi * (p1[b] - p1[j]) +
                           hi * hi * (p0[b] - p0[j]);
      const double noise = (p0[j] - p0[i]) * step * step / 12.0;
      consider(lo, hi, left + right + noise);
    }
  }
  // Candidates that exclude zero widen to it; one edge is then fixed at 0.
  if (h.edge(b) > 0)
    for (int j = 1; j <= b; ++j) {
      const double hi = h.edge(j);
      if (hi <= 0) continue;
      consider(0.0, hi, estimate_l2_error(h, 0.0, hi, levels));
    }
  if (h.edge(0) < 0)
    for (int i = 0; i < b; ++i) {
      const double lo = h.edge(i);
      if (lo >= 0) break;
      consider(lo, 0.0, estimate_l2_error(h, lo, 0.0, levels));
    }
  return {choose_qparams_minmax(best_lo, best_hi, target, false), best_lo, best_hi,
          estimate_l2_error(h, best_lo, best_hi, levels), levels};
}

// ---------------------------------------------------------------------------
// Granularity
// ---------------------------------------------------------------------------

namespace {

std::int64_t axis_stride(const std::vector<std::int64_t>& dims, std::int64_t axis) {
  std::int64_t s = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < dims.size(); ++i) s *= dims[i];
  return s;
}

void check_axis(const QGranularity& g, const std::vector<std::int64_t>& dims) {
  if (g.axis < 0 || g.axis >= static_cast<std::int64_t>(dims.size()))
    throw ValidationError("granularity axis out of range for tensor rank");
}

}  // namespace

std::int64_t QGranularity::slices(const std::vector<std::int64_t>& dims) const {
  switch (kind) {
    case Kind::per_tensor: return 1;
    case Kind::per_channel:
      check_axis(*this, dims);
      return dims[static_cast<std::size_t>(axis)];
    case Kind::per_row:
      if (dims.empty()) throw ValidationError("per_row needs rank >= 1");
      return dims[0];
    case Kind::per_group: {
      check_axis(*this, dims);
      if (group_size < 1) throw ValidationError("per_group needs group_size >= 1");
      return (dims[static_cast<std::size_t>(axis)] + group_size - 1) / group_size;
    }
  }
  throw ValidationError("unreachable granularity kind");
}

std::int64_t QGranularity::slice_of(std::int64_t flat,
                                    const std::vector<std::int64_t>& dims) const {
  switch (kind) {
    case Kind::per_tensor: return 0;
    case Kind::per_channel:
      return (flat / axis_stride(dims, axis)) % dims[static_cast<std::size_t>(axis)];
    case Kind::per_row:
      return flat / axis_stride(dims, 0);
    case Kind::per_group:
      return ((flat / axis_stride(dims, axis)) % dims[static_cast<std::size_t>(axis)]) /
             group_size;
  }
  throw ValidationError("unreachable granularity kind");
}

std::string granularity_to_string(const QGranularity& g) {
  switch (g.kind) {
    case QGranularity::Kind::per_tensor: return "per_tensor";
    case QGranularity::Kind::per_channel:
      return "per_channel:" + std::to_string(g.axis);
    case QGranularity::Kind::per_row: return "per_row";
    case QGranularity::Kind::per_group:
      return "per_group:" + std::to_string(g.axis) + ":" + std::to_string(g.group_size);
  }
  throw ValidationError("unreachable granularity kind");
}

QGranularity granularity_from_string(const std::string& s) {
  if (s == "per_tensor") return QGranularity::per_tensor();
  if (s == "per_row") return QGranularity::per_row();
  const auto parse_int = [&](const std::string& part) {
    try {
      return static_cast<std::int64_t>(std::stoll(part));
    } catch (const std::exception&) {
      throw ParseError("bad granularity string: " + s);
    }
  };
  if (s.rfind("per_channel:", 0) == 0)
    return QGranularity::per_channel(parse_int(s.substr(12)));
  if (s.rfind("per_group:", 0) == 0) {
    const auto rest = s.substr(10);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw ParseError("bad granularity string: " + s);
    return QGranularity::per_group(parse_int(rest.substr(0, colon)),
                                   parse_int(rest.substr(colon + 1)));
  }
  throw ParseError("unknown granularity: " + s);
}

// ---------------------------------------------------------------------------
// Affine quantize / dequantize
// ---------------------------------------------------------------------------

std::vector<QParams> choose_qparams_tensor(const Tensor& x, const QGranularity& gran,
                                           DType target, bool symmetric) {
  if (x.dtype() != DType::f32) throw ValidationError("choose_qparams_tensor: expected f32");
  const auto n = gran.slices(x.dims());
  std::vector<double> mins(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
  std::vector<double> maxs(static_cast<std::size_t>(n),
                           -std::numeric_limits<double>::infinity());
  const auto v = x.as<float>();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericError("choose_qparams_tensor: non-finite value");
    const auto s = static_cast<std::size_t>(
        gran.slice_of(static_cast<std::int64_t>(i), x.dims()));
    mins[s] = std::min<double>(mins[s], v[i]);
    maxs[s] = std::max<double>(maxs[s], v[i]);
  }
  std::vector<QParams> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t s = 0; s < n; ++s) {
    const auto si = static_cast<std::size_t>(s);
    if (mins[si] > maxs[si]) {  // empty slice (possible only for padded groups)
      mins[si] = maxs[si] = 0.0;
    }
    out.push_back(choose_qparams_minmax(mins[si], maxs[si], target, symmetric));
  }
  return out;
}

Tensor quantize_affine(const Tensor& x, std::span<const QParams> params,
                       const QGranularity& gran) {
  if (x.dtype() != DType::f32) throw ValidationError("quantize_affine: expected f32 input");
  if (params.empty()) throw ValidationError("quantize_affine: no parameters");
  if (static_cast<std::int64_t>(params.size()) != gran.slices(x.dims()))
    throw ValidationError("quantize_affine: parameter count does not match granularity");
  const DType target = params[0].target;
  for (const auto& p : params) {
    if (p.target != target) throw ValidationError("quantize_affine: mixed targets");
    if (p.scale <= 0) throw ValidationError("quantize_affine: non-positive scale");
  }

  Tensor out(target, x.dims());
  const auto v = x.as<float>();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericError("quantize_affine: non-finite value");
    const auto& p = params[static_cast<std::size_t>(
        gran.slice_of(static_cast<std::int64_t>(i), x.dims()))];
    const double q = round_half_to_even(v[i] / p.scale) + p.zero_point;
    const auto clamped =
        static_cast<std::int32_t>(std::clamp<double>(q, p.qmin, p.qmax));
    if (target == DType::u8)
      out.as<std::uint8_t>()[i] = static_cast<std::uint8_t>(clamped);
    else
      out.as<std::int8_t>()[i] = static_cast<std::int8_t>(clamped);
  }
  return out;
}

Tensor dequantize_affine(const Tensor& xq, std::span<const QParams> params,
                         const QGranularity& gran) {
  if (xq.dtype() != DType::u8 && xq.dtype() != DType::i8)
    throw ValidationError("dequantize_affine: expected u8 or i8 input");
  if (static_cast<std::int64_t>(params.size()) != gran.slices(xq.dims()))
    throw ValidationError("dequantize_affine: parameter count does not match granularity");

  Tensor out(DType::f32, xq.dims());
  auto ov = out.as<float>();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const auto& p = params[static_cast<std::size_t>(
        gran.slice_of(static_cast<std::int64_t>(i), xq.dims()))];
    const std::int32_t q = xq.dtype() == DType::u8
                               ? static_cast<std::int32_t>(xq.as<std::uint8_t>()[i])
                               : static_cast<std::int32_t>(xq.as<std::int8_t>()[i]);
    ov[i] = static_cast<float>((q - p.zero_point) * p.scale);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Outlier split
// ---------------------------------------------------------------------------

namespace {

template <typename T>
OutlierSplit split_outliers_impl(const Tensor& wq) {
  OutlierSplit s;
  s.main = Tensor(DType::i8, wq.dims());
  // SparseResidual is 2-D; treat other ranks as a single row block.
  const std::int64_t n = wq.dims().size() == 2 ? wq.dims()[0] : 1;
  const std::int64_t k =
      static_cast<std::int64_t>(wq.elem_count()) / std::max<std::int64_t>(n, 1);
  Tensor residual(DType::i32, {n, k});
  const auto in = wq.as<T>();
  auto mv = s.main.as<std::int8_t>();
  auto rv = residual.as<std::int32_t>();
  std::int64_t nnz = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::int32_t orig = in[i];
    const std::int32_t clamped = std::clamp(orig, -64, 63);
    mv[i] = static_cast<std::int8_t>(clamped);
    rv[i] = orig - clamped;
    if (rv[i] != 0) ++nnz;
  }
  s.outliers = kernels::SparseResidual::from_dense(residual);
  s.density = in.empty() ? 0.0 : static_cast<double>(nnz) / static_cast<double>(in.size());
  return s;
}

}  // namespace

OutlierSplit split_outliers(const Tensor& wq) {
  // i8 is the storage format; i32 carries unclamped integer weights whose
  // outliers exceed the 8-bit range and live entirely in the residual.
  if (wq.dtype() == DType::i8) return split_outliers_impl<std::int8_t>(wq);
  if (wq.dtype() == DType::i32) return split_outliers_impl<std::int32_t>(wq);
  throw ValidationError("split_outliers: expected i8 or i32 integer weights");
}

// ---------------------------------------------------------------------------
// Net-aware range narrowing
// ---------------------------------------------------------------------------

RangeMap net_aware_narrow(const ir::Graph& g, RangeMap ranges) {
  const auto consumers = g.consumers();
  const double inf = std::numeric_limits<double>::infinity();

  for (std::size_t pass = 0; pass < g.nodes.size() + 1; ++pass) {
    bool changed = false;
    for (auto& [name, range] : ranges) {
      const auto it = consumers.find(name);
      if (it == consumers.end() || it->second.empty()) continue;
      // Hull of the value sets the consumers can distinguish: anything a
      // consumer clamps away needs no representation.
      double lo_h = inf, hi_h = -inf;
      for (int ni : it->second) {
        const ir::Node& n = g.nodes[static_cast<std::size_t>(ni)];
        double lo_c = -inf, hi_c = inf;
        if (n.op == ir::Op::Relu) {
          lo_c = 0.0;
        } else if (n.op == ir::Op::Clip) {
          lo_c = n.attr_double("min", -inf);
          hi_c = n.attr_double("max", inf);
        }
        lo_h = std::min(lo_h, lo_c);
        hi_h = std::max(hi_h, hi_c);
      }
      const double new_lo = std::clamp(range.first, lo_h, hi_h);
      const double new_hi = std::clamp(range.second, lo_h, hi_h);
      if (new_lo != range.first || new_hi != range.second) {
        range = {new_lo, new_hi};
        changed = true;
      }
    }
    if (!changed) break;
  }
  return ranges;
}

// ---------------------------------------------------------------------------
// Row-quantized embedding tables
// ---------------------------------------------------------------------------

Tensor quantize_embedding_rows(const Tensor& table) {
  if (table.dtype() != DType::f32 || table.dims().size() != 2 || table.dims()[1] < 1)
    throw ValidationError("quantize_embedding_rows: expected f32 [rows, D] with D >= 1");
  const std::int64_t rows = table.dims()[0];
  const std::int64_t d = table.dims()[1];
  const auto v = table.as<float>();
  for (float x : v)
    if (!std::isfinite(x)) throw NumericError("quantize_embedding_rows: non-finite entry");

  Tensor out(DType::u8, {rows, d + 8});
  auto* ov = reinterpret_cast<std::uint8_t*>(out.raw().data());
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* rv = v.data() + r * d;
    const float mn = *std::min_element(rv, rv + d);
    const float mx = *std::max_element(rv, rv + d);
    const float scale = mx > mn ? (mx - mn) / 255.0f : 1.0f;
    std::uint8_t* row = ov + r * (d + 8);
    for (std::int64_t c = 0; c < d; ++c) {
      const double q = round_half_to_even((rv[c] - mn) / scale);
      row[c] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
    }
    std::memcpy(row + d, &scale, sizeof(float));
    std::memcpy(row + d + 4, &mn, sizeof(float));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan serialization
// ---------------------------------------------------------------------------

const LayerPlan* QuantPlan::find(const std::string& name) const {
  for (const auto& l : layers)
    if (l.name == name) return &l;
  return nullptr;
}

std::string plan_to_json_text(const QuantPlan& plan) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : plan.layers) {
    nlohmann::ordered_json jl;
    jl["name"] = l.name;
    jl["quantize"] = l.quantize;
    jl["granularity"] = granularity_to_string(l.granularity);
    jl["symmetric"] = l.symmetric;
    jl["act_scale"] = l.act_scale;
    jl["act_zero_point"] = l.act_zero_point;
    jl["out_scale"] = l.out_scale;
    jl["out_zero_point"] = l.out_zero_point;
    jl["split_outliers"] = l.split_outliers;
    jl["params"] = nlohmann::ordered_json::array();
    for (const auto& p : l.params) {
      nlohmann::ordered_json jp;
      jp["scale"] = p.scale;
      jp["zero_point"] = p.zero_point;
      jp["qmin"] = p.qmin;
      jp["qmax"] = p.qmax;
      jp["dtype"] = std::string(dtype_name(p.target));
      jl["params"].push_back(jp);
    }
    j["layers"].push_back(jl);
  }
  return j.dump(2) + "\n";
}

QuantPlan plan_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("plan JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported plan version");
    QuantPlan plan;
    for (const auto& jl : j.at("layers")) {
      LayerPlan l;
      l.name = jl.at("name").get<std::string>();
      l.quantize = jl.at("quantize").get<bool>();
      l.granularity = granularity_from_string(jl.at("granularity").get<std::string>());
      l.symmetric = jl.at("symmetric").get<bool>();
      l.act_scale = jl.value("act_scale", 1.0);
      l.act_zero_point = jl.value("act_zero_point", 0);
      l.out_scale = jl.value("out_scale", 0.0);
      l.out_zero_point = jl.value("out_zero_point", 0);
      l.split_outliers = jl.value("split_outliers", false);
      for (const auto& jp : jl.value("params", nlohmann::json::array())) {
        QParams p;
        p.scale = jp.at("scale").get<double>();
        p.zero_point = jp.at("zero_point").get<std::int32_t>();
        p.qmin = jp.at("qmin").get<std::int32_t>();
        p.qmax = jp.at("qmax").get<std::int32_t>();
        p.target = dtype_from_name(jp.at("dtype").get<std::string>());
        p.symmetric = l.symmetric;
        l.params.push_back(p);
      }
      plan.layers.push_back(std::move(l));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("plan JSON structure: ") + e.what());
  }
}

void save_plan(const std::string& path, const QuantPlan& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << plan_to_json_text(plan);
  if (!out) throw IoError("failed writing: " + path);
}

QuantPlan load_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return plan_from_json_text(text);
}

}  // namespace inferlab::quant
