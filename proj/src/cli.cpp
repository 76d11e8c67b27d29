#include "inferlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "inferlab/common.hpp"
#include "inferlab/cost.hpp"
#include "inferlab/fixtures.hpp"
#include "inferlab/fp16.hpp"
#include "inferlab/interp.hpp"
#include "inferlab/kernels.hpp"
#include "inferlab/mine.hpp"
#include "inferlab/profile.hpp"
#include "inferlab/quant.hpp"
#include "inferlab/roofline.hpp"
#include "json.hpp"

namespace inferlab::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  if (f.bad()) throw IoError("failed reading '" + path + "'");
  return buf.str();
}

// Content fingerprint over every input the subcommand consumed, emitted on
// each output so results can be traced back to exact inputs.
class Provenance {
 public:
  void add_file(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    hash_ = fnv1a64(bytes.data(), bytes.size(), hash_);
  }
  void add_text(const std::string& text) { hash_ = fnv1a64(text.data(), text.size(), hash_); }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }
  // Comment-style line for CSV and plain-text outputs.
  std::string comment_line() const {
    return "# " + std::string(kToolVersion) + " inputs=fnv1a64:" + hex() + "\n";
  }
  // First line of JSONL outputs: a JSON object, so the file stays parseable.
  std::string jsonl_line() const {
    nlohmann::json j;
    j["provenance"] = {{"tool", std::string(kToolVersion)}, {"inputs", "fnv1a64:" + hex()}};
    return j.dump() + "\n";
  }
  nlohmann::json json() const {
    return {{"tool", std::string(kToolVersion)}, {"inputs", "fnv1a64:" + hex()}};
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "'");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

double parse_threshold(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ValidationError("trailing characters in threshold '" + s + "'");
    if (std::isnan(v) || v < 0) throw ValidationError("threshold must be >= 0 or inf");
    return v;
  } catch (const std::invalid_argument&) {
    throw ValidationError("cannot parse threshold '" + s + "'");
  } catch (const std::out_of_range&) {
    throw ValidationError("threshold '" + s + "' out of range");
  }
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string model;
  std::string out_dir;
};

void cmd_analyze(const AnalyzeArgs& a, std::ostream& log) {
  Provenance prov;
  prov.add_file(a.model);
  const ir::Graph g = ir::load_model(a.model);

  write_file(join_path(a.out_dir, "cost.csv"), prov.comment_line() + cost::cost_csv(g));

  const cost::ModelAggregates agg = cost::aggregate_costs(g);
  std::ostringstream s;
  s << prov.comment_line() << "total_params,total_flops,intensity_w,intensity_wa\n"
    << agg.total_params << ',' << agg.total_flops << ',' << format_double(agg.intensity_w)
    << ',' << format_double(agg.intensity_wa) << '\n';
  write_file(join_path(a.out_dir, "summary.csv"), s.str());
  log << "analyze: wrote cost.csv and summary.csv to " << a.out_dir << "\n";
}

struct RooflineArgs {
  std::string model;
  std::string accel;
  std::string out_dir;
  std::vector<double> capacities = {0,      1 << 20,  2 << 20,  4 << 20,
                                    8 << 20, 16 << 20, 32 << 20, 64 << 20};
  std::vector<double> bws = {1e12, 10e12};
};

void cmd_roofline(const RooflineArgs& a, std::ostream& log) {
  Provenance prov;
  prov.add_file(a.model);
  if (!a.accel.empty()) prov.add_file(a.accel);

  const ir::Graph g = ir::load_model(a.model);
  const roofline::AcceleratorConfig cfg =
      a.accel.empty() ? roofline::AcceleratorConfig{} : roofline::load_accel(a.accel);
  const auto points = roofline::capacity_sweep(g, cfg, a.capacities, a.bws);
  write_file(join_path(a.out_dir, "sweep.csv"), prov.comment_line() + roofline::sweep_csv(points));
  log << "roofline: wrote sweep.csv (" << points.size() << " points) to " << a.out_dir << "\n";
}

struct QuantizeArgs {
  std::string model;
  std::string weights;
  std::string calib;
  std::string out_dir;
  std::string threshold = "1e-2";
  int bins = 2048;
};

// Calibration containers hold batches as "<batch index>/<input name>".
std::vector<std::map<std::string, Tensor>> split_batches(
    const std::map<std::string, Tensor>& entries) {
  std::map<std::int64_t, std::map<std::string, Tensor>> grouped;
  for (const auto& [key, t] : entries) {
    const auto slash = key.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == key.size())
      throw ValidationError("calibration entry '" + key +
                            "' is not of the form <batch>/<input>");
    std::int64_t idx = 0;
    try {
      idx = std::stoll(key.substr(0, slash));
    } catch (const std::exception&) {
      throw ValidationError("calibration entry '" + key + "' has a non-numeric batch index");
    }
    grouped[idx].emplace(key.substr(slash + 1), t);
  }
  if (grouped.empty()) throw ValidationError("calibration container is empty");
  std::vector<std::map<std::string, Tensor>> batches;
  for (auto& [idx, batch] : grouped) batches.push_back(std::move(batch));
  return batches;
}

void cmd_quantize(const QuantizeArgs& a, std::ostream& log) {
  const double threshold = parse_threshold(a.threshold);
  Provenance prov;
  prov.add_file(a.model);
  prov.add_file(a.weights);
  prov.add_file(a.calib);

  const ir::Graph g = ir::load_model(a.model, a.weights);
  const auto batches = split_batches(ir::load_weight_container(a.calib));

  const auto stats = profile::calibrate(g, batches, a.bins);
  const auto proposed = profile::propose_plan(g, stats);
  const auto report = profile::profile_quant_error(g, batches, proposed);
  const auto plan = profile::selective_plan(proposed, report, threshold);

  nlohmann::json pj = nlohmann::json::parse(quant::plan_to_json_text(plan));
  pj["provenance"] = prov.json();
  write_file(join_path(a.out_dir, "plan.json"), pj.dump(2) + "\n");
  write_file(join_path(a.out_dir, "error_report.csv"),
             prov.comment_line() + profile::error_report_csv(report));
  int kept = 0;
  for (const auto& l : plan.layers) kept += l.quantize ? 1 : 0;
  log << "quantize: " << kept << "/" << plan.layers.size()
      << " layers quantized at threshold " << a.threshold << "; wrote plan.json and "
      << "error_report.csv to " << a.out_dir << "\n";
}

struct BenchArgs {
  std::int64_t m = 64, n = 64, k = 64;
  std::string kernel = "fp32";
  int repeats = 5;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_file;  // empty: stdout
};

double time_once(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

void cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.m < 1 || a.n < 1 || a.k < 1) throw ValidationError("bench: m, n, k must be >= 1");
  if (a.repeats < 0) throw ValidationError("bench: repeats must be >= 0");
  SplitMix64 rng(a.seed);

  std::function<void()> call;
  if (a.kernel == "fp32" || a.kernel == "fp16w") {
    Tensor x(DType::f32, {a.m, a.k});
    for (auto& v : x.as<float>()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor w(DType::f32, {a.n, a.k});
    for (auto& v : w.as<float>()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    if (a.kernel == "fp32") {
      const auto pb = kernels::PackedMatrix::pack(w);
      call = [x, pb, t = a.threads] { kernels::gemm_fp32(x, pb, nullptr, t); };
    } else {
      const auto pb = kernels::PackedMatrix::pack(kernels::tensor_to_fp16(w));
      call = [x, pb, t = a.threads] { kernels::gemm_fp16w(x, pb, nullptr, t); };
    }
  } else if (a.kernel == "i8acc32" || a.kernel == "i8acc16") {
    Tensor x(DType::u8, {a.m, a.k});
    for (auto& v : x.as<std::uint8_t>())
      v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const bool acc16 = a.kernel == "i8acc16";
    Tensor w(DType::i8, {a.n, a.k});
    for (auto& v : w.as<std::int8_t>())
      v = static_cast<std::int8_t>(rng.uniform_int(acc16 ? -64 : -127, acc16 ? 63 : 127));
    const auto pb = kernels::PackedMatrix::pack(w);
    if (acc16) {
      call = [x, pb] { kernels::gemm_u8i8_acc16(x, 3, pb); };
    } else {
      kernels::OutputPipeline pipe;  // i32 pass-through
      call = [x, pb, pipe, t = a.threads] { kernels::gemm_u8i8_acc32(x, 3, pb, pipe, t); };
    }
  } else {
    throw ValidationError("bench: unknown kernel '" + a.kernel +
                          "' (expected fp32, fp16w, i8acc32 or i8acc16)");
  }

  // One untimed pass always runs, so a dry run (--repeats 0) still exercises
  // the kernel; its GOp/s column is 0 and the output is byte-reproducible.
  call();
  double best = 0;
  for (int r = 0; r < a.repeats; ++r) {
    const double dt = time_once(call);
    if (r == 0 || dt < best) best = dt;
  }
  const double flops = 2.0 * static_cast<double>(a.m) * static_cast<double>(a.n) *
                       static_cast<double>(a.k);
  const double denom = static_cast<double>(a.n * a.k + a.m * a.k);
  const double intensity = flops / denom;
  const double gops = best > 0 ? flops / best / 1e9 : 0.0;

  Provenance prov;
  std::ostringstream id;
  id << "bench m=" << a.m << " n=" << a.n << " k=" << a.k << " kernel=" << a.kernel
     << " repeats=" << a.repeats << " seed=" << a.seed << " threads=" << a.threads;
  prov.add_text(id.str());

  std::ostringstream s;
  s << prov.comment_line() << "kernel,m,n,k,intensity,gops\n"
    << a.kernel << ',' << a.m << ',' << a.n << ',' << a.k << ','
    << format_double(intensity) << ',' << format_double(gops) << '\n';
  if (a.out_file.empty())
    out << s.str();
  else
    write_file(a.out_file, s.str());
}

struct RunArgs {
  std::string model;
  std::string weights;
  std::string inputs;
  std::string out_dir;
  std::string backend = "f32";
  std::string plan;
  std::string accel;
  bool timing = false;
  int threads = 1;
  double band_lo = 0.1;
  double band_hi = 10.0;
};

void cmd_run(const RunArgs& a, std::ostream& log) {
  Provenance prov;
  prov.add_file(a.model);
  prov.add_file(a.weights);
  prov.add_file(a.inputs);
  if (!a.plan.empty()) prov.add_file(a.plan);
  if (!a.accel.empty()) prov.add_file(a.accel);

  const ir::Graph g = ir::load_model(a.model, a.weights);
  const auto inputs = ir::load_weight_container(a.inputs);

  interp::RunOptions opts;
  if (a.backend == "f32") {
    opts.backend = interp::Backend::f32;
  } else if (a.backend == "quantized") {
    opts.backend = interp::Backend::quantized;
  } else {
    throw ValidationError("run: unknown backend '" + a.backend +
                          "' (expected f32 or quantized)");
  }
  std::optional<quant::QuantPlan> plan;
  if (!a.plan.empty()) {
    plan = quant::load_plan(a.plan);
    opts.plan = &*plan;
  }
  if (!a.accel.empty()) opts.host = roofline::load_accel(a.accel);
  opts.threads = a.threads;
  opts.collect_timing = a.timing;

  const auto rr = interp::run(g, inputs, opts);

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create directory '" + a.out_dir + "'");
  ir::save_weight_container(rr.outputs, join_path(a.out_dir, "outputs.dliw"));
  write_file(join_path(a.out_dir, "records.jsonl"),
             prov.jsonl_line() + interp::records_jsonl(rr.report));
  write_file(join_path(a.out_dir, "aggregation.csv"),
             prov.comment_line() + interp::aggregation_csv(rr.report));
  // Measured-vs-predicted ratios only mean something when timing was on.
  if (a.timing) {
    const auto rows =
        interp::compare_predicted_measured(rr.report, opts.host, a.band_lo, a.band_hi);
    write_file(join_path(a.out_dir, "deviations.csv"),
               prov.comment_line() + interp::deviation_csv(rows));
  }
  log << "run: " << rr.report.records.size() << " ops, total "
      << format_double(rr.report.total_s) << " s; outputs in " << a.out_dir << "\n";
}

struct MineArgs {
  std::string corpus_dir;
  std::string accel;
  std::string out_dir;
  double support = 3.0;
  int max_size = 4;
  std::size_t k = 10;
};

void cmd_mine(const MineArgs& a, std::ostream& log) {
  if (!fs::is_directory(a.corpus_dir))
    throw IoError("corpus directory '" + a.corpus_dir + "' does not exist");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(a.corpus_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw ValidationError("corpus directory '" + a.corpus_dir + "' has no .json models");

  Provenance prov;
  std::vector<mine::CorpusGraph> corpus;
  for (const auto& f : files) {
    prov.add_file(f);
    corpus.push_back({ir::load_model(f), 1.0});
  }
  const roofline::AcceleratorConfig cfg =
      a.accel.empty() ? roofline::AcceleratorConfig{} : roofline::load_accel(a.accel);
  if (!a.accel.empty()) prov.add_file(a.accel);

  const auto mined = mine::mine_frequent_subgraphs(corpus, a.support, a.max_size);
  const auto ranked = mine::top_k(mine::rank_candidates(corpus, mined, cfg), a.k);
  write_file(join_path(a.out_dir, "candidates.csv"),
             prov.comment_line() + mine::candidates_csv(ranked));
  log << "mine: " << corpus.size() << " graphs, " << mined.size() << " patterns, top "
      << ranked.size() << " written to " << a.out_dir << "\n";
}

struct FixturesArgs {
  std::string out_dir;
  std::string which = "all";
};

void cmd_fixtures(const FixturesArgs& a, std::ostream& log) {
  const std::map<std::string, fixtures::Model (*)()> builders = {
      {"recommendation", &fixtures::recommendation},
      {"compute_bound_fc", &fixtures::compute_bound_fc},
      {"cv_net", &fixtures::cv_net},
      {"toy_cnn", &fixtures::toy_cnn},
      {"nmt_stack", &fixtures::nmt_stack},
  };
  if (a.which != "all" && a.which != "corpus" && !builders.count(a.which))
    throw ValidationError("unknown fixture '" + a.which + "'");
  std::error_code ec;
  fs::create_directories(fs::path(a.out_dir) / "corpus", ec);
  if (ec) throw IoError("cannot create directory '" + a.out_dir + "'");

  int written = 0;
  for (const auto& [name, build] : builders) {
    if (a.which != "all" && a.which != name) continue;
    const fixtures::Model m = build();
    ir::save_model(m.graph, join_path(a.out_dir, name + ".model.json"));
    ir::save_weight_container(m.graph.weight_data,
                              join_path(a.out_dir, name + ".weights.dliw"));
    ir::save_weight_container(m.inputs, join_path(a.out_dir, name + ".inputs.dliw"));
    if (name == "toy_cnn") {
      std::map<std::string, Tensor> calib;
      const auto batches = fixtures::toy_cnn_batches(8);
      for (std::size_t i = 0; i < batches.size(); ++i)
        for (const auto& [tensor, t] : batches[i])
          calib.emplace(std::to_string(i) + "/" + tensor, t);
      ir::save_weight_container(calib, join_path(a.out_dir, name + ".calib.dliw"));
    }
    ++written;
  }
  if (a.which == "all" || a.which == "corpus") {
    const auto corpus = fixtures::mining_corpus();
    for (std::size_t i = 0; i < corpus.size(); ++i)
      ir::save_model(corpus[i], join_path(join_path(a.out_dir, "corpus"),
                                          "pattern_corpus_" + std::to_string(i) +
                                              ".model.json"));
    ++written;
  }
  log << "fixtures: wrote " << written << " fixture set(s) to " << a.out_dir << "\n";
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"inferlab: an inference performance laboratory"};
  app.name("inferlab");
  app.require_subcommand(1);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Per-op cost CSV and model aggregates");
  analyze->add_option("--model", an.model, "Model JSON")->required();
  analyze->add_option("--out", an.out_dir, "Output directory")->required();

  RooflineArgs ro;
  auto* roofl = app.add_subcommand("roofline", "On-chip capacity sweep CSV");
  roofl->add_option("--model", ro.model, "Model JSON")->required();
  roofl->add_option("--accel", ro.accel, "Accelerator config JSON");
  roofl->add_option("--out", ro.out_dir, "Output directory")->required();
  roofl->add_option("--capacities", ro.capacities, "On-chip capacities in bytes");
  roofl->add_option("--bws", ro.bws, "On-chip bandwidths in B/s");

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand(
      "quantize", "Calibrate, propose, profile and select a quantization plan");
  quantize->add_option("--model", qa.model, "Model JSON")->required();
  quantize->add_option("--weights", qa.weights, "Weight container")->required();
  quantize->add_option("--calib", qa.calib, "Calibration batches (<i>/<input> container)")
      ->required();
  quantize->add_option("--out", qa.out_dir, "Output directory")->required();
  quantize->add_option("--threshold", qa.threshold,
                       "Per-layer relative-error fallback threshold (inf: keep all)");
  quantize->add_option("--bins", qa.bins, "Calibration histogram bins");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time one GEMM kernel");
  bench->add_option("--m", ba.m, "Rows of A")->required();
  bench->add_option("--n", ba.n, "Rows of W (output columns)")->required();
  bench->add_option("--k", ba.k, "Depth")->required();
  bench->add_option("--kernel", ba.kernel, "fp32, fp16w, i8acc32 or i8acc16");
  bench->add_option("--repeats", ba.repeats, "Timed repeats; 0 is an untimed dry run");
  bench->add_option("--seed", ba.seed, "Data seed");
  bench->add_option("--threads", ba.threads, "Kernel threads");
  bench->add_option("--out", ba.out_file, "CSV path (default: stdout)");

  RunArgs ru;
  auto* run = app.add_subcommand("run", "Execute a model and emit telemetry");
  run->add_option("--model", ru.model, "Model JSON")->required();
  run->add_option("--weights", ru.weights, "Weight container")->required();
  run->add_option("--inputs", ru.inputs, "Input container")->required();
  run->add_option("--out", ru.out_dir, "Output directory")->required();
  run->add_option("--backend", ru.backend, "f32 or quantized");
  run->add_option("--plan", ru.plan, "Quantization plan JSON (quantized backend)");
  run->add_option("--accel", ru.accel, "Host ceilings for predicted-vs-measured");
  run->add_flag("--timing", ru.timing,
                "Collect wall times (output is then not byte-reproducible)");
  run->add_option("--threads", ru.threads, "Kernel threads");
  run->add_option("--band-lo", ru.band_lo, "Deviation flag band lower edge");
  run->add_option("--band-hi", ru.band_hi, "Deviation flag band upper edge");

  MineArgs mi;
  auto* mine_cmd = app.add_subcommand("mine", "Mine fusion candidates from a model corpus");
  mine_cmd->add_option("--corpus", mi.corpus_dir, "Directory of model JSON files")->required();
  mine_cmd->add_option("--out", mi.out_dir, "Output directory")->required();
  mine_cmd->add_option("--support", mi.support, "Minimum weighted occurrence count");
  mine_cmd->add_option("--max-size", mi.max_size, "Largest pattern size");
  mine_cmd->add_option("--k", mi.k, "Candidates to keep");
  mine_cmd->add_option("--accel", mi.accel, "Accelerator config for speedup projection");

  FixturesArgs fx;
  auto* fixtures_cmd =
      app.add_subcommand("fixtures", "Write the bundled synthetic models to disk");
  fixtures_cmd->add_option("--out", fx.out_dir, "Output directory")->required();
  fixtures_cmd->add_option("--which", fx.which,
                           "all, corpus, or one of recommendation, compute_bound_fc, "
                           "cv_net, toy_cnn, nmt_stack");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*analyze) cmd_analyze(an, out);
    if (*roofl) cmd_roofline(ro, out);
    if (*quantize) cmd_quantize(qa, out);
    if (*bench) cmd_bench(ba, out);
    if (*run) cmd_run(ru, out);
    if (*mine_cmd) cmd_mine(mi, out);
    if (*fixtures_cmd) cmd_fixtures(fx, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

}  // namespace inferlab::cli
