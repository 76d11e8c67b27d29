#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "inferlab/ir.hpp"

// Deterministic synthetic models spanning the workload regimes the lab
// targets: an embedding-dominated recommendation net, a compute-saturating
// GEMM, an activation-heavy CV net, a small CNN built to stress post-training
// quantization, and a seq2seq-shaped FC stack. Weight data lives in
// graph.weight_data; `inputs` is one ready-to-run sample batch. Everything is
// seeded internally, so repeated calls are bit-identical.
namespace inferlab::fixtures {

struct Model {
  ir::Graph graph;
  std::map<std::string, Tensor> inputs;
};

// Two SparseLengthsSum tables pooled and concatenated into a small FC stack
// (7 nodes). Tables are several MB while per-run touched rows stay around a
// megabyte, so the model is DRAM-bound at any on-chip capacity that cannot
// pin a whole table.
Model recommendation();

// One u8xi8 FC large enough that compute time beats its DRAM traffic at
// 100 TOP/s vs 100 GB/s; the roofline saturates at every capacity. Analysis
// only: the f32 executor does not run integer weights without a plan.
Model compute_bound_fc();

// Conv stack over [4,32,56,56] activations with two depthwise layers; weights
// total ~150 KB against ~1.6 MB per activation, so mid-range capacities leave
// it DRAM-bound and large ones make the on-chip path the binding term.
Model cv_net();

// Conv-Relu-Conv-Relu-Flatten-FC-Softmax toy classifier. The first conv's
// weights and the fc's rows carry planted outliers and the sample inputs are
// heavy-tailed, so solo-layer quantization error is large for conv1 and fc
// but small for conv2 — the shape selective fallback is meant to catch.
Model toy_cnn();

// Residual FC stack with a vocab projection and Softmax, seq2seq texture.
Model nmt_stack();

// Heavy-tailed calibration batches matching toy_cnn's input distribution.
std::vector<std::map<std::string, Tensor>> toy_cnn_batches(int n, std::uint64_t seed = 99);

// Mining corpus: five graphs carrying a Concat->BatchMatMul->Flatten chain at
// their graph boundary (large tensors) plus per-graph small noise components,
// and two noise-only graphs. Mining at support 3 finds the chain five times.
std::vector<ir::Graph> mining_corpus();

}  // namespace inferlab::fixtures
