// SPDX-License-Identifier: Apache-2.0
//
// Training drivers for the three stages, reconstruction evaluation, and the
// checkpoint/CSV glue shared by the CLI and the test suites.

#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "alto/grpo.hpp"
#include "alto/length_predictor.hpp"
#include "alto/policy.hpp"
#include "alto/shapes.hpp"
#include "alto/tokenizer.hpp"

namespace alto {

// ---------------------------------------------------------------------- stage 1

struct Stage1Config {
    int epochs = 18;
    int batch = 8;
    double lr = 1e-3;
    uint64_t seed = 1;
    bool tail_drop = true;      // n ~ Uniform{1..32} per step; false keeps all 32
    double vq_weight = 1.0;
    double px_dropout = 0.25;   // chance of zeroed pixel features per step
    int eval_subset = 64;       // held-out samples used for per-epoch gIoU logging
};

struct Stage1EpochRow {
    int epoch = 0;
    double loss = 0.0;
    double giou_k2 = 0.0, giou_k8 = 0.0, giou_k16 = 0.0, giou_k32 = 0.0;
};

struct Stage1Result {
    std::vector<Stage1EpochRow> history;
};

/// Joint tokenizer/de-tokenizer training with random tail-drop. Aborts with
/// TrainingAbort on divergence after restoring the last finite-loss epoch.
template <typename S>
Stage1Result train_stage1(Tokenizer<S>& tok, const std::vector<LoadedSample>& train,
                          const std::vector<LoadedSample>& val, const Stage1Config& cfg,
                          std::ostream* log = nullptr);

// -------------------------------------------------------------------- stage 1.5

struct Stage15Config {
    double lambda = 1e-2;
    int epochs = 8;
    int batch = 16;
    double lr = 3e-3;
    uint64_t seed = 1;
    int eval_subset = 128;
};

struct Stage15EpochRow {
    int epoch = 0;
    double mean_len = 0.0;   // mean predicted expected length on the eval set
    double std_len = 0.0;
    double entropy = 0.0;    // mean entropy of the stopping distribution
    double giou_at_pred_len = 0.0;
};

struct Stage15Result {
    std::vector<Stage15EpochRow> history;
};

/// Trains only the length predictor against frozen tokenizer weights; throws
/// std::logic_error if any frozen weight drifts.
template <typename S>
Stage15Result train_stage15(Tokenizer<S>& tok, LengthPredictor<S>& lp,
                            const std::vector<LoadedSample>& train,
                            const std::vector<LoadedSample>& val, const Stage15Config& cfg,
                            std::ostream* log = nullptr);

// ---------------------------------------------------------------------- stage 3

struct Stage3Config {
    double alpha = 1e-2;
    double beta = 1e-3;
    double epsilon = 0.2;
    int group_size = 12;
    double temperature = 1.0;
    int top_k = 10;
    int steps = 500;
    int prompts_per_step = 4;
    double lr = 1e-3;
    uint64_t seed = 1;
    std::string kl_estimator = "k1";
    int collapse_limit = 50;  // consecutive all-invalid steps before aborting
};

struct Stage3StepRow {
    int step = 0;
    double mean_len = 0.0;
    double mean_iou = 0.0;
    double entropy = 0.0;
    double frac_valid = 0.0;
    double mean_reward = 0.0;
};

struct Stage3Result {
    std::vector<Stage3StepRow> history;
};

template <typename S>
Stage3Result train_stage3(Policy<S>& policy, Tokenizer<S>& frozen_tok,
                          const std::vector<LoadedSample>& prompts, const Stage3Config& cfg,
                          std::ostream* log = nullptr);

// ------------------------------------------------------------------- evaluation

enum class EvalMode { fixed, adaptive };

struct ReconEval {
    MetricReport report;
    double mean_len = 0.0;
    std::vector<double> keeps;   // integer keep per sample
    std::vector<double> l_hats;  // real-valued expected lengths (adaptive mode)
};

/// Reconstruction metrics. Fixed mode decodes all 32 tokens; adaptive mode
/// keeps ceil(l_hat) tokens from the length predictor (required then).
template <typename S>
ReconEval evaluate_reconstruction(Tokenizer<S>& tok, LengthPredictor<S>* lp,
                                  const std::vector<LoadedSample>& samples, EvalMode mode);

struct PolicyEval {
    double mean_len = 0.0;
    double giou = 0.0;   // mean per-sample IoU of greedy generations
    double frac_valid = 0.0;
};

template <typename S>
PolicyEval evaluate_policy(const Policy<S>& policy, Tokenizer<S>& tok,
                           const std::vector<LoadedSample>& prompts);

// ------------------------------------------------------------------ checkpoints

template <typename S>
void save_tokenizer_checkpoint(const std::string& path, const Tokenizer<S>& tok,
                               const LengthPredictor<S>* lp = nullptr);

template <typename S>
struct LoadedModel {
    TokenizerConfig config;
    std::unique_ptr<Tokenizer<S>> tokenizer;
    std::unique_ptr<LengthPredictor<S>> length_predictor;  // null if absent
};

template <typename S>
LoadedModel<S> load_tokenizer_checkpoint(const std::string& path);

template <typename S>
void save_policy_checkpoint(const std::string& path, const Policy<S>& policy);

template <typename S>
struct LoadedPolicy {
    PolicyConfig config;
    std::unique_ptr<Policy<S>> policy;
};

template <typename S>
LoadedPolicy<S> load_policy_checkpoint(const std::string& path);

// -------------------------------------------------------------------------- csv

std::string format_number(double v);
void write_stage1_csv(const std::string& path, const std::vector<Stage1EpochRow>& rows);
void write_stage15_csv(const std::string& path, const std::vector<Stage15EpochRow>& rows);
void write_stage3_csv(const std::string& path, const std::vector<Stage3StepRow>& rows);

}  // namespace alto
