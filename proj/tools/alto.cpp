// SPDX-License-Identifier: Apache-2.0
//
// alto CLI: synthetic mask data generation, the three training stages,
// reconstruction evaluation, and lambda/alpha sweeps.
//
// Exit codes: 0 success, 2 usage/validation error, 3 training abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "alto/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitAbort = 3;

uint64_t apply_seed_env(uint64_t seed) {
    if (const char* env = std::getenv("ALTO_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env) return static_cast<uint64_t>(v);
    }
    return seed;
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out))
        alto::fail("output directory is not writable: ", out);
}

void write_run_json(const std::string& out_dir, const json& j) {
    std::ofstream f(fs::path(out_dir) / "run.json", std::ios::trunc);
    alto::require(f.good(), "cannot write run.json in ", out_dir);
    f << j.dump(2) << "\n";
}

int infer_grid(const std::vector<alto::LoadedSample>& data) {
    const int g = data.front().mask.height;
    for (const auto& s : data)
        alto::require(s.mask.height == g && s.mask.width == g,
                      "dataset contains mixed grid sizes");
    return g;
}

// ------------------------------------------------------------------- gen-data

struct GenDataArgs {
    uint64_t seed = 1;
    int count = 512;
    int grid = 64;
    int max_components = 3;
    std::string out;
};

int run_gen_data(const GenDataArgs& a0) {
    GenDataArgs a = a0;
    a.seed = apply_seed_env(a.seed);
    ensure_out_dir(a.out);
    const auto samples = alto::generate_dataset(a.seed, a.count, a.grid, a.max_components);
    alto::write_dataset(a.out, samples);
    write_run_json(a.out, json{{"command", "gen-data"},
                               {"seed", a.seed},
                               {"count", a.count},
                               {"grid", a.grid},
                               {"max_components", a.max_components},
                               {"out", a.out}});
    std::cout << "wrote " << samples.size() << " masks to " << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------- train

struct TrainCommonArgs {
    std::string data;
    std::string val;
    std::string out;
    uint64_t seed = 1;
    bool f64 = false;
};

struct Stage1Args {
    TrainCommonArgs common;
    alto::Stage1Config cfg;
    alto::TokenizerConfig model;
    bool no_pixel = false;
    std::optional<int> grid;
};

template <typename S>
int run_stage1_t(const Stage1Args& a, const std::vector<alto::LoadedSample>& train,
                 const std::vector<alto::LoadedSample>& val) {
    alto::TokenizerConfig mc = a.model;
    mc.pixel_branch = !a.no_pixel;
    mc.grid = a.grid.value_or(infer_grid(train));
    alto::Tokenizer<S> tok(mc, a.common.seed);
    alto::Stage1Config cfg = a.cfg;
    cfg.seed = a.common.seed;
    auto result = alto::train_stage1(tok, train, val, cfg, &std::cout);
    alto::write_stage1_csv((fs::path(a.common.out) / "metrics.csv").string(), result.history);
    alto::save_tokenizer_checkpoint((fs::path(a.common.out) / "checkpoint.alto").string(), tok);
    return kExitOk;
}

int run_stage1(Stage1Args a) {
    a.common.seed = apply_seed_env(a.common.seed);
    ensure_out_dir(a.common.out);
    const auto train = alto::load_dataset(a.common.data);
    const auto val = a.common.val.empty() ? std::vector<alto::LoadedSample>{}
                                          : alto::load_dataset(a.common.val);
    write_run_json(a.common.out,
                   json{{"command", "train stage1"},
                        {"data", a.common.data},
                        {"val", a.common.val},
                        {"out", a.common.out},
                        {"seed", a.common.seed},
                        {"f64", a.common.f64},
                        {"epochs", a.cfg.epochs},
                        {"batch", a.cfg.batch},
                        {"lr", a.cfg.lr},
                        {"tail_drop", a.cfg.tail_drop},
                        {"vq_weight", a.cfg.vq_weight},
                        {"px_dropout", a.cfg.px_dropout},
                        {"eval_subset", a.cfg.eval_subset},
                        {"grid", a.grid ? json(*a.grid) : json(nullptr)},
                        {"patch", a.model.patch},
                        {"d", a.model.d},
                        {"blocks", a.model.blocks},
                        {"heads", a.model.heads},
                        {"codebook", a.model.codebook},
                        {"pixel_branch", !a.no_pixel}});
    return a.common.f64 ? run_stage1_t<double>(a, train, val)
                        : run_stage1_t<float>(a, train, val);
}

struct Stage15Args {
    TrainCommonArgs common;
    alto::Stage15Config cfg;
    std::string from_stage1;
    bool identity_q = false;
};

template <typename S>
int run_stage15_t(const Stage15Args& a, const std::vector<alto::LoadedSample>& train,
                  const std::vector<alto::LoadedSample>& val) {
    auto loaded = alto::load_tokenizer_checkpoint<S>(a.from_stage1);
    alto::LengthPredictorConfig lc;
    lc.d = loaded.config.d;
    lc.n_tokens = loaded.config.n_latent;
    lc.learned_query = !a.identity_q;
    alto::LengthPredictor<S> lp(lc, a.common.seed);
    alto::Stage15Config cfg = a.cfg;
    cfg.seed = a.common.seed;
    auto result = alto::train_stage15(*loaded.tokenizer, lp, train, val, cfg, &std::cout);
    alto::write_stage15_csv((fs::path(a.common.out) / "metrics.csv").string(), result.history);
    alto::save_tokenizer_checkpoint((fs::path(a.common.out) / "checkpoint.alto").string(),
                                    *loaded.tokenizer, &lp);
    return kExitOk;
}

int run_stage15(Stage15Args a) {
    a.common.seed = apply_seed_env(a.common.seed);
    alto::require(fs::exists(a.from_stage1), "missing stage-1 checkpoint: ", a.from_stage1);
    ensure_out_dir(a.common.out);
    const auto train = alto::load_dataset(a.common.data);
    const auto val = a.common.val.empty() ? std::vector<alto::LoadedSample>{}
                                          : alto::load_dataset(a.common.val);
    write_run_json(a.common.out, json{{"command", "train stage15"},
                                      {"data", a.common.data},
                                      {"val", a.common.val},
                                      {"out", a.common.out},
                                      {"seed", a.common.seed},
                                      {"f64", a.common.f64},
                                      {"from_stage1", a.from_stage1},
                                      {"lambda", a.cfg.lambda},
                                      {"epochs", a.cfg.epochs},
                                      {"batch", a.cfg.batch},
                                      {"lr", a.cfg.lr},
                                      {"eval_subset", a.cfg.eval_subset},
                                      {"identity_q", a.identity_q}});
    return a.common.f64 ? run_stage15_t<double>(a, train, val)
                        : run_stage15_t<float>(a, train, val);
}

struct Stage3Args {
    TrainCommonArgs common;
    alto::Stage3Config cfg;
    std::string from_stage1;
    std::string from_stage15;
    std::string config_file;
    int policy_d = 64;
    int policy_blocks = 2;
    int policy_heads = 4;
};

void apply_stage3_config_file(const std::string& path, alto::Stage3Config& cfg,
                              uint64_t& seed) {
    std::ifstream f(path);
    alto::require(f.good(), "cannot open config file: ", path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        alto::fail("bad config file ", path, ": ", e.what());
    }
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
    if (j.contains("group_size")) cfg.group_size = j["group_size"].get<int>();
    if (j.contains("temperature")) cfg.temperature = j["temperature"].get<double>();
    if (j.contains("top_k")) cfg.top_k = j["top_k"].get<int>();
    if (j.contains("steps")) cfg.steps = j["steps"].get<int>();
    if (j.contains("seed")) seed = j["seed"].get<uint64_t>();
    if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
    if (j.contains("prompts_per_step")) cfg.prompts_per_step = j["prompts_per_step"].get<int>();
    if (j.contains("kl_estimator")) cfg.kl_estimator = j["kl_estimator"].get<std::string>();
}

template <typename S>
int run_stage3_t(const Stage3Args& a, const std::vector<alto::LoadedSample>& prompts) {
    const std::string& ckpt = a.from_stage15.empty() ? a.from_stage1 : a.from_stage15;
    auto loaded = alto::load_tokenizer_checkpoint<S>(ckpt);
    alto::PolicyConfig pc;
    pc.codebook = loaded.config.codebook;
    pc.d = a.policy_d;
    pc.blocks = a.policy_blocks;
    pc.heads = a.policy_heads;
    pc.max_mask_tokens = loaded.config.n_latent;
    pc.grid = loaded.config.grid;
    pc.patch = loaded.config.patch;
    alto::Policy<S> policy(pc, a.common.seed);
    alto::Stage3Config cfg = a.cfg;
    cfg.seed = a.common.seed;
    auto result = alto::train_stage3(policy, *loaded.tokenizer, prompts, cfg, &std::cout);
    alto::write_stage3_csv((fs::path(a.common.out) / "metrics.csv").string(), result.history);
    alto::save_policy_checkpoint((fs::path(a.common.out) / "policy.alto").string(), policy);
    return kExitOk;
}

int run_stage3(Stage3Args a) {
    if (!a.config_file.empty())
        apply_stage3_config_file(a.config_file, a.cfg, a.common.seed);
    a.common.seed = apply_seed_env(a.common.seed);
    alto::require(!a.from_stage1.empty() || !a.from_stage15.empty(),
                  "stage3 requires --from-stage1 or --from-stage15");
    const std::string& ckpt = a.from_stage15.empty() ? a.from_stage1 : a.from_stage15;
    alto::require(fs::exists(ckpt), "missing checkpoint: ", ckpt);
    ensure_out_dir(a.common.out);
    const auto prompts = alto::load_dataset(a.common.data);
    write_run_json(a.common.out, json{{"command", "train stage3"},
                                      {"data", a.common.data},
                                      {"out", a.common.out},
                                      {"seed", a.common.seed},
                                      {"f64", a.common.f64},
                                      {"from", ckpt},
                                      {"alpha", a.cfg.alpha},
                                      {"beta", a.cfg.beta},
                                      {"epsilon", a.cfg.epsilon},
                                      {"group_size", a.cfg.group_size},
                                      {"temperature", a.cfg.temperature},
                                      {"top_k", a.cfg.top_k},
                                      {"steps", a.cfg.steps},
                                      {"prompts_per_step", a.cfg.prompts_per_step},
                                      {"lr", a.cfg.lr},
                                      {"kl_estimator", a.cfg.kl_estimator},
                                      {"policy_d", a.policy_d},
                                      {"policy_blocks", a.policy_blocks},
                                      {"policy_heads", a.policy_heads}});
    return a.common.f64 ? run_stage3_t<double>(a, prompts) : run_stage3_t<float>(a, prompts);
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string mode = "fixed";
    std::string out;
    bool f64 = false;
};

template <typename S>
int run_eval_t(const EvalArgs& a) {
    auto loaded = alto::load_tokenizer_checkpoint<S>(a.ckpt);
    const auto data = alto::load_dataset(a.data);
    const alto::EvalMode mode = a.mode == "adaptive" ? alto::EvalMode::adaptive
                                                     : alto::EvalMode::fixed;
    if (mode == alto::EvalMode::adaptive)
        alto::require(loaded.length_predictor != nullptr,
                      "adaptive mode needs a checkpoint with length-predictor weights");
    auto eval = alto::evaluate_reconstruction(*loaded.tokenizer,
                                              loaded.length_predictor.get(), data, mode);
    std::cout << "mode " << a.mode << "\n"
              << "gIoU " << alto::format_number(eval.report.giou) << "\n"
              << "cIoU " << alto::format_number(eval.report.ciou) << "\n"
              << "mean token length " << alto::format_number(eval.mean_len) << "\n";
    if (!a.out.empty()) {
        ensure_out_dir(a.out);
        std::ofstream csv(fs::path(a.out) / "eval.csv", std::ios::trunc);
        alto::require(csv.good(), "cannot write eval.csv in ", a.out);
        csv << "mode,giou,ciou,mean_len\n"
            << a.mode << "," << alto::format_number(eval.report.giou) << ","
            << alto::format_number(eval.report.ciou) << ","
            << alto::format_number(eval.mean_len) << "\n";
        write_run_json(a.out, json{{"command", "eval"},
                                   {"ckpt", a.ckpt},
                                   {"data", a.data},
                                   {"mode", a.mode},
                                   {"f64", a.f64}});
    }
    return kExitOk;
}

int run_eval(const EvalArgs& a) {
    alto::require(a.mode == "fixed" || a.mode == "adaptive", "--mode must be fixed|adaptive, got ",
                  a.mode);
    alto::require(fs::exists(a.ckpt), "missing checkpoint: ", a.ckpt);
    return a.f64 ? run_eval_t<double>(a) : run_eval_t<float>(a);
}

// ---------------------------------------------------------------------- sweep

struct SweepArgs {
    std::string param;  // lambda | alpha
    std::vector<double> values;
    std::string from_stage1;
    std::string from_stage15;
    std::string data;
    std::string val;
    std::string out;
    uint64_t seed = 1;
    bool f64 = false;
    int jobs = 1;
    alto::Stage15Config s15;
    alto::Stage3Config s3;
};

struct SweepRow {
    double value = 0.0;
    double mean_len = 0.0;
    double giou = 0.0;
};

template <typename S>
SweepRow sweep_one_lambda(const SweepArgs& a, double lambda, const std::string& out_dir,
                          const std::vector<alto::LoadedSample>& train,
                          const std::vector<alto::LoadedSample>& val) {
    auto loaded = alto::load_tokenizer_checkpoint<S>(a.from_stage1);
    alto::LengthPredictorConfig lc;
    lc.d = loaded.config.d;
    lc.n_tokens = loaded.config.n_latent;
    alto::LengthPredictor<S> lp(lc, a.seed);
    alto::Stage15Config cfg = a.s15;
    cfg.lambda = lambda;
    cfg.seed = a.seed;
    auto result = alto::train_stage15(*loaded.tokenizer, lp, train, val, cfg, nullptr);
    alto::write_stage15_csv((fs::path(out_dir) / "metrics.csv").string(), result.history);
    alto::save_tokenizer_checkpoint((fs::path(out_dir) / "checkpoint.alto").string(),
                                    *loaded.tokenizer, &lp);
    const auto& eval_set = val.empty() ? train : val;
    auto eval = alto::evaluate_reconstruction(*loaded.tokenizer, &lp, eval_set,
                                              alto::EvalMode::adaptive);
    return SweepRow{lambda, eval.mean_len, eval.report.giou};
}

template <typename S>
SweepRow sweep_one_alpha(const SweepArgs& a, double alpha, const std::string& out_dir,
                         const std::vector<alto::LoadedSample>& train,
                         const std::vector<alto::LoadedSample>& val) {
    const std::string& ckpt = a.from_stage15.empty() ? a.from_stage1 : a.from_stage15;
    auto loaded = alto::load_tokenizer_checkpoint<S>(ckpt);
    alto::PolicyConfig pc;
    pc.codebook = loaded.config.codebook;
    pc.max_mask_tokens = loaded.config.n_latent;
    pc.grid = loaded.config.grid;
    pc.patch = loaded.config.patch;
    alto::Policy<S> policy(pc, a.seed);
    alto::Stage3Config cfg = a.s3;
    cfg.alpha = alpha;
    cfg.seed = a.seed;
    auto result = alto::train_stage3(policy, *loaded.tokenizer, train, cfg, nullptr);
    alto::write_stage3_csv((fs::path(out_dir) / "metrics.csv").string(), result.history);
    alto::save_policy_checkpoint((fs::path(out_dir) / "policy.alto").string(), policy);
    const auto& eval_set = val.empty() ? train : val;
    auto eval = alto::evaluate_policy(policy, *loaded.tokenizer, eval_set);
    return SweepRow{alpha, eval.mean_len, eval.giou};
}

int run_sweep(SweepArgs a) {
    a.seed = apply_seed_env(a.seed);
    alto::require(a.param == "lambda" || a.param == "alpha", "--param must be lambda|alpha");
    alto::require(!a.values.empty(), "sweep needs at least one --values entry");
    for (double v : a.values) alto::require(v >= 0.0, "sweep values must be non-negative");
    alto::require(!a.from_stage1.empty() || (a.param == "alpha" && !a.from_stage15.empty()),
                  "sweep requires --from-stage1");
    ensure_out_dir(a.out);
    const auto train = alto::load_dataset(a.data);
    const auto val = a.val.empty() ? std::vector<alto::LoadedSample>{}
                                   : alto::load_dataset(a.val);

    std::vector<SweepRow> rows(a.values.size());
    std::vector<std::string> dirs;
    for (double v : a.values) {
        std::string d = (fs::path(a.out) / alto::str_cat("val_", alto::format_number(v))).string();
        ensure_out_dir(d);
        dirs.push_back(d);
    }

    auto work = [&](size_t i) {
        if (a.param == "lambda") {
            rows[i] = a.f64 ? sweep_one_lambda<double>(a, a.values[i], dirs[i], train, val)
                            : sweep_one_lambda<float>(a, a.values[i], dirs[i], train, val);
        } else {
            rows[i] = a.f64 ? sweep_one_alpha<double>(a, a.values[i], dirs[i], train, val)
                            : sweep_one_alpha<float>(a, a.values[i], dirs[i], train, val);
        }
    };

    if (a.jobs <= 1) {
        for (size_t i = 0; i < a.values.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        const int jobs = std::min<int>(a.jobs, static_cast<int>(a.values.size()));
        for (int t = 0; t < jobs; ++t)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < a.values.size(); i = next.fetch_add(1))
                    work(i);
            });
        for (auto& th : pool) th.join();
    }

    std::ofstream csv(fs::path(a.out) / "sweep.csv", std::ios::trunc);
    alto::require(csv.good(), "cannot write sweep.csv in ", a.out);
    csv << "value,mean_len,giou\n";
    for (const auto& r : rows)
        csv << alto::format_number(r.value) << "," << alto::format_number(r.mean_len) << ","
            << alto::format_number(r.giou) << "\n";
    write_run_json(a.out, json{{"command", "sweep"},
                               {"param", a.param},
                               {"values", a.values},
                               {"from_stage1", a.from_stage1},
                               {"from_stage15", a.from_stage15},
                               {"data", a.data},
                               {"val", a.val},
                               {"seed", a.seed},
                               {"f64", a.f64},
                               {"jobs", a.jobs}});
    for (const auto& r : rows)
        std::cout << a.param << " " << alto::format_number(r.value) << " mean_len "
                  << alto::format_number(r.mean_len) << " giou " << alto::format_number(r.giou)
                  << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive-length mask tokenizer toolkit"};
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic multi-target mask dataset");
    cmd_gen->add_option("--seed", gen.seed);
    cmd_gen->add_option("--count", gen.count);
    cmd_gen->add_option("--grid", gen.grid);
    cmd_gen->add_option("--max-components", gen.max_components);
    cmd_gen->add_option("--out", gen.out)->required();

    // train
    auto* cmd_train = app.add_subcommand("train", "run a training stage");
    cmd_train->require_subcommand(1);

    Stage1Args s1;
    auto* t1 = cmd_train->add_subcommand("stage1", "tokenizer + de-tokenizer with tail-drop");
    t1->add_option("--data", s1.common.data)->required();
    t1->add_option("--val", s1.common.val);
    t1->add_option("--out", s1.common.out)->required();
    t1->add_option("--seed", s1.common.seed);
    t1->add_flag("--f64", s1.common.f64, "train in 64-bit mode");
    t1->add_option("--epochs", s1.cfg.epochs);
    t1->add_option("--batch", s1.cfg.batch);
    t1->add_option("--lr", s1.cfg.lr);
    t1->add_flag("!--no-tail-drop", s1.cfg.tail_drop, "disable random tail-drop");
    t1->add_option("--vq-weight", s1.cfg.vq_weight);
    t1->add_option("--px-dropout", s1.cfg.px_dropout);
    t1->add_option("--eval-subset", s1.cfg.eval_subset);
    int s1_grid = -1;
    t1->add_option("--grid", s1_grid, "override grid size (default: inferred from data)");
    t1->add_option("--patch", s1.model.patch);
    t1->add_option("--d", s1.model.d);
    t1->add_option("--blocks", s1.model.blocks);
    t1->add_option("--heads", s1.model.heads);
    t1->add_option("--codebook", s1.model.codebook);
    t1->add_flag("--no-pixel", s1.no_pixel, "disable the pixel feature branch");

    Stage15Args s15;
    auto* t15 = cmd_train->add_subcommand("stage15", "token length predictor (frozen tokenizer)");
    t15->add_option("--from-stage1", s15.from_stage1)->required();
    t15->add_option("--data", s15.common.data)->required();
    t15->add_option("--val", s15.common.val);
    t15->add_option("--out", s15.common.out)->required();
    t15->add_option("--seed", s15.common.seed);
    t15->add_flag("--f64", s15.common.f64);
    t15->add_option("--lambda", s15.cfg.lambda);
    t15->add_option("--epochs", s15.cfg.epochs);
    t15->add_option("--batch", s15.cfg.batch);
    t15->add_option("--lr", s15.cfg.lr);
    t15->add_option("--eval-subset", s15.cfg.eval_subset);
    t15->add_flag("--identity-q", s15.identity_q, "use the CLS feature directly as the query");

    Stage3Args s3;
    auto* t3 = cmd_train->add_subcommand("stage3", "GRPO policy training");
    t3->add_option("--from-stage1", s3.from_stage1);
    t3->add_option("--from-stage15", s3.from_stage15);
    t3->add_option("--data", s3.common.data)->required();
    t3->add_option("--out", s3.common.out)->required();
    t3->add_option("--config", s3.config_file, "JSON config (flags override it)");
    t3->add_flag("--f64", s3.common.f64);
    auto* o_alpha = t3->add_option("--alpha", s3.cfg.alpha);
    auto* o_beta = t3->add_option("--beta", s3.cfg.beta);
    auto* o_eps = t3->add_option("--epsilon", s3.cfg.epsilon);
    auto* o_g = t3->add_option("--group-size", s3.cfg.group_size);
    auto* o_temp = t3->add_option("--temperature", s3.cfg.temperature);
    auto* o_topk = t3->add_option("--top-k", s3.cfg.top_k);
    auto* o_steps = t3->add_option("--steps", s3.cfg.steps);
    auto* o_pps = t3->add_option("--prompts-per-step", s3.cfg.prompts_per_step);
    auto* o_lr = t3->add_option("--lr", s3.cfg.lr);
    auto* o_kl = t3->add_option("--kl-estimator", s3.cfg.kl_estimator);
    auto* o_seed3 = t3->add_option("--seed", s3.common.seed);
    t3->add_option("--policy-d", s3.policy_d);
    t3->add_option("--policy-blocks", s3.policy_blocks);
    t3->add_option("--policy-heads", s3.policy_heads);

    // eval
    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "reconstruction metrics for a checkpoint");
    cmd_eval->add_option("--ckpt", ev.ckpt)->required();
    cmd_eval->add_option("--data", ev.data)->required();
    cmd_eval->add_option("--mode", ev.mode, "fixed|adaptive");
    cmd_eval->add_option("--out", ev.out);
    cmd_eval->add_flag("--f64", ev.f64);

    // sweep
    SweepArgs sw;
    auto* cmd_sweep = app.add_subcommand("sweep", "train one setting per value and aggregate");
    cmd_sweep->add_option("--param", sw.param, "lambda|alpha")->required();
    cmd_sweep->add_option("--values", sw.values, "comma separated list")->required()->delimiter(',');
    cmd_sweep->add_option("--from-stage1", sw.from_stage1);
    cmd_sweep->add_option("--from-stage15", sw.from_stage15);
    cmd_sweep->add_option("--data", sw.data)->required();
    cmd_sweep->add_option("--val", sw.val);
    cmd_sweep->add_option("--out", sw.out)->required();
    cmd_sweep->add_option("--seed", sw.seed);
    cmd_sweep->add_flag("--f64", sw.f64);
    cmd_sweep->add_option("--jobs", sw.jobs, "parallel settings (default sequential)");
    cmd_sweep->add_option("--epochs", sw.s15.epochs);
    cmd_sweep->add_option("--batch", sw.s15.batch);
    cmd_sweep->add_option("--lr", sw.s15.lr);
    cmd_sweep->add_option("--steps", sw.s3.steps);
    cmd_sweep->add_option("--group-size", sw.s3.group_size);
    cmd_sweep->add_option("--prompts-per-step", sw.s3.prompts_per_step);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cmd_gen->parsed()) return run_gen_data(gen);
        if (t1->parsed()) return run_stage1(s1);
        if (t15->parsed()) return run_stage15(s15);
        if (t3->parsed()) {
            // config file first, then flags that were explicitly set win
            Stage3Args merged = s3;
            if (!s3.config_file.empty()) {
                alto::Stage3Config file_cfg;
                uint64_t file_seed = merged.common.seed;
                apply_stage3_config_file(s3.config_file, file_cfg, file_seed);
                merged.cfg = file_cfg;
                merged.common.seed = file_seed;
                if (o_alpha->count()) merged.cfg.alpha = s3.cfg.alpha;
                if (o_beta->count()) merged.cfg.beta = s3.cfg.beta;
                if (o_eps->count()) merged.cfg.epsilon = s3.cfg.epsilon;
                if (o_g->count()) merged.cfg.group_size = s3.cfg.group_size;
                if (o_temp->count()) merged.cfg.temperature = s3.cfg.temperature;
                if (o_topk->count()) merged.cfg.top_k = s3.cfg.top_k;
                if (o_steps->count()) merged.cfg.steps = s3.cfg.steps;
                if (o_pps->count()) merged.cfg.prompts_per_step = s3.cfg.prompts_per_step;
                if (o_lr->count()) merged.cfg.lr = s3.cfg.lr;
                if (o_kl->count()) merged.cfg.kl_estimator = s3.cfg.kl_estimator;
                if (o_seed3->count()) merged.common.seed = s3.common.seed;
                merged.config_file.clear();  // already applied
            }
            return run_stage3(merged);
        }
        if (cmd_eval->parsed()) return run_eval(ev);
        if (cmd_sweep->parsed()) return run_sweep(sw);
    } catch (const alto::TrainingAbort& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return kExitAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
