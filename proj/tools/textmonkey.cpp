// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: forward, redundancy, filter, eval, prompt, markup, gradcheck.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "textmonkey/textmonkey.hpp"

namespace txm = textmonkey;

namespace {

struct PipelineOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string resolution;
  std::size_t r = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string weights_path;
  bool random_init = false;
  std::size_t threads = 1;
};

void add_pipeline_options(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--config", o.config_path, "Config file of key = value lines");
  cmd->add_option("--set", o.overrides, "Override a config key (key=value); repeatable");
  cmd->add_option("--resolution", o.resolution, "Pipeline resolution, N or HxW (multiples of 448)");
  cmd->add_option("--r", o.r, "Tokens kept by the token resampler");
  cmd->add_option("--seed", o.seed, "Seed for random init (falls back to TM_SEED)");
  cmd->add_option("--weights", o.weights_path, "Weight archive");
  cmd->add_flag("--random-init", o.random_init, "Use seeded random weights");
  cmd->add_option("--threads", o.threads, "Worker threads for per-window stages")->check(CLI::PositiveNumber);
}

/// Defaults, then TM_SEED, then the config file, then flags.
txm::PipelineConfig resolve_config(const PipelineOptions& o, const CLI::App* cmd) {
  txm::PipelineConfig cfg;
  if (const char* env = std::getenv("TM_SEED")) txm::apply_setting(cfg, "seed", env);
  if (!o.config_path.empty()) txm::apply_config_file(cfg, o.config_path);
  for (const auto& kv : o.overrides) txm::apply_override(cfg, kv);
  if (!o.resolution.empty()) {
    const auto x = o.resolution.find('x');
    if (x == std::string::npos) {
      txm::apply_setting(cfg, "resolution.h", o.resolution);
      txm::apply_setting(cfg, "resolution.w", o.resolution);
    } else {
      txm::apply_setting(cfg, "resolution.h", o.resolution.substr(0, x));
      txm::apply_setting(cfg, "resolution.w", o.resolution.substr(x + 1));
    }
  }
  if (cmd->count("--r")) cfg.token_r = o.r;
  if (cmd->count("--seed")) cfg.seed = o.seed;
  if (!o.weights_path.empty()) cfg.weights_path = o.weights_path;
  cfg.validate();
  return cfg;
}

txm::PipelineWeights resolve_weights(const PipelineOptions& o, const txm::PipelineConfig& cfg) {
  if (o.random_init) return txm::PipelineWeights::random(cfg, cfg.seed);
  if (cfg.weights_path.empty()) {
    throw txm::ConfigError("no weight archive given; pass --weights PATH or --random-init", "weights.path");
  }
  return txm::PipelineWeights::load(txm::TensorArchive::load(cfg.weights_path), cfg);
}

std::vector<double> parse_thresholds(const std::string& s) {
  if (s.empty()) return txm::default_thresholds();
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw txm::ParameterError("bad threshold '" + item + "'");
    }
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw txm::IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

int run_forward(const std::string& image_path, const std::string& dump_path, const std::string& save_weights,
                const PipelineOptions& o, const CLI::App* cmd) {
  const txm::PipelineConfig cfg = resolve_config(o, cmd);
  const txm::PipelineWeights weights = resolve_weights(o, cfg);
  if (!save_weights.empty()) weights.to_archive().save(save_weights);
  const txm::RawImage image = txm::read_ppm(image_path);
  const txm::ForwardResult r = txm::forward(image, cfg, weights, o.threads);
  std::printf("windows: %zu\nL_before: %zu\nr_after: %zu\nwall_ms: %.1f\n", r.windows, r.tokens_before,
              r.tokens_after, r.wall_ms);
  if (!dump_path.empty()) txm::dump_archive(r).save(dump_path);
  return 0;
}

txm::Tensor tokens_for_analysis(const std::string& dump_path, const std::string& tensor, const std::string& image_path,
                               const PipelineOptions& o, const CLI::App* cmd) {
  if (!dump_path.empty()) return txm::TensorArchive::load(dump_path).get(tensor);
  if (image_path.empty()) throw txm::ParameterError("give --dump PATH or --image PATH");
  const txm::PipelineConfig cfg = resolve_config(o, cmd);
  const txm::ForwardResult r = txm::forward(txm::read_ppm(image_path), cfg, resolve_weights(o, cfg), o.threads);
  return tensor == "tokens.resampled" ? r.output : r.assembled.tokens;
}

int run_redundancy(const std::string& dump_path, const std::string& tensor, const std::string& image_path,
                   const std::string& thresholds, const std::string& out_path, const std::string& label,
                   const PipelineOptions& o, const CLI::App* cmd) {
  const txm::Tensor tokens = tokens_for_analysis(dump_path, tensor, image_path, o, cmd);
  const txm::RedundancyReport report = txm::redundancy_sweep(tokens, parse_thresholds(thresholds), label);
  txm::emit_report(report, out_path);
  bool printed = false;
  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    if (std::abs(report.thresholds[k] - 0.8) < 1e-12) {
      std::printf("threshold 0.8: %zu/%zu redundant (%.4f)\n", report.redundant_counts[k], report.token_count,
                  report.fraction(k));
      printed = true;
    }
  }
  if (!printed) std::printf("threshold 0.8 not in sweep; %zu thresholds written\n", report.thresholds.size());
  std::printf("report: %s\n", out_path.c_str());
  return 0;
}

int run_filter(const std::string& dump_path, const std::string& tensor, const std::string& image_path, std::size_t r,
               bool show_importances, const PipelineOptions& o, const CLI::App* cmd) {
  const txm::Tensor tokens = tokens_for_analysis(dump_path, tensor, image_path, o, cmd);
  const txm::ImportanceRanking ranking = txm::token_filter(tokens, r);
  std::printf("kept %zu of %zu tokens\n", ranking.selected.size(), tokens.rows());
  for (std::size_t i = 0; i < ranking.selected.size(); ++i) std::printf("%s%zu", i ? " " : "", ranking.selected[i]);
  std::printf("\n");
  if (show_importances) {
    for (std::size_t i = 0; i < ranking.importances.size(); ++i) std::printf("%zu,%.6f\n", i, ranking.importances[i]);
  }
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& gt_path, const std::string& metric, bool verbose) {
  const txm::EvalSummary s = txm::evaluate(metric, txm::read_jsonl(pred_path), txm::read_jsonl(gt_path));
  std::printf("%-10s %-8s %s\n", "metric", "records", "score");
  std::printf("%-10s %-8zu %.4f\n", s.metric.c_str(), s.records, s.score);
  if (verbose) {
    for (const auto& d : s.per_record) {
      if (d.score < 1.0) std::printf("  [%s] score=%.4f %s\n", d.id.c_str(), d.score, d.detail.c_str());
    }
  }
  return 0;
}

int run_prompt(const std::string& task, const std::string& question, bool has_question) {
  const auto q = has_question ? std::optional<std::string>(question) : std::nullopt;
  std::printf("%s\n", txm::build_prompt(txm::parse_prompt_task(task), q).c_str());
  return 0;
}

int run_markup(const std::string& path, std::size_t generate, std::uint64_t seed) {
  if (generate > 0) {
    std::mt19937_64 rng(seed);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw txm::IoError("cannot open '" + path + "' for writing");
    for (std::size_t i = 0; i < generate; ++i) f << txm::serialize_grounded(txm::generate_span(rng)) << "\n";
    std::printf("wrote %zu spans to %s\n", generate, path.c_str());
    return 0;
  }
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t spans = 0, diffs = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto parsed = txm::parse_grounded(line);
    spans += parsed.size();
    if (txm::serialize_grounded(parsed) != line) {
      ++diffs;
      std::fprintf(stderr, "line %zu does not round-trip\n", lineno);
    }
  }
  std::printf("%s, %zu spans, %zu diffs\n", diffs ? "FAIL" : "OK", spans, diffs);
  return diffs ? 1 : 0;
}

int run_gradcheck(double h, std::uint64_t seed, double tolerance) {
  txm::Rng rng(seed);
  bool ok = true;
  auto report = [&](const char* name, const txm::DerivativeProbe& p) {
    const bool pass = p.relative_error() <= tolerance;
    ok = ok && pass;
    std::printf("%-22s analytic=% .10e numeric=% .10e rel=%.2e %s\n", name, p.analytic, p.numeric, p.relative_error(),
                pass ? "ok" : "FAIL");
  };

  // Softmax probe: f(x) = <c, softmax(x)>.
  const txm::Tensor x = rng.normal({3, 8}, 1.0), dx = rng.normal({3, 8}, 1.0), c = rng.normal({3, 8}, 1.0);
  auto inner = [](const txm::Tensor& a, const txm::Tensor& b) { return txm::dot(a.data(), b.data()); };
  report("softmax", txm::directional_derivative_check(
                        [&](const txm::Tensor& t) { return inner(c, txm::softmax(t)); },
                        [&](const txm::Tensor& t, const txm::Tensor& d) { return inner(c, txm::softmax_jvp(t, d)); },
                        x, dx, h));

  // Attention probes: f(q) = <c, attention(q, k, v)> and the same along k and v.
  const txm::Tensor q = rng.normal({4, 8}, 1.0), k = rng.normal({6, 8}, 1.0), v = rng.normal({6, 5}, 1.0);
  const txm::Tensor co = rng.normal({4, 5}, 1.0);
  const txm::Tensor dq = rng.normal({4, 8}, 1.0), dk = rng.normal({6, 8}, 1.0), dv = rng.normal({6, 5}, 1.0);
  const txm::Tensor zq = txm::Tensor::zeros({4, 8}), zk = txm::Tensor::zeros({6, 8}), zv = txm::Tensor::zeros({6, 5});
  report("attention/query", txm::directional_derivative_check(
                                [&](const txm::Tensor& t) { return inner(co, txm::scaled_dot_attention(t, k, v)); },
                                [&](const txm::Tensor& t, const txm::Tensor& d) {
                                  return inner(co, txm::attention_jvp(t, k, v, d, zk, zv));
                                },
                                q, dq, h));
  report("attention/key", txm::directional_derivative_check(
                              [&](const txm::Tensor& t) { return inner(co, txm::scaled_dot_attention(q, t, v)); },
                              [&](const txm::Tensor& t, const txm::Tensor& d) {
                                return inner(co, txm::attention_jvp(q, t, v, zq, d, zv));
                              },
                              k, dk, h));
  report("attention/value", txm::directional_derivative_check(
                                [&](const txm::Tensor& t) { return inner(co, txm::scaled_dot_attention(q, k, t)); },
                                [&](const txm::Tensor& t, const txm::Tensor& d) {
                                  return inner(co, txm::attention_jvp(q, k, t, zq, zk, d));
                                },
                                v, dv, h));
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale TextMonkey vision front-end, grounding markup and metrics"};
  app.require_subcommand(1);

  PipelineOptions fwd_opts;
  std::string fwd_image, fwd_dump, fwd_save;
  auto* fwd = app.add_subcommand("forward", "Run split, encode, resample and token resample on an image");
  fwd->add_option("image", fwd_image, "Input image (PPM)")->required();
  fwd->add_option("--dump", fwd_dump, "Write assembled and resampled tokens to a tensor archive");
  fwd->add_option("--save-weights", fwd_save, "Write the weights in use to a tensor archive");
  add_pipeline_options(fwd, fwd_opts);

  PipelineOptions red_opts;
  std::string red_dump, red_tensor = "tokens.assembled", red_image, red_thresholds, red_out = "redundancy.csv", red_label;
  auto* red = app.add_subcommand("redundancy", "Sweep redundancy thresholds over a token set");
  red->add_option("--dump", red_dump, "Token archive written by forward --dump");
  red->add_option("--tensor", red_tensor, "Tensor to analyse")->capture_default_str();
  red->add_option("--image", red_image, "Run forward on this image instead of reading a dump");
  red->add_option("--thresholds", red_thresholds, "Comma-separated ascending thresholds (default 0.50..0.95)");
  red->add_option("--out", red_out, "CSV report path")->capture_default_str();
  red->add_option("--label", red_label, "Resolution label recorded in the report");
  add_pipeline_options(red, red_opts);

  PipelineOptions flt_opts;
  std::string flt_dump, flt_tensor = "tokens.assembled", flt_image;
  std::size_t flt_r = 0;
  bool flt_imp = false;
  auto* flt = app.add_subcommand("filter", "Select the r least redundant tokens");
  flt->add_option("--dump", flt_dump, "Token archive written by forward --dump");
  flt->add_option("--tensor", flt_tensor, "Tensor to filter")->capture_default_str();
  flt->add_option("--image", flt_image, "Run forward on this image instead of reading a dump");
  flt->add_option("--keep", flt_r, "Tokens to keep")->required();
  flt->add_flag("--importances", flt_imp, "Also print index,importance for every token");
  add_pipeline_options(flt, flt_opts);

  std::string ev_pred, ev_gt, ev_metric;
  bool ev_verbose = false;
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--pred", ev_pred, "Predictions (JSONL)")->required();
  ev->add_option("--gt", ev_gt, "Ground truth (JSONL)")->required();
  ev->add_option("--metric", ev_metric, "contains | anls | relaxed | f1 | trans | pos")->required();
  ev->add_flag("--verbose", ev_verbose, "List records that are not fully correct");

  std::string pr_task, pr_question;
  auto* pr = app.add_subcommand("prompt", "Print a task prompt");
  pr->add_option("task", pr_task, "read-all | text-spotting | original | position | recognition | vqa-grounding")
      ->required();
  auto* pr_q = pr->add_option("question", pr_question, "Question (or text for position)");

  std::string mk_path;
  std::size_t mk_generate = 0;
  std::uint64_t mk_seed = 0;
  auto* mk = app.add_subcommand("markup", "Check that a file of grounded strings round-trips");
  mk->add_option("file", mk_path, "One grounded string per line")->required();
  mk->add_option("--generate", mk_generate, "Write N random spans to FILE instead of checking it");
  mk->add_option("--seed", mk_seed, "Seed for --generate");

  double gc_h = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "Compare closed-form derivatives with central differences");
  gc->add_option("--step", gc_h, "Finite-difference step")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Seed for probe inputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fwd) return run_forward(fwd_image, fwd_dump, fwd_save, fwd_opts, fwd);
    if (*red) return run_redundancy(red_dump, red_tensor, red_image, red_thresholds, red_out, red_label, red_opts, red);
    if (*flt) return run_filter(flt_dump, flt_tensor, flt_image, flt_r, flt_imp, flt_opts, flt);
    if (*ev) return run_eval(ev_pred, ev_gt, ev_metric, ev_verbose);
    if (*pr) return run_prompt(pr_task, pr_question, pr_q->count() > 0);
    if (*mk) return run_markup(mk_path, mk_generate, mk_seed);
    if (*gc) {
      if (!gc->count("--seed")) {
        if (const char* env = std::getenv("TM_SEED")) gc_seed = std::strtoull(env, nullptr, 10);
      }
      return run_gradcheck(gc_h, gc_seed, gc_tol);
    }
  } catch (const txm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const txm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
