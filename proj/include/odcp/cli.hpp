#pragma once

// Command-line front end: detect, generate, evaluate, experiment, replay.
// Every command that writes files also writes <output>.manifest.json, which
// replay re-executes.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odcp/datagen.hpp"
#include "odcp/detector.hpp"
#include "odcp/eval.hpp"
#include "odcp/io.hpp"
#include "odcp/pipeline.hpp"
#include "odcp/transform.hpp"

#ifndef ODCP_VERSION
#define ODCP_VERSION "0.1.0"
#endif

namespace odcp::cli {

using json = io::json;

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

struct RunManifest {
  std::vector<std::string> command_line;  // without the program name
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_seconds = 0.0;
  std::string version = ODCP_VERSION;

  json to_json() const {
    return json{{"version", version},   {"command_line", command_line},
                {"seed", seed},         {"config", config},
                {"inputs", inputs},     {"outputs", outputs},
                {"duration_seconds", duration_seconds}};
  }
};

inline RunManifest read_manifest(const std::filesystem::path& path) {
  try {
    const json j = json::parse(io::read_file(path));
    RunManifest m;
    m.command_line = j.at("command_line").get<std::vector<std::string>>();
    m.config = j.value("config", json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.duration_seconds = j.value("duration_seconds", 0.0);
    m.version = j.value("version", std::string{});
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0, 0);
  }
}

namespace detail {

struct DetectFlags {
  DetectorConfig cfg;
  std::string method = "random-subset";
  std::string fit = "newton";
  bool no_early_stop = false;
};

inline void add_detect_flags(CLI::App& cmd, DetectFlags& f) {
  cmd.add_option("--alpha", f.cfg.alpha, "significance level")->capture_default_str();
  cmd.add_option("--window", f.cfg.initial_window, "initial active window size I")
      ->capture_default_str();
  cmd.add_option("--batch", f.cfg.batch, "samples appended per step b")->capture_default_str();
  cmd.add_option("--subsets", f.cfg.replicates, "significance replicates M")
      ->capture_default_str();
  cmd.add_option("--min-segment", f.cfg.min_segment, "minimum segment length (0 = automatic)")
      ->capture_default_str();
  cmd.add_option("--eps", f.cfg.eps, "interior clamp for compositional input")
      ->capture_default_str();
  cmd.add_option("--mle-tol", f.cfg.mle_tol, "MLE relative tolerance")->capture_default_str();
  cmd.add_option("--mle-max-iter", f.cfg.mle_max_iter, "MLE iteration cap")->capture_default_str();
  cmd.add_option("--method", f.method, "significance test")
      ->check(CLI::IsMember({"random-subset", "single-subset", "full-permutation"}))
      ->capture_default_str();
  cmd.add_option("--fit", f.fit, "MLE solver")
      ->check(CLI::IsMember({"newton", "fixed-point"}))
      ->capture_default_str();
  cmd.add_flag("--no-early-stop", f.no_early_stop, "always draw all replicates");
}

inline DetectorConfig resolve(const DetectFlags& f, std::uint64_t seed, unsigned threads) {
  DetectorConfig cfg = f.cfg;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.early_stop = !f.no_early_stop;
  cfg.fit_method = f.fit == "newton" ? FitMethod::newton : FitMethod::fixed_point;
  if (f.method == "single-subset") {
    cfg.method = SignificanceMethod::single_subset;
  } else if (f.method == "full-permutation") {
    cfg.method = SignificanceMethod::full_permutation;
  } else {
    cfg.method = SignificanceMethod::random_subset;
  }
  return cfg;
}

struct PresetFlags {
  PresetRequest req;
  std::optional<std::size_t> seg_len;
  std::optional<std::size_t> segments;
  std::optional<std::string> change;
  std::string snr = "high";
  std::optional<double> sparsity;
  std::optional<double> noise;
};

inline void add_preset_flags(CLI::App& cmd, PresetFlags& f) {
  std::string names;
  for (const auto& n : preset_names()) names += (names.empty() ? "" : "|") + n;
  cmd.add_option("--preset", f.req.name, "dataset preset: " + names)->required();
  cmd.add_option("--dim", f.req.d, "base dimension d")->capture_default_str();
  cmd.add_option("--seg-len", f.seg_len, "segment length (500; 300 for sparse presets)");
  cmd.add_option("--segments", f.segments, "number of segments (2; 4 for sparse presets)");
  cmd.add_option("--sym-kl", f.req.sym_kl, "d1: symmetric KL between segments")
      ->capture_default_str();
  cmd.add_option("--change", f.change, "gaussian presets: mean|var")
      ->check(CLI::IsMember({"mean", "var"}));
  cmd.add_option("--snr", f.snr, "gaussian presets: high (label 5, low noise) | low (label 20)")
      ->check(CLI::IsMember({"high", "low"}))
      ->capture_default_str();
  cmd.add_option("--sparsity", f.sparsity, "fraction of coordinates that change (1; 0.5 sparse)");
  cmd.add_option("--noise", f.noise, "gaussian base standard deviation (overrides --snr)");
  cmd.add_option("--perturbation", f.req.mixture_perturbation,
                 "d2: log-scale perturbation of the mixture components")
      ->capture_default_str();
}

inline PresetRequest resolve(const PresetFlags& f, std::uint64_t seed) {
  PresetRequest r = f.req;
  r.seed = seed;
  r.seg_len = f.seg_len;
  r.segments = f.segments;
  r.sparsity = f.sparsity;
  r.noise = f.noise;
  r.snr = f.snr == "low" ? Snr::low : Snr::high;
  if (f.change) r.change = *f.change == "var" ? ChangeKind::var_change : ChangeKind::mean_change;
  return r;
}

inline std::string preset_type(const PresetRequest& r, const GenSpec& spec) {
  if (spec.segments.front().family() != SegmentFamily::gaussian) {
    return to_string(spec.segments.front().family());
  }
  if (r.name.ends_with("-var")) return "var";
  if (r.name.ends_with("-mean")) return "mean";
  return r.change ? to_string(*r.change) : "mean";
}

inline std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  std::filesystem::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& output) {
  std::filesystem::path p = output;
  p += ".manifest.json";
  return p;
}

inline void emit(const std::string& content, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << content;
  } else {
    io::write_atomic(path, content);
  }
}

inline std::size_t tolerance_for(std::optional<std::size_t> explicit_w, double pct,
                                 std::size_t seg_len) {
  if (explicit_w) return *explicit_w;
  return static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(seg_len)));
}

inline std::vector<std::size_t> indices(const std::vector<ChangePointReport>& reports) {
  std::vector<std::size_t> out;
  for (const auto& r : reports) out.push_back(r.global_index);
  return out;
}

inline std::vector<ChangePointReport> run_detection(const Series& series, const DetectorConfig& cfg,
                                                    std::vector<TestRecord>* trace) {
  if (series.kind() == SeriesKind::general) return detect_general(series, cfg, std::nullopt, trace);
  return detect(series, cfg, trace);
}

}  // namespace detail

/// Runs one command. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  const auto started = std::chrono::steady_clock::now();
  CLI::App app{"Change-point detection for compositional and general multivariate series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ODCP_VERSION);

  std::uint64_t seed = 0;
  unsigned threads = 1;

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "detect change points in a CSV series");
  std::string d_input;
  std::string d_output;
  std::string d_mode = "compositional";
  std::string d_trace;
  std::string d_transform;
  detail::DetectFlags d_flags;
  detect_cmd->add_option("--input", d_input, "input CSV, one sample per row")->required();
  detect_cmd->add_option("--output", d_output, "JSON-lines report (stdout if omitted)");
  detect_cmd->add_option("--mode", d_mode, "compositional|general")
      ->check(CLI::IsMember({"compositional", "general"}))
      ->capture_default_str();
  detect_cmd->add_option("--trace", d_trace, "JSON-lines log of every significance test");
  detect_cmd->add_option("--transform", d_transform,
                         "general mode: standardization JSON (mu, sigma) to use instead of fitting");
  detect_cmd->add_option("--seed", seed, "master seed")->capture_default_str();
  detect_cmd->add_option("--threads", threads, "worker threads")->capture_default_str();
  detail::add_detect_flags(*detect_cmd, d_flags);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "write a synthetic series and its truth file");
  detail::PresetFlags g_flags;
  std::string g_output;
  std::string g_truth;
  gen_cmd->add_option("--output", g_output, "series CSV")->required();
  gen_cmd->add_option("--truth", g_truth, "truth JSON (default <output>.truth.json)");
  gen_cmd->add_option("--seed", seed, "master seed")->capture_default_str();
  detail::add_preset_flags(*gen_cmd, g_flags);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score a report against a truth file");
  std::string e_detected;
  std::string e_truth;
  std::string e_output;
  std::string e_sweep_output;
  std::optional<std::size_t> e_tolerance;
  double e_pct = 4.0;
  std::optional<std::size_t> e_seg_len;
  std::optional<std::size_t> e_sweep;
  std::string e_matching = "one-to-one";
  eval_cmd->add_option("--detected", e_detected, "JSON-lines report")->required();
  eval_cmd->add_option("--truth", e_truth, "truth JSON")->required();
  eval_cmd->add_option("--output", e_output, "metrics CSV (stdout if omitted)");
  eval_cmd->add_option("--tolerance", e_tolerance, "tolerance window W in samples");
  eval_cmd->add_option("--tolerance-pct", e_pct, "W as a percentage of the segment length")
      ->capture_default_str();
  eval_cmd->add_option("--segment-length", e_seg_len, "segment length for --tolerance-pct");
  eval_cmd->add_option("--sweep", e_sweep, "also write the curve for W = 0..N");
  eval_cmd->add_option("--sweep-output", e_sweep_output,
                       "curve CSV (default <output>.sweep.csv, or stdout)");
  eval_cmd->add_option("--matching", e_matching, "one-to-one|any")
      ->check(CLI::IsMember({"one-to-one", "any"}))
      ->capture_default_str();

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "generate, detect and score over seeded runs");
  detail::PresetFlags x_preset;
  detail::DetectFlags x_flags;
  std::size_t x_runs = 20;
  std::string x_output;
  std::string x_runs_output;
  std::string x_sweep_output;
  std::optional<std::size_t> x_tolerance;
  double x_pct = 4.0;
  std::optional<std::size_t> x_sweep;
  std::string x_matching = "one-to-one";
  exp_cmd->add_option("--runs", x_runs, "Monte-Carlo runs")->capture_default_str();
  exp_cmd->add_option("--seed", seed, "seed of the first run; run i uses seed + i")
      ->capture_default_str();
  exp_cmd->add_option("--threads", threads, "runs executed concurrently")->capture_default_str();
  exp_cmd->add_option("--output", x_output, "aggregate CSV (stdout if omitted)");
  exp_cmd->add_option("--runs-output", x_runs_output, "per-run CSV");
  exp_cmd->add_option("--tolerance", x_tolerance, "tolerance window W in samples");
  exp_cmd->add_option("--tolerance-pct", x_pct, "W as a percentage of the segment length")
      ->capture_default_str();
  exp_cmd->add_option("--sweep", x_sweep, "also write mean curves for W = 0..N");
  exp_cmd->add_option("--sweep-output", x_sweep_output, "curve CSV");
  exp_cmd->add_option("--matching", x_matching, "one-to-one|any")
      ->check(CLI::IsMember({"one-to-one", "any"}))
      ->capture_default_str();
  detail::add_preset_flags(*exp_cmd, x_preset);
  detail::add_detect_flags(*exp_cmd, x_flags);

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  std::string r_manifest;
  replay_cmd->add_option("--manifest", r_manifest, "manifest JSON")->required();

  std::vector<std::string> argv_store{"odcp"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  RunManifest manifest;
  manifest.command_line = args;
  manifest.seed = seed;
  auto finish_manifest = [&](const std::string& output) {
    if (output.empty()) return;
    manifest.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    io::write_atomic(detail::manifest_path(output), manifest.to_json().dump(2) + "\n");
  };

  try {
    if (*detect_cmd) {
      const io::CsvTable table = io::read_csv(d_input);
      const DetectorConfig cfg = detail::resolve(d_flags, seed, threads);
      std::vector<TestRecord> trace;
      std::vector<ChangePointReport> reports;
      json cfg_json = io::to_json(cfg);
      cfg_json["mode"] = d_mode;
      if (d_mode == "general") {
        const Series raw(table.rows, SeriesKind::general);
        const Standardization s = d_transform.empty() ? fit_standardization(raw)
                                                      : io::read_standardization(d_transform);
        if (s.warned()) {
          err << "warning: constant column(s)";
          for (auto j : s.guarded) err << ' ' << j + 1;
          err << " kept unscaled\n";
        }
        cfg_json["standardization"] = io::to_json(s);
        reports = detect_general(raw, cfg, s, &trace);
      } else {
        reports = detect(make_compositional(table.rows, cfg.eps), cfg, &trace);
      }
      detail::emit(io::to_json_lines(reports), d_output, out);
      if (!d_trace.empty()) io::write_atomic(d_trace, io::to_json_lines(trace));
      manifest.config = cfg_json;
      manifest.inputs = {d_input};
      if (!d_output.empty()) manifest.outputs.push_back(d_output);
      if (!d_trace.empty()) manifest.outputs.push_back(d_trace);
      finish_manifest(d_output);
      return exit_ok;
    }

    if (*gen_cmd) {
      const PresetRequest req = detail::resolve(g_flags, seed);
      const GenSpec spec = dataset_preset(req);
      const auto [series, labeling] = generate(spec);
      std::vector<std::string> header;
      for (std::size_t j = 0; j < series.dimension(); ++j) header.push_back("x" + std::to_string(j + 1));
      const std::string truth_path =
          g_truth.empty() ? detail::sibling(g_output, ".truth.json").string() : g_truth;
      json truth = io::truth_json(spec, labeling, series.length());
      truth["kind"] = to_string(series.kind());
      truth["preset"] = io::to_json(req);
      io::write_atomic(g_output, io::to_csv(series.samples(), header));
      io::write_atomic(truth_path, truth.dump(2) + "\n");
      manifest.config = json{{"preset", io::to_json(req)}};
      manifest.outputs = {g_output, truth_path};
      finish_manifest(g_output);
      return exit_ok;
    }

    if (*eval_cmd) {
      const std::vector<std::size_t> detected = io::read_detected(e_detected);
      const io::Truth truth = io::read_truth(e_truth);
      std::size_t seg_len = e_seg_len.value_or(truth.segment_length);
      if (seg_len == 0 && !e_tolerance) {
        seg_len = truth.length / (truth.change_points.size() + 1);
      }
      const std::size_t w = detail::tolerance_for(e_tolerance, e_pct, seg_len);
      const Matching mode = e_matching == "any" ? Matching::any_in_window : Matching::one_to_one;
      const EvalResult r = match_and_score(detected, truth.change_points, w, mode);
      detail::emit(io::eval_csv(r), e_output, out);
      manifest.config = json{{"tolerance_w", w}, {"matching", e_matching}};
      manifest.inputs = {e_detected, e_truth};
      if (!e_output.empty()) manifest.outputs.push_back(e_output);
      if (e_sweep) {
        std::string path = e_sweep_output;
        if (path.empty() && !e_output.empty()) path = detail::sibling(e_output, ".sweep.csv").string();
        detail::emit(io::curve_csv(sweep_curves(detected, truth.change_points, *e_sweep, mode)),
                     path, out);
        manifest.config["sweep"] = *e_sweep;
        if (!path.empty()) manifest.outputs.push_back(path);
      }
      finish_manifest(e_output);
      return exit_ok;
    }

    if (*exp_cmd) {
      if (x_runs < 1) throw ContractError("--runs must be at least 1");
      const DetectorConfig base_cfg = detail::resolve(x_flags, seed, 1);
      const PresetRequest probe = detail::resolve(x_preset, seed);
      const GenSpec probe_spec = dataset_preset(probe);  // validates the preset up front
      const std::size_t seg_len = probe_spec.segments.front().length;
      const std::size_t w = detail::tolerance_for(x_tolerance, x_pct, seg_len);
      const Matching mode = x_matching == "any" ? Matching::any_in_window : Matching::one_to_one;

      std::vector<std::vector<std::size_t>> detected(x_runs);
      std::vector<std::vector<std::size_t>> truths(x_runs);
      const Aggregate agg = monte_carlo(
          [&](std::uint64_t run_seed) {
            const PresetRequest req = detail::resolve(x_preset, run_seed);
            const auto [series, labeling] = generate(dataset_preset(req));
            DetectorConfig cfg = base_cfg;
            cfg.seed = run_seed;
            const std::size_t i = run_seed - seed;
            detected[i] = detail::indices(detail::run_detection(series, cfg, nullptr));
            truths[i] = labeling.change_points();
            return match_and_score(detected[i], truths[i], w, mode);
          },
          x_runs, seed, threads);

      auto fmt = [](const std::optional<double>& v) {
        return v ? io::format_double(*v) : std::string("null");
      };
      std::string table = "preset,type,snr,runs,failed,null_precision,tolerance_w,precision,recall\n";
      const bool gaussian = probe_spec.segments.front().family() == SegmentFamily::gaussian;
      table += probe.name + ',' + detail::preset_type(probe, probe_spec) + ',' +
               (gaussian ? to_string(probe.snr) : "-") + ',' + std::to_string(x_runs) + ',' +
               std::to_string(agg.failed) + ',' + std::to_string(agg.null_precision) + ',' +
               std::to_string(w) + ',' + fmt(agg.mean_precision) + ',' + fmt(agg.mean_recall) +
               '\n';
      detail::emit(table, x_output, out);

      if (!x_runs_output.empty()) {
        std::string rows = "seed,ok,precision,recall,detected,truth,error\n";
        for (std::size_t i = 0; i < agg.rows.size(); ++i) {
          const RunRow& r = agg.rows[i];
          std::string det;
          for (auto v : detected[i]) det += (det.empty() ? "" : " ") + std::to_string(v);
          std::string tru;
          for (auto v : truths[i]) tru += (tru.empty() ? "" : " ") + std::to_string(v);
          std::string msg = r.error;
          for (char& c : msg) {
            if (c == ',' || c == '\n') c = ';';
          }
          rows += std::to_string(r.seed) + ',' + (r.ok ? "1" : "0") + ',' +
                  (r.ok ? fmt(r.result.precision) : "null") + ',' +
                  (r.ok ? io::format_double(r.result.recall) : "null") + ',' + det + ',' + tru +
                  ',' + msg + '\n';
        }
        io::write_atomic(x_runs_output, rows);
        manifest.outputs.push_back(x_runs_output);
      }

      if (x_sweep) {
        std::vector<CurvePoint> mean_curve;
        for (std::size_t wi = 0; wi <= *x_sweep; ++wi) {
          double p_sum = 0.0;
          double r_sum = 0.0;
          std::size_t p_n = 0;
          std::size_t r_n = 0;
          for (std::size_t i = 0; i < x_runs; ++i) {
            if (!agg.rows[i].ok) continue;
            const EvalResult r = match_and_score(detected[i], truths[i], wi, mode);
            r_sum += r.recall;
            ++r_n;
            if (r.precision) {
              p_sum += *r.precision;
              ++p_n;
            }
          }
          CurvePoint pt{wi, std::nullopt, r_n ? r_sum / static_cast<double>(r_n) : 0.0};
          if (p_n) pt.precision = p_sum / static_cast<double>(p_n);
          mean_curve.push_back(pt);
        }
        std::string path = x_sweep_output;
        if (path.empty() && !x_output.empty()) path = detail::sibling(x_output, ".sweep.csv").string();
        detail::emit(io::curve_csv(mean_curve), path, out);
        if (!path.empty()) manifest.outputs.push_back(path);
      }

      manifest.config = json{{"preset", io::to_json(probe)},
                             {"detector", io::to_json(base_cfg)},
                             {"runs", x_runs},
                             {"tolerance_w", w},
                             {"matching", x_matching}};
      if (!x_output.empty()) manifest.outputs.insert(manifest.outputs.begin(), x_output);
      finish_manifest(x_output);
      if (agg.failed > 0) err << agg.failed << " of " << x_runs << " runs failed\n";
      return exit_ok;
    }

    if (*replay_cmd) {
      const RunManifest m = read_manifest(r_manifest);
      if (!m.command_line.empty() && m.command_line.front() == "replay") {
        throw ContractError("a manifest cannot replay another replay");
      }
      return run(m.command_line, out, err);
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
  return exit_usage;
}

inline int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace odcp::cli
