// Command-line front end: one subcommand per pipeline stage.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 VLM server unreachable.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlagen/errors.hpp"
#include "vlagen/pipeline.hpp"
#include "vlagen/synth.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVlm = 3;

vlagen::LogFn make_logger(bool as_json) {
  if (as_json) {
    return [](const std::string& stage, const std::string& msg) {
      nlohmann::ordered_json j{{"level", "info"}, {"stage", stage}, {"msg", msg}};
      std::cerr << j.dump() << '\n';
    };
  }
  return [](const std::string& stage, const std::string& msg) {
    std::cerr << "[" << stage << "] " << msg << '\n';
  };
}

void report_error(bool as_json, const char* kind, const std::string& what) {
  if (as_json) {
    nlohmann::ordered_json j{{"level", "error"}, {"kind", kind}, {"msg", what}};
    std::cerr << j.dump() << '\n';
  } else {
    std::cerr << "vlagen: " << kind << ": " << what << '\n';
  }
}

std::map<vlagen::ProfileKind, double> parse_mix(const std::string& text) {
  std::map<vlagen::ProfileKind, double> mix;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw vlagen::ConfigError("mix entries look like kind=fraction");
    try {
      mix[vlagen::profile_from_string(item.substr(0, eq))] = std::stod(item.substr(eq + 1));
    } catch (const std::invalid_argument&) {
      throw vlagen::ConfigError("bad fraction in mix entry '" + item + "'");
    }
  }
  return mix;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turn synchronized driving logs into a captioned trajectory dataset."};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, input, output;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool log_json = false;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--input", input, "directory of recordings");
  app.add_option("--out", output, "output directory");
  app.add_option("--seed", seed, "seed for sampling, splitting and synthesis");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--log-json", log_json, "log as line-delimited JSON on stderr");

  // Caption options are shared by `caption` and `pipeline`.
  std::optional<std::string> endpoint, mock_fixture;
  bool use_mock = false, rules_only = false;
  auto add_caption_opts = [&](CLI::App* sub) {
    auto* e = sub->add_option("--vlm-endpoint", endpoint, "VLM server URL");
    auto* m = sub->add_flag("--mock", use_mock, "serve captions from the bundled mock VLM");
    auto* r = sub->add_flag("--rules-only", rules_only, "skip the VLM entirely");
    sub->add_option("--mock-fixture", mock_fixture, "fixture file for --mock")
        ->check(CLI::ExistingFile);
    e->excludes(m)->excludes(r);
    m->excludes(r);
  };
  std::optional<std::size_t> n_scenes;
  auto add_sample_opts = [&](CLI::App* sub) {
    sub->add_option("--n-scenes", n_scenes, "scenes to select (0 = all eligible)");
  };

  auto* ingest = app.add_subcommand("ingest", "validate and align recordings");
  auto* estimate = app.add_subcommand("estimate", "estimate ego paths");
  auto* filter = app.add_subcommand("filter", "flag jump and vibration trajectories");
  auto* sample = app.add_subcommand("sample", "select scenes and write the manifest");
  add_sample_opts(sample);
  auto* caption = app.add_subcommand("caption", "rule and VLM captions per frame");
  add_caption_opts(caption);
  auto* emit = app.add_subcommand("emit", "write dataset records and stats");
  auto* eval = app.add_subcommand("eval", "ADE/FDE on the test split");
  std::optional<std::string> predictions;
  bool baseline = false;
  auto* pred_opt = eval->add_option("--predictions", predictions, "predictions JSONL")
                       ->check(CLI::ExistingFile);
  auto* base_opt = eval->add_flag("--baseline", baseline, "score the kinematic baseline");
  pred_opt->excludes(base_opt);
  auto* stats = app.add_subcommand("stats", "recompute dataset statistics");
  auto* render = app.add_subcommand("render", "trajectory overlay CSVs");
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  vlagen::CorpusSpec corpus;
  std::string mix_text;
  synth->add_option("--scenes", corpus.n_scenes, "number of recordings")->check(CLI::PositiveNumber);
  synth->add_option("--mix", mix_text, "profile mix, e.g. straight=0.9,constant_turn=0.1");
  synth->add_option("--gnss-sigma", corpus.gnss_sigma, "GNSS noise (m)");
  synth->add_option("--imu-sigma", corpus.imu_accel_sigma, "accelerometer noise (m/s^2)");
  synth->add_option("--jump-fraction", corpus.jump_fraction, "share of recordings with a jump");
  synth->add_option("--vibration-fraction", corpus.vibration_fraction,
                    "share of recordings with vibration");
  synth->add_option("--duration", corpus.duration, "recording length (s)");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  add_caption_opts(pipeline);
  add_sample_opts(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      if (seed) corpus.seed = *seed;
      if (!mix_text.empty()) corpus.mix = parse_mix(mix_text);
      const std::string dir = output.value_or("corpus");
      const auto scenes = vlagen::gen_corpus(dir, corpus);
      make_logger(log_json)("synth", "wrote " + std::to_string(scenes.size()) +
                                         " recordings to " + dir);
      return 0;
    }

    vlagen::StageContext ctx;
    if (config_path) ctx.cfg = vlagen::load_config(*config_path);
    if (const char* env = std::getenv("VLAGEN_VLM_ENDPOINT"); env && *env) {
      ctx.cfg.vlm_endpoint = env;
      ctx.cfg.caption_mode = vlagen::CaptionMode::endpoint;
    }
    if (input) ctx.cfg.input = *input;
    if (output) ctx.cfg.output = *output;
    if (seed) {
      ctx.cfg.seed = *seed;
      ctx.cfg.split.seed = *seed;
    }
    if (jobs) ctx.cfg.jobs = *jobs;
    if (n_scenes) ctx.cfg.n_scenes = *n_scenes;
    if (endpoint) {
      ctx.cfg.vlm_endpoint = *endpoint;
      ctx.cfg.caption_mode = vlagen::CaptionMode::endpoint;
    }
    if (use_mock) ctx.cfg.caption_mode = vlagen::CaptionMode::mock;
    if (rules_only) ctx.cfg.caption_mode = vlagen::CaptionMode::rules_only;
    if (mock_fixture) ctx.cfg.mock_fixture = *mock_fixture;
    ctx.cfg.validate();
    ctx.log = make_logger(log_json);

    if (ingest->parsed()) vlagen::stage_ingest(ctx);
    if (estimate->parsed()) vlagen::stage_estimate(ctx);
    if (filter->parsed()) vlagen::stage_filter(ctx);
    if (sample->parsed()) vlagen::stage_sample(ctx);
    if (caption->parsed()) vlagen::stage_caption(ctx);
    if (emit->parsed()) vlagen::stage_emit(ctx);
    if (stats->parsed()) vlagen::stage_stats(ctx);
    if (render->parsed()) vlagen::stage_render(ctx);
    if (eval->parsed()) {
      if (!predictions && !baseline) {
        throw vlagen::ConfigError("eval needs --predictions FILE or --baseline");
      }
      vlagen::stage_eval(ctx, predictions ? std::optional<std::filesystem::path>(*predictions)
                                          : std::nullopt);
    }
    if (pipeline->parsed()) vlagen::run_pipeline(ctx);
  } catch (const vlagen::ConfigError& e) {
    report_error(log_json, "config error", e.what());
    std::cerr << app.help();
    return kExitUsage;
  } catch (const vlagen::VlmUnavailable& e) {
    report_error(log_json, "VLM unavailable", e.what());
    return kExitVlm;
  } catch (const vlagen::DataError& e) {
    report_error(log_json, "data error", e.what());
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(log_json, "I/O error", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    report_error(log_json, "error", e.what());
    return kExitData;
  }
  return 0;
}
