// vbackcheck: command-line driver.
//
//   vbackcheck pipeline run --config cfg.json --out dir
//   vbackcheck check --image img1 --response "A red car. A tall tree." [--config cfg.json]
//   vbackcheck eval --bench bench.jsonl --pred pred.jsonl
//   vbackcheck loss-check
//   vbackcheck serve [--config cfg.json]
//   vbackcheck serve-backends [--config cfg.json] [--port 8090]
//
// Exit codes: 0 success, 1 failure, 2 configuration error, 3 backend
// unreachable, 4 malformed input data.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "vbackcheck/base64.hpp"
#include "vbackcheck/checker.hpp"
#include "vbackcheck/config.hpp"
#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"
#include "vbackcheck/gradcheck.hpp"
#include "vbackcheck/http_service.hpp"
#include "vbackcheck/image.hpp"
#include "vbackcheck/rinstruct.hpp"

namespace fs = std::filesystem;
using namespace vbackcheck;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kUnreachable = 3, kBadInput = 4 };

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  out << text << '\n';
  if (!out) throw Error("cannot write " + out_path);
}

int run_pipeline_cmd(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = service::load_config(service::resolve_config_path(config_path));
  if (cfg.images.empty() || cfg.proposals.empty()) {
    throw ConfigError("pipeline.images and pipeline.proposals are required");
  }
  if (!fs::exists(cfg.proposals)) throw ConfigError("proposals file not found: " + cfg.proposals.string());
  const auto backends = service::build_backends(cfg);
  const auto images = rinstruct::load_image_set(cfg.images, cfg.images.parent_path());
  const std::string proposals = read_file(cfg.proposals);
  const auto out = rinstruct::run_pipeline(images, proposals, backends, cfg.pipeline);
  rinstruct::write_output(out, out_dir);
  std::cerr << "wrote " << out.rinstruct_a.size() << " R-Instruct-A and " << out.rinstruct_b.size()
            << " R-Instruct-B samples to " << out_dir << '\n';
  return kOk;
}

int check_cmd(const std::string& config_path, const std::string& image, const std::string& image_file,
              const std::string& response, const std::string& out_path) {
  const auto cfg = service::load_config(service::resolve_config_path(config_path));
  const auto backends = service::build_backends(cfg);
  if (!backends.grounding) throw ConfigError("backends.grounding is not configured");

  checker::CheckRequest req;
  req.options = cfg.checker;
  req.image = image_file.empty() ? backends::ImageRef::by_id(image)
                                 : backends::ImageRef::inline_bytes(read_file(image_file));
  req.response_text = fs::is_regular_file(response) ? read_file(response) : response;
  const auto report = checker::check(req, *backends.grounding);
  emit(checker::to_json(report).dump(2), out_path);
  return kOk;
}

int eval_cmd(const std::string& bench, const std::string& pred, const std::string& by,
             const std::string& out_path) {
  std::vector<evalkit::BenchSample> samples;
  std::map<std::string, bool> preds;
  try {
    samples = evalkit::load_bench(bench);
  } catch (const Error& e) {
    std::cerr << bench << ": " << e.what() << '\n';
    return kBadInput;
  }
  try {
    preds = evalkit::load_predictions(pred);
  } catch (const Error& e) {
    std::cerr << pred << ": " << e.what() << '\n';
    return kBadInput;
  }
  const auto slice_by = by == "category"       ? evalkit::SliceBy::Category
                        : by == "length_bucket" ? evalkit::SliceBy::LengthBucket
                                                : evalkit::SliceBy::SourceModel;
  const auto report = evalkit::slice_report(samples, preds, slice_by);
  nlohmann::ordered_json j;
  j["detection"] = evalkit::to_json(report.overall);
  j["slice_by"] = by;
  j["slices"] = evalkit::to_json(report)["slices"];
  j["missing_predictions"] = report.missing_predictions;
  emit(j.dump(2), out_path);
  return kOk;
}

int loss_check_cmd(int instances, std::uint64_t seed) {
  tuneloss::GradCheckOptions opts;
  opts.instances = instances;
  opts.seed = seed;
  const auto rows = tuneloss::run_gradient_suite(opts);
  bool ok = true;
  std::cout << std::left << std::setw(14) << "loss" << std::setw(11) << "instances" << std::setw(10)
            << "failures" << std::setw(16) << "worst_rel_err" << std::setw(10) << "seconds"
            << "result\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(14) << r.loss << std::setw(11) << r.instances << std::setw(10)
              << r.failures << std::setw(16) << std::scientific << std::setprecision(3)
              << r.worst_rel_error << std::setw(10) << std::fixed << std::setprecision(3) << r.seconds
              << (r.pass() ? "PASS" : "FAIL") << '\n';
    ok = ok && r.pass();
  }
  return ok ? kOk : kFailure;
}

httplib::Server* g_server = nullptr;

void stop_on_signal(int) {
  if (g_server) g_server->stop();
}

int serve_cmd(const std::string& config_path) {
  const auto cfg = service::load_config(service::resolve_config_path(config_path));
  const auto backends = service::build_backends(cfg);
  std::vector<evalkit::BenchSample> samples;
  if (!cfg.bench.empty()) samples = evalkit::load_bench(cfg.bench);
  auto store = std::make_shared<service::AnnotationStore>(std::move(samples), cfg.state_dir);
  service::ApiHandlers api(store, backends.grounding, cfg.checker);

  httplib::Server server;
  service::install_routes(server, api, cfg.static_dir.string());
  g_server = &server;
  std::signal(SIGINT, stop_on_signal);
  std::signal(SIGTERM, stop_on_signal);
  std::cerr << "listening on " << cfg.host << ":" << cfg.port << '\n';
  if (!server.listen(cfg.host, cfg.port)) throw ConfigError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  return kOk;
}

int serve_backends_cmd(const std::string& config_path, int port) {
  const auto cfg = service::load_config(service::resolve_config_path(config_path));
  const auto backends = service::build_backends(cfg);
  httplib::Server server;
  service::install_backend_routes(server, backends);
  g_server = &server;
  std::signal(SIGINT, stop_on_signal);
  std::signal(SIGTERM, stop_on_signal);
  std::cerr << "backend contract listening on " << cfg.host << ":" << port << '\n';
  if (!server.listen(cfg.host, port)) throw ConfigError("cannot bind port " + std::to_string(port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-free hallucination verification toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Config file (falls back to $VBACKCHECK_CONFIG)");

  auto* pipeline = app.add_subcommand("pipeline", "Instruction-data generation");
  pipeline->require_subcommand(1);
  auto* pipeline_run = pipeline->add_subcommand("run", "Run the generation pipeline");
  std::string out_dir;
  pipeline_run->add_option("--config", config_path, "Config file");
  pipeline_run->add_option("--out", out_dir, "Output directory")->required();

  auto* check = app.add_subcommand("check", "Verify a response against an image");
  std::string image, image_file, response, out_path;
  check->add_option("--config", config_path, "Config file");
  auto* image_opt = check->add_option("--image", image, "Image identifier");
  check->add_option("--image-file", image_file, "Send this image inline instead")->excludes(image_opt);
  check->add_option("--response", response, "Response text, or a file containing it")->required();
  check->add_option("--out", out_path, "Write the report here instead of stdout");

  auto* eval = app.add_subcommand("eval", "Detection metrics for predictions on a bench file");
  std::string bench, pred, by = "source_model";
  eval->add_option("--bench", bench, "Bench JSONL")->required();
  eval->add_option("--pred", pred, "Predictions JSONL")->required();
  eval->add_option("--by", by, "Slice: source_model | length_bucket | category")
      ->check(CLI::IsMember({"source_model", "length_bucket", "category"}));
  eval->add_option("--out", out_path, "Write the report here instead of stdout");

  auto* loss_check = app.add_subcommand("loss-check", "Analytic vs finite-difference gradient checks");
  int instances = 100;
  std::uint64_t seed = 20240611;
  loss_check->add_option("--instances", instances, "Random instances per loss")->check(CLI::PositiveNumber);
  loss_check->add_option("--seed", seed, "RNG seed");

  auto* serve = app.add_subcommand("serve", "Run the check/annotation/eval HTTP service");
  serve->add_option("--config", config_path, "Config file");

  auto* serve_backends = app.add_subcommand("serve-backends", "Expose configured backends over HTTP");
  int port = 8090;
  serve_backends->add_option("--config", config_path, "Config file");
  serve_backends->add_option("--port", port, "Port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pipeline_run->parsed()) return run_pipeline_cmd(config_path, out_dir);
    if (check->parsed()) {
      if (image.empty() && image_file.empty()) throw ConfigError("check needs --image or --image-file");
      return check_cmd(config_path, image, image_file, response, out_path);
    }
    if (eval->parsed()) return eval_cmd(bench, pred, by, out_path);
    if (loss_check->parsed()) return loss_check_cmd(instances, seed);
    if (serve->parsed()) return serve_cmd(config_path);
    if (serve_backends->parsed()) return serve_backends_cmd(config_path, port);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IngestionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const TransportError& e) {
    std::cerr << "backend unreachable: " << e.what() << '\n';
    return kUnreachable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
