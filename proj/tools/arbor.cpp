#include <CLI11.hpp>
#include <csignal>
#include <iostream>
#include <thread>

#include "arbor/pipeline.hpp"
#include "arbor/server.hpp"
#include "arbor/videosync.hpp"

namespace fs = std::filesystem;
using namespace arbor;

namespace {

int fail(int status, std::string_view code, std::string_view message, std::string_view stage) {
  std::cerr << pipeline::error_json(code, message, stage).dump() << std::endl;
  return status;
}

std::string_view status_name(pipeline::StageResult::Status s) {
  switch (s) {
    case pipeline::StageResult::Status::Ran: return "ran";
    case pipeline::StageResult::Status::UpToDate: return "up-to-date";
    case pipeline::StageResult::Status::Skipped: return "skipped";
  }
  return "unknown";
}

int run_stage(pipeline::Stage stage, const std::string& config_file, bool force, std::optional<std::uint64_t> seed) {
  const std::string name(pipeline::to_string(stage));
  try {
    pipeline::apply_thread_limit();
    const auto config = pipeline::load_config(config_file);
    for (const auto& r : pipeline::run(stage, config, {force, seed})) {
      std::cout << pipeline::Json{{"stage", pipeline::to_string(r.stage)},
                                  {"status", status_name(r.status)},
                                  {"outputs", r.outputs.size()}}
                       .dump()
                << "\n";
    }
    return 0;
  } catch (const pipeline::ConfigError& e) {
    return fail(2, e.code(), e.what(), name);
  } catch (const pipeline::RunError& e) {
    return fail(1, e.code(), e.what(), e.stage().empty() ? name : e.stage());
  } catch (const Error& e) {
    return fail(1, to_string(e.code()), e.what(), name);
  } catch (const std::exception& e) {
    return fail(1, "INTERNAL", e.what(), name);
  }
}

int offset(const std::string& dir_a, const std::string& dir_b, int max_lag, double fps) {
  try {
    const auto series = [&](const fs::path& dir) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<GrayF> frames;
      for (const auto& f : files) frames.push_back(to_gray(io::read_image(f)));
      return videosync::frame_diff_sequence(frames, fps);
    };
    std::cout << videosync::best_offset(series(dir_a), series(dir_b), max_lag) << "\n";
    return 0;
  } catch (const Error& e) {
    return fail(1, to_string(e.code()), e.what(), "offset");
  } catch (const std::exception& e) {
    return fail(1, "IO", e.what(), "offset");
  }
}

int serve(const std::string& config_file, const std::string& host, int port) {
  try {
    pipeline::apply_thread_limit();
    const auto config = pipeline::load_config(config_file);
    server::AnnotationStore store(config);
    server::Service service(store);
    server::HttpServer http(service);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int bound = http.bind(host, port);
    if (bound < 0) return fail(1, "IO", "cannot bind " + host + ":" + std::to_string(port), "serve");
    std::cout << pipeline::Json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      http.stop();
    });
    http.listen();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
  } catch (const pipeline::ConfigError& e) {
    return fail(2, e.code(), e.what(), "serve");
  } catch (const Error& e) {
    return fail(1, to_string(e.code()), e.what(), "serve");
  } catch (const std::exception& e) {
    return fail(1, "INTERNAL", e.what(), "serve");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree reconstruction pipeline and annotation server"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pipeline::kVersion));

  std::string config_file;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<pipeline::Stage, CLI::App*>> stages;
  for (auto s : pipeline::stage_order()) stages.emplace_back(s, nullptr);
  stages.emplace_back(pipeline::Stage::All, nullptr);
  for (auto& [stage, cmd] : stages) {
    const std::string name(pipeline::to_string(stage));
    cmd = app.add_subcommand(name, stage == pipeline::Stage::All ? "run every configured stage" : "run the " + name + " stage");
    cmd->add_option("--config", config_file, "pipeline config JSON")->required();
    cmd->add_flag("--force", force, "rerun even when the manifest says the stage is up to date");
    cmd->add_option("--seed", seed, "seed overriding the config");
  }

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "serve the annotation HTTP API");
  serve_cmd->add_option("--config", config_file, "pipeline config JSON")->required();
  serve_cmd->add_option("--host", host, "address to bind");
  serve_cmd->add_option("--port", port, "port to bind, 0 for any free port");

  std::string dir_a, dir_b;
  int max_lag = 100;
  double fps = 30.0;
  auto* offset_cmd = app.add_subcommand("offset", "print the frame offset between two frame directories");
  offset_cmd->add_option("dir_a", dir_a)->required()->check(CLI::ExistingDirectory);
  offset_cmd->add_option("dir_b", dir_b)->required()->check(CLI::ExistingDirectory);
  offset_cmd->add_option("--max-lag", max_lag, "largest lag searched, in frames");
  offset_cmd->add_option("--fps", fps, "frame rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "USAGE", e.what(), "");
  }

  for (auto& [stage, cmd] : stages)
    if (cmd->parsed()) return run_stage(stage, config_file, force, seed);
  if (serve_cmd->parsed()) return serve(config_file, host, port);
  if (offset_cmd->parsed()) return offset(dir_a, dir_b, max_lag, fps);
  return 2;
}
