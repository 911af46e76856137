#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "arbor/dataset.hpp"
#include "arbor/flowfield.hpp"
#include "arbor/io.hpp"
#include "arbor/medialaxis.hpp"
#include "arbor/multiview.hpp"
#include "arbor/treegeom.hpp"

namespace arbor::pipeline {

namespace fs = std::filesystem;
using io::Json;

inline constexpr std::string_view kVersion = "0.3.0";

/// Problems with the configuration itself (exit status 2). `code` is one of
/// CONFIG_PARSE, CONFIG_INVALID, CONFIG_PATH_MISSING.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Failures while running a stage that are not library errors, such as a
/// missing upstream artifact (STAGE_INPUT_MISSING) or a held lock (LOCKED).
/// Library errors escaping a stage are rethrown as RunError carrying the
/// library error name as the code and the stage name.
class RunError : public std::runtime_error {
 public:
  RunError(std::string code, const std::string& what, std::string stage = {})
      : std::runtime_error(what), code_(std::move(code)), stage_(std::move(stage)) {}
  const std::string& code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string code_;
  std::string stage_;
};

struct Paths {
  fs::path base;         ///< directory of the config file; relative paths resolve against it
  fs::path cameras;      ///< cameras JSON
  fs::path annotations;  ///< directory of annotation JSON documents
  fs::path output;
  std::optional<fs::path> images;  ///< directory of <image_id>.png / .jpg
  std::optional<fs::path> masks;   ///< directory of <image_id>.png masks used instead of rasterized ones
  std::optional<fs::path> cloud;   ///< PLY
  std::optional<fs::path> video_a, video_b;  ///< frame directories
  std::optional<fs::path> pose;    ///< per-edge transforms JSON
};

struct Config {
  Paths paths;
  std::uint64_t seed = 0;

  struct Sync {
    int max_lag = 100;
    double fps = 30.0;
  } sync;

  struct Dataset {
    int crop_size = dataset::kCropSize;
    int crops_per_image = 8;
    double min_separation = dataset::kMinCenterSeparation;
    int clusters = 2;
  } dataset;

  struct Flow {
    flow::BankParams bank;
    std::vector<double> scales = flow::default_scales();
    flow::Threshold threshold;
    bool visualize = false;
  } flow;

  medial::TraceParams trace;

  struct Triangulate {
    double clamp_alpha = multiview::kDefaultClampFraction;
    int n_sub = 3;
    Vec3 up = Vec3::UnitZ();
    multiview::ReregisterOptions reregister;
  } triangulate;

  struct Skin {
    int samples_per_segment = 4;
    tree::SkinOptions options;
  } skin;

  struct Displace {
    double sample_radius = 0.02;
    double sample_height = 0.05;
    int smooth_iterations = 0;
    double smooth_lambda = 0.5;
  } displace;

  struct Bind {
    double orphan_margin = 0.01;  ///< points farther than this outside their frustum are orphans
  } bind;

  struct Export {
    double density = 700.0;
    double stiffness = 1000.0;
    double damping = 10.0;
  } export_;
};

/// Reads and validates a config file. Keys absent from the file keep their
/// defaults; unknown keys are rejected.
Config load_config(const fs::path& file);
Config parse_config(const Json& j, const fs::path& base);

enum class Stage { Sync, Rasterize, Dataset, Flow, Trace, Triangulate, Skeleton, Skin, Displace, Texture, Bind, Export, All };

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> stage_from_string(std::string_view s) noexcept;
/// Component stages in execution order.
const std::vector<Stage>& stage_order();

/// Whether the configuration provides what a stage needs (videos for sync,
/// images for dataset, a cloud for displace and bind).
bool stage_enabled(Stage s, const Config& config);

struct RunOptions {
  bool force = false;
  std::optional<std::uint64_t> seed;  ///< overrides config.seed
};

struct StageResult {
  Stage stage;
  enum class Status { Ran, UpToDate, Skipped } status;
  std::vector<std::string> outputs;  ///< relative to the output directory
};

/// Runs one stage (or all of them) under the output-directory lock and
/// records each completed stage in manifest.json.
std::vector<StageResult> run(Stage stage, const Config& config, const RunOptions& options = {});

/// Exclusive lock on an output directory via `.arbor.lock`. A lock left by a
/// process that no longer exists is taken over.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

/// Applies ARBOR_THREADS (a positive integer) to the OpenMP thread count.
/// Unset or empty leaves OpenMP alone; malformed values throw ConfigError.
void apply_thread_limit();

/// {"error": {"code", "message", "stage"}}
Json error_json(std::string_view code, std::string_view message, std::string_view stage);

// Helpers shared with the annotation server.

/// Annotation documents from a directory, sorted by file name.
std::vector<annotation::ImageAnnotation> load_annotations(const fs::path& dir);
/// Image file for an id: <id>.png, <id>.jpg or <id>.jpeg in that order.
std::optional<fs::path> find_image(const fs::path& dir, const std::string& image_id);
/// Mask PNG as a {0, 1} float image.
GrayF load_mask(const fs::path& file);
/// Hash over the flow parameters that change a flow field.
std::string flow_params_hash(const Config::Flow& params);
Json to_json(const Config::Flow& params);
Config::Flow flow_params_from_json(const Json& j, const Config::Flow& defaults = {});
Json to_json(const medial::TraceParams& params);
medial::TraceParams trace_params_from_json(const Json& j, const medial::TraceParams& defaults = {});

}  // namespace arbor::pipeline
