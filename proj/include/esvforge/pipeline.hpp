#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "esvforge/annotations.hpp"
#include "esvforge/dataset.hpp"
#include "esvforge/frame_pipeline.hpp"
#include "esvforge/temporal_head.hpp"
#include "esvforge/timeline_index.hpp"

namespace CLI {
class App;
}

namespace esvforge {

struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path annotations;  // defaults to input
    std::filesystem::path output;
    std::vector<std::filesystem::path> params;
    std::filesystem::path taxonomy;     // empty: built-in declaration
    std::filesystem::path predictions;  // empty: <output>/predictions.csv
    std::filesystem::path targets;      // empty: <output>/timeline_labels.csv
    std::filesystem::path static_dir;
    double threshold = kDefaultKeyframeThreshold;
    double frame_rate = 1.0;
    bool crop = true;
    int signature_side = kSignatureSide;
    int sequence_length = 8;
    int smoothing_k = 1;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    std::string source = "annotation";
    std::string bind = "127.0.0.1:8080";
    bool run_transcoder = false;
    std::string transcoder = "ffmpeg";
    int jobs = 0;  // 0: hardware concurrency

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;

    /// Throws InvalidArgument when a numeric field is outside its documented range.
    void validate() const;
    std::filesystem::path annotations_dir() const { return annotations.empty() ? input : annotations; }
    std::filesystem::path predictions_path() const;
    std::filesystem::path targets_path() const;
    LossWeights loss_weights() const { return {alpha, beta, gamma}; }
};

/// Registers every config field as a long option on the app.
void bind_options(CLI::App& app, PipelineConfig& config);
/// TOML-style `key = value` text accepted by --config.
std::string to_config_text(const PipelineConfig& config);
PipelineConfig parse_config_text(const std::string& text);

/// "host:port"; throws InvalidArgument.
std::pair<std::string, int> parse_bind(const std::string& bind);

using StageLog = std::function<void(const std::string& line)>;

struct StageResult {
    std::string stage;
    double elapsed_ms = 0.0;
    std::vector<std::pair<std::string, std::string>> facts;
};

/// Pipeline stages. Each reads its inputs from the config paths and writes
/// deterministic artifacts under the output root.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config, StageLog log = {});

    StageResult import_annotations();
    StageResult extract_keyframes();
    StageResult emit();
    StageResult infer();
    StageResult evaluate();
    StageResult build_index();
    /// import, keyframes, emit, then infer and evaluate when parameters are configured, then index.
    std::vector<StageResult> run_all();

    const PipelineConfig& config() const noexcept { return config_; }
    const TaxonomyRegistry& registry() const noexcept { return *registry_; }

private:
    StageResult finish(StageResult r, double started_ms);

    PipelineConfig config_;
    StageLog log_;
    std::shared_ptr<const TaxonomyRegistry> owned_registry_;
    const TaxonomyRegistry* registry_ = nullptr;
};

/// Input layout helpers.
std::vector<std::string> list_surgeries(const std::filesystem::path& input);
std::vector<std::filesystem::path> list_clip_frames(const std::filesystem::path& clip_dir);

/// timelines.json round trip.
std::string timelines_to_json(const std::vector<SurgeryTimeline>& timelines, const TaxonomyRegistry& reg);
std::vector<SurgeryTimeline> timelines_from_json(const std::string& text, const TaxonomyRegistry& reg);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace esvforge
