// esv-forge: pipeline driver.
//
//   esv-forge <import|keyframes|emit|infer|evaluate|index|serve|all> [--config FILE] [options]
//
// Exit status: 0 success, 1 stage failure (JSON summary on stderr), 2 usage error.

#include <csignal>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "esvforge/error.hpp"
#include "esvforge/index_service.hpp"
#include "esvforge/pipeline.hpp"

namespace {

using namespace esvforge;

int fail(const std::string& stage, const std::string& code, const std::string& message) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["error"] = code;
    j["message"] = message;
    std::cerr << j.dump() << '\n';
    return 1;
}

int serve(Pipeline& pipeline) {
    const auto& cfg = pipeline.config();
    const auto [host, port] = parse_bind(cfg.bind);
    auto index = std::make_shared<const TimelineIndex>(
        load_index(cfg.output / "timeline_index.json", pipeline.registry()));

    // Block termination signals before any worker thread starts, then wait for one.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    IndexService service(index, pipeline.registry());
    std::optional<std::filesystem::path> static_dir;
    if (!cfg.static_dir.empty()) static_dir = cfg.static_dir;
    const int bound = service.start(host, port, static_dir);
    std::cerr << "esv-forge: serving http://" << host << ':' << bound << '\n';
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surgical video dataset pipeline: import, keyframes, emit, infer, evaluate, index, serve", "esv-forge"};
    app.set_config("--config", "", "TOML-style key = value file; command-line flags override it");
    app.allow_config_extras(false);
    PipelineConfig config;
    bind_options(app, config);
    app.require_subcommand(1, 1);

    const std::pair<const char*, const char*> commands[] = {
        {"import", "Parse annotation exports into timelines.json"},
        {"keyframes", "Select keyframes from the frame sequences"},
        {"emit", "Write frames, cutout plans and the label CSV"},
        {"infer", "Run the temporal head ensemble over the emitted rows"},
        {"evaluate", "Score predictions against targets"},
        {"index", "Build the timeline index"},
        {"serve", "Serve the timeline index over HTTP"},
        {"all", "import, keyframes, emit, infer and evaluate (with --params), index"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        if (app.get_subcommands().empty()) std::cerr << app.help();
        return 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    std::unique_ptr<Pipeline> pipeline;
    try {
        pipeline = std::make_unique<Pipeline>(config, [](const std::string& line) { std::cerr << line << '\n'; });
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) {
            std::cerr << "esv-forge: " << e.what() << '\n';
            return 2;
        }
        return fail(stage, std::string(to_string(e.code())), e.what());
    }

    try {
        if (stage == "import") pipeline->import_annotations();
        else if (stage == "keyframes") pipeline->extract_keyframes();
        else if (stage == "emit") pipeline->emit();
        else if (stage == "infer") pipeline->infer();
        else if (stage == "evaluate") pipeline->evaluate();
        else if (stage == "index") pipeline->build_index();
        else if (stage == "serve") return serve(*pipeline);
        else if (stage == "all") pipeline->run_all();
    } catch (const Error& e) {
        return fail(stage, std::string(to_string(e.code())), e.what());
    } catch (const std::exception& e) {
        return fail(stage, "InternalError", e.what());
    }
    return 0;
}
