// esv-synth: writes a procedural corpus, random head parameters and a demo config.

#include <iostream>

#include <CLI11.hpp>

#include "esvforge/error.hpp"
#include "esvforge/param_file.hpp"
#include "esvforge/pipeline.hpp"
#include "esvforge/synthetic.hpp"

int main(int argc, char** argv) {
    using namespace esvforge;
    namespace fs = std::filesystem;

    CLI::App app{"Generate a synthetic surgery corpus for esv-forge", "esv-synth"};
    fs::path out;
    SyntheticSpec spec;
    int members = 2;
    int hidden = 16;
    int layers = 3;
    app.add_option("--out", out, "Destination directory")->required();
    app.add_option("--surgeries", spec.surgeries)->capture_default_str();
    app.add_option("--clips", spec.clips_per_surgery, "Clips per surgery")->capture_default_str();
    app.add_option("--min-clip-seconds", spec.min_clip_seconds)->capture_default_str();
    app.add_option("--max-clip-seconds", spec.max_clip_seconds)->capture_default_str();
    app.add_option("--size", spec.width, "Frame side in pixels")->capture_default_str();
    app.add_option("--seed", spec.seed)->capture_default_str();
    app.add_option("--members", members, "Parameter files to write (0 skips inference)")->capture_default_str();
    app.add_option("--hidden", hidden, "LSTM width")->capture_default_str();
    app.add_option("--layers", layers, "LSTM layers available")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    spec.height = spec.width;

    try {
        out = fs::absolute(out);
        const auto corpus = write_synthetic_corpus(out / "input", spec);
        PipelineConfig cfg;
        cfg.input = out / "input";
        cfg.output = out / "run";
        const auto dim = static_cast<std::size_t>(cfg.signature_side) * cfg.signature_side;
        for (int m = 0; m < members; ++m) {
            const auto path = out / "params" / ("head_" + std::to_string(m) + ".bin");
            fs::create_directories(path.parent_path());
            save_params(random_head_params(dim, static_cast<std::size_t>(hidden), static_cast<std::size_t>(layers),
                                           TaxonomyRegistry::builtin().output_width(), spec.seed + 101 + m),
                        path);
            cfg.params.push_back(path);
        }
        std::ofstream(out / "demo.cfg") << to_config_text(cfg);
        std::size_t scenes = 0;
        for (const auto& s : corpus)
            for (const auto& c : s.clips) scenes += c.scene_starts.size();
        std::cout << "esv-synth: surgeries=" << corpus.size() << " scenes=" << scenes
                  << " config=" << (out / "demo.cfg").string() << '\n';
    } catch (const Error& e) {
        std::cerr << "esv-synth: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
