#include "esvforge/transcode.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <spawn.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include "esvforge/error.hpp"

extern char** environ;

namespace esvforge {

namespace {

constexpr std::array<std::string_view, 6> kContainers{".mp4", ".m4v", ".mov", ".mkv", ".avi", ".ts"};

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::string shell_quote(const std::string& arg) {
    const bool plain = !arg.empty() && std::all_of(arg.begin(), arg.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '/' || c == ':' || c == '=' || c == '%';
    });
    if (plain) return arg;
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

}  // namespace

std::string CommandPlan::to_shell() const {
    std::string out;
    for (const auto& a : args) {
        if (!out.empty()) out.push_back(' ');
        out += shell_quote(a);
    }
    return out;
}

std::string format_seconds(double seconds) {
    const auto millis = std::llround(seconds * 1000.0);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%lld.%03lld", millis / 1000, millis % 1000);
    return buf;
}

bool is_supported_container(const std::filesystem::path& clip) {
    auto ext = clip.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::find(kContainers.begin(), kContainers.end(), ext) != kContainers.end();
}

CommandPlan transcode_plan(const std::filesystem::path& clip, const TranscodeTask& task,
                           const std::string& program) {
    if (!is_supported_container(clip)) {
        throw Error(ErrorCode::UnsupportedContainer, "unsupported container: " + clip.string());
    }
    if (!std::filesystem::exists(clip)) {
        throw Error(ErrorCode::ClipNotFound, "clip not found: " + clip.string());
    }

    const std::string in = clip.string();
    return std::visit(
        overloaded{
            [&](const CompressTask& t) {
                if (t.bitrate_bps <= 0) throw Error(ErrorCode::InvalidArgument, "bitrate must be positive");
                const auto rate = std::to_string(t.bitrate_bps);
                return CommandPlan{{program, "-y", "-i", in, "-c:v", "libx264", "-b:v", rate, "-maxrate", rate,
                                    "-bufsize", std::to_string(2 * t.bitrate_bps), "-c:a", "copy",
                                    t.output.string()}};
            },
            [&](const BlankAudioTask& t) {
                if (t.source_has_audio) return CommandPlan{{}, true};
                return CommandPlan{{program, "-y", "-i", in, "-f", "lavfi", "-i",
                                    "anullsrc=channel_layout=stereo:sample_rate=44100", "-map", "0:v",
                                    "-map", "1:a", "-c:v", "copy", "-c:a", "aac", "-shortest",
                                    t.output.string()}};
            },
            [&](const CutoutTask& t) {
                const auto& s = t.spec;
                if (s.start_s < 0.0 || s.duration_s <= 0.0 || s.duration_s > kCutoutSeconds + 1e-9) {
                    throw Error(ErrorCode::InvalidArgument, "cutout window out of range");
                }
                return CommandPlan{{program, "-y", "-ss", format_seconds(s.start_s), "-t",
                                    format_seconds(s.duration_s), "-i", in, "-c", "copy", t.output.string()}};
            },
            [&](const FrameExportTask& t) {
                if (!(t.frames_per_second > 0.0)) {
                    throw Error(ErrorCode::InvalidArgument, "frame rate must be positive");
                }
                std::ostringstream fps;
                fps << "fps=" << t.frames_per_second;
                return CommandPlan{{program, "-y", "-i", in, "-vf", fps.str(), "-start_number", "0",
                                    (t.output_dir / "frame_%06d.png").string()}};
            },
        },
        task);
}

int run_plan(const CommandPlan& plan) {
    if (plan.no_op) return 0;
    if (plan.args.empty()) throw Error(ErrorCode::InvalidArgument, "empty command plan");
    std::vector<char*> argv;
    for (const auto& a : plan.args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
    posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, "/dev/null", O_WRONLY, 0);
    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) return 127;
    int status = 0;
    if (waitpid(pid, &status, 0) < 0) return 127;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

bool transcoder_available(const std::string& program) {
    return run_plan(CommandPlan{{program, "-version"}}) == 0;
}

}  // namespace esvforge
