#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace esvforge {

enum class Level : std::uint8_t { Phase = 0, Task = 1, Action = 2 };

inline constexpr std::array<Level, 3> kAllLevels{Level::Phase, Level::Task, Level::Action};

std::string_view to_string(Level level);
/// Accepts "phase", "task" or "action" (case-insensitive).
Level parse_level(std::string_view text);

template <Level L>
struct LabelId {
    int ordinal = 0;

    friend constexpr auto operator<=>(LabelId, LabelId) = default;
};

using PhaseId = LabelId<Level::Phase>;
using TaskId = LabelId<Level::Task>;
using ActionId = LabelId<Level::Action>;

struct Triplet {
    PhaseId phase;
    TaskId task;
    ActionId action;

    int ordinal(Level level) const noexcept {
        switch (level) {
            case Level::Phase: return phase.ordinal;
            case Level::Task: return task.ordinal;
            case Level::Action: return action.ordinal;
        }
        return -1;
    }

    friend constexpr auto operator<=>(const Triplet&, const Triplet&) = default;
};

/// Lowercase, spaces to underscores, everything outside [a-z0-9_] dropped.
std::string slugify(std::string_view text);

/// Immutable phase/task/action universe loaded from a declaration file.
class TaxonomyRegistry {
public:
    /// Parses the JSON declaration format shipped in resources/taxonomy.json.
    static TaxonomyRegistry from_json(std::string_view document);
    static TaxonomyRegistry load(const std::filesystem::path& path);
    /// The registry compiled in from resources/taxonomy.json.
    static const TaxonomyRegistry& builtin();

    std::size_t size(Level level) const noexcept { return names(level).size(); }
    std::size_t output_width() const noexcept {
        return phases_.size() + tasks_.size() + actions_.size();
    }

    const std::vector<std::string>& names(Level level) const noexcept;
    const std::string& name(Level level, int ordinal) const;
    const std::string& slug(Level level, int ordinal) const;
    /// Resolves a display name or slug (case-insensitive) to its ordinal.
    int find(Level level, std::string_view text) const;

    PhaseId phase_of(TaskId task) const;
    /// First registered task under the phase, used for hierarchy repair.
    TaskId first_task_of(PhaseId phase) const;
    bool is_valid(const Triplet& t) const noexcept;

    Triplet parse_triplet(std::string_view label) const;
    std::string format_triplet(const Triplet& t) const;

private:
    TaxonomyRegistry() = default;
    void validate() const;

    std::vector<std::string> phases_;
    std::vector<std::string> tasks_;
    std::vector<std::string> actions_;
    std::array<std::vector<std::string>, 3> slugs_;
    std::vector<int> phase_of_task_;
};

/// Canonical slug form of a dotted label: each component slugified.
std::string canonical_label_slug(std::string_view label);

}  // namespace esvforge
