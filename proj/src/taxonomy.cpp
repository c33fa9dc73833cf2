#include "esvforge/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "esvforge/error.hpp"
#include "esvforge/taxonomy_resource.hpp"

namespace esvforge {

using nlohmann::json;

std::string_view to_string(Level level) {
    switch (level) {
        case Level::Phase: return "phase";
        case Level::Task: return "task";
        case Level::Action: return "action";
    }
    return "?";
}

Level parse_level(std::string_view text) {
    const auto s = slugify(text);
    if (s == "phase") return Level::Phase;
    if (s == "task") return Level::Task;
    if (s == "action") return Level::Action;
    throw Error(ErrorCode::InvalidArgument, "unknown taxonomy level '" + std::string(text) + "'");
}

std::string slugify(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (c == ' ') {
            out.push_back('_');
        } else if (std::isalnum(c) && c < 0x80) {
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '_') {
            out.push_back('_');
        }
    }
    return out;
}

namespace {

std::vector<std::string_view> split_dots(std::string_view label) {
    std::vector<std::string_view> parts;
    std::size_t begin = 0;
    while (true) {
        const auto dot = label.find('.', begin);
        if (dot == std::string_view::npos) {
            parts.push_back(label.substr(begin));
            break;
        }
        parts.push_back(label.substr(begin, dot - begin));
        begin = dot + 1;
    }
    return parts;
}

}  // namespace

std::string canonical_label_slug(std::string_view label) {
    std::string out;
    for (auto part : split_dots(label)) {
        if (!out.empty()) out.push_back('.');
        out += slugify(part);
    }
    return out;
}

TaxonomyRegistry TaxonomyRegistry::from_json(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("taxonomy declaration: ") + e.what());
    }

    TaxonomyRegistry reg;
    try {
        if (doc.value("schema", std::string{}) != "esv-forge.taxonomy") {
            throw Error(ErrorCode::SchemaError, "taxonomy declaration: missing or wrong schema field");
        }
        if (doc.at("version").get<int>() != 1) {
            throw Error(ErrorCode::VersionMismatch, "taxonomy declaration: unsupported version");
        }
        reg.phases_ = doc.at("phases").get<std::vector<std::string>>();
        reg.actions_ = doc.at("actions").get<std::vector<std::string>>();
        for (int level = 0; level < 3; ++level) {
            if (level == 1) continue;
            const auto& names = level == 0 ? reg.phases_ : reg.actions_;
            for (const auto& n : names) reg.slugs_[level].push_back(slugify(n));
        }
        for (const auto& task : doc.at("tasks")) {
            const auto name = task.at("name").get<std::string>();
            const auto parent = slugify(task.at("phase").get<std::string>());
            const auto& phase_slugs = reg.slugs_[0];
            const auto it = std::find(phase_slugs.begin(), phase_slugs.end(), parent);
            if (it == phase_slugs.end()) {
                throw Error(ErrorCode::SchemaError,
                            "taxonomy declaration: task '" + name + "' names unknown phase");
            }
            reg.tasks_.push_back(name);
            reg.slugs_[1].push_back(slugify(name));
            reg.phase_of_task_.push_back(static_cast<int>(it - phase_slugs.begin()));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("taxonomy declaration: ") + e.what());
    }
    reg.validate();
    return reg;
}

void TaxonomyRegistry::validate() const {
    for (auto level : kAllLevels) {
        const auto& s = slugs_[static_cast<int>(level)];
        if (s.empty()) {
            throw Error(ErrorCode::SchemaError,
                        "taxonomy declaration: empty " + std::string(to_string(level)) + " list");
        }
        std::set<std::string> unique(s.begin(), s.end());
        if (unique.size() != s.size() || unique.count("")) {
            throw Error(ErrorCode::SchemaError,
                        "taxonomy declaration: duplicate or empty " + std::string(to_string(level)) +
                            " slug");
        }
    }
    for (std::size_t p = 0; p < phases_.size(); ++p) {
        if (std::find(phase_of_task_.begin(), phase_of_task_.end(), static_cast<int>(p)) ==
            phase_of_task_.end()) {
            throw Error(ErrorCode::SchemaError,
                        "taxonomy declaration: phase '" + phases_[p] + "' owns no task");
        }
    }
}

TaxonomyRegistry TaxonomyRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open taxonomy file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

const TaxonomyRegistry& TaxonomyRegistry::builtin() {
    static const TaxonomyRegistry reg = from_json(detail::kBuiltinTaxonomy);
    return reg;
}

const std::vector<std::string>& TaxonomyRegistry::names(Level level) const noexcept {
    switch (level) {
        case Level::Phase: return phases_;
        case Level::Task: return tasks_;
        case Level::Action: return actions_;
    }
    return phases_;
}

const std::string& TaxonomyRegistry::name(Level level, int ordinal) const {
    const auto& n = names(level);
    if (ordinal < 0 || static_cast<std::size_t>(ordinal) >= n.size()) {
        throw Error(ErrorCode::OutOfRange, "ordinal out of range for " + std::string(to_string(level)));
    }
    return n[static_cast<std::size_t>(ordinal)];
}

const std::string& TaxonomyRegistry::slug(Level level, int ordinal) const {
    name(level, ordinal);
    return slugs_[static_cast<int>(level)][static_cast<std::size_t>(ordinal)];
}

int TaxonomyRegistry::find(Level level, std::string_view text) const {
    const auto s = slugify(text);
    const auto& slugs = slugs_[static_cast<int>(level)];
    const auto it = std::find(slugs.begin(), slugs.end(), s);
    if (it == slugs.end()) {
        throw Error(ErrorCode::UnknownName,
                    "unknown " + std::string(to_string(level)) + " '" + std::string(text) + "'");
    }
    return static_cast<int>(it - slugs.begin());
}

PhaseId TaxonomyRegistry::phase_of(TaskId task) const {
    name(Level::Task, task.ordinal);
    return PhaseId{phase_of_task_[static_cast<std::size_t>(task.ordinal)]};
}

TaskId TaxonomyRegistry::first_task_of(PhaseId phase) const {
    const auto it = std::find(phase_of_task_.begin(), phase_of_task_.end(), phase.ordinal);
    if (it == phase_of_task_.end()) {
        throw Error(ErrorCode::OutOfRange, "phase ordinal has no tasks");
    }
    return TaskId{static_cast<int>(it - phase_of_task_.begin())};
}

bool TaxonomyRegistry::is_valid(const Triplet& t) const noexcept {
    auto in_range = [this](Level level, int ord) {
        return ord >= 0 && static_cast<std::size_t>(ord) < size(level);
    };
    return in_range(Level::Phase, t.phase.ordinal) && in_range(Level::Task, t.task.ordinal) &&
           in_range(Level::Action, t.action.ordinal) &&
           phase_of_task_[static_cast<std::size_t>(t.task.ordinal)] == t.phase.ordinal;
}

Triplet TaxonomyRegistry::parse_triplet(std::string_view label) const {
    const auto parts = split_dots(label);
    if (parts.size() != 3) {
        throw Error(ErrorCode::MalformedLabel,
                    "label '" + std::string(label) + "' must have three dot-separated components");
    }
    Triplet t{PhaseId{find(Level::Phase, parts[0])}, TaskId{find(Level::Task, parts[1])},
              ActionId{find(Level::Action, parts[2])}};
    if (phase_of(t.task) != t.phase) {
        throw Error(ErrorCode::HierarchyViolation,
                    "task '" + tasks_[static_cast<std::size_t>(t.task.ordinal)] +
                        "' is not registered under phase '" +
                        phases_[static_cast<std::size_t>(t.phase.ordinal)] + "'");
    }
    return t;
}

std::string TaxonomyRegistry::format_triplet(const Triplet& t) const {
    return slug(Level::Phase, t.phase.ordinal) + "." + slug(Level::Task, t.task.ordinal) + "." +
           slug(Level::Action, t.action.ordinal);
}

}  // namespace esvforge
