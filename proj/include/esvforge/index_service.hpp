#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "esvforge/timeline_index.hpp"

namespace httplib {
class Server;
}

namespace esvforge {

struct ServiceResponse {
    int status = 200;
    std::string body;  // JSON
};

/// Read-only HTTP front end over a swappable, immutable index.
///
///   GET /surgeries                 -> {"surgeries": [{"id", "duration_s"}]}
///   GET /surgeries/{id}/timeline   -> {"surgery", "duration_s", "phase", "task", "action"}
///   GET /search?phase=&task=&action=&surgery=&from=&to=&min_duration=
///                                  -> {"results": [segment...]}
/// Errors come back as {"error": code, "message": text} with 400 or 404.
class IndexService {
public:
    explicit IndexService(std::shared_ptr<const TimelineIndex> index,
                          const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());
    ~IndexService();

    IndexService(const IndexService&) = delete;
    IndexService& operator=(const IndexService&) = delete;

    /// Replaces the served index; in-flight requests keep the old snapshot.
    void swap(std::shared_ptr<const TimelineIndex> index);
    std::shared_ptr<const TimelineIndex> snapshot() const;

    /// Transport-free handlers, shared by the HTTP routes and tests.
    ServiceResponse surgeries() const;
    ServiceResponse timeline(const std::string& surgery_id) const;
    ServiceResponse search(const std::multimap<std::string, std::string>& params) const;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port; throws BindFailure.
    int start(const std::string& host, int port, const std::optional<std::filesystem::path>& static_dir = {});
    /// Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();

private:
    const TaxonomyRegistry& reg_;
    mutable std::mutex mutex_;
    std::shared_ptr<const TimelineIndex> index_;
    std::unique_ptr<httplib::Server> server_;
    std::thread worker_;
};

}  // namespace esvforge
