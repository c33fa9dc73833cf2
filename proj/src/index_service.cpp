#include "esvforge/index_service.hpp"

#include <httplib.h>

#include "esvforge/error.hpp"

namespace esvforge {

using nlohmann::json;

namespace {

ServiceResponse error_response(int status, ErrorCode code, const std::string& message) {
    return {status, json{{"error", std::string(to_string(code))}, {"message", message}}.dump()};
}

}  // namespace

IndexService::IndexService(std::shared_ptr<const TimelineIndex> index, const TaxonomyRegistry& reg)
    : reg_(reg), index_(std::move(index)) {
    if (!index_) throw Error(ErrorCode::InvalidArgument, "service needs an index");
}

IndexService::~IndexService() { stop(); }

void IndexService::swap(std::shared_ptr<const TimelineIndex> index) {
    if (!index) throw Error(ErrorCode::InvalidArgument, "service needs an index");
    std::lock_guard lock(mutex_);
    index_ = std::move(index);
}

std::shared_ptr<const TimelineIndex> IndexService::snapshot() const {
    std::lock_guard lock(mutex_);
    return index_;
}

ServiceResponse IndexService::surgeries() const {
    const auto index = snapshot();
    json list = json::array();
    for (const auto& s : index->surgeries()) list.push_back({{"id", s.id}, {"duration_s", s.duration_s}});
    return {200, json{{"surgeries", list}, {"source", std::string(to_string(index->source()))}}.dump()};
}

ServiceResponse IndexService::timeline(const std::string& surgery_id) const {
    const auto index = snapshot();
    const auto* entry = index->find(surgery_id);
    if (entry == nullptr) return error_response(404, ErrorCode::UnknownName, "unknown surgery '" + surgery_id + "'");
    json doc{{"surgery", entry->id}, {"duration_s", entry->duration_s}};
    for (auto level : kAllLevels) {
        json rows = json::array();
        for (const auto& s : entry->segments(level)) rows.push_back(segment_to_json(s, reg_));
        doc[std::string(to_string(level))] = std::move(rows);
    }
    return {200, doc.dump()};
}

ServiceResponse IndexService::search(const std::multimap<std::string, std::string>& params) const {
    const auto index = snapshot();
    try {
        const auto results = index->search(query_from_params(params), reg_);
        json rows = json::array();
        for (const auto& s : results) rows.push_back(segment_to_json(s, reg_));
        return {200, json{{"results", rows}}.dump()};
    } catch (const Error& e) {
        return error_response(400, e.code(), e.what());
    }
}

int IndexService::start(const std::string& host, int port, const std::optional<std::filesystem::path>& static_dir) {
    if (server_) throw Error(ErrorCode::BindFailure, "service already started");
    auto server = std::make_unique<httplib::Server>();
    // No SO_REUSEPORT: a second server on the same port must fail to bind.
    server->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });

    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    server->Get("/surgeries", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, surgeries());
    });
    server->Get(R"(/surgeries/([^/]+)/timeline)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, timeline(req.matches[1]));
    });
    server->Get("/search", [this, reply](const httplib::Request& req, httplib::Response& res) {
        std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
        reply(res, search(params));
    });
    if (static_dir) {
        if (!server->set_mount_point("/", static_dir->string())) {
            throw Error(ErrorCode::IoFailure, "static directory not found: " + static_dir->string());
        }
    }

    int bound = port;
    if (port == 0) {
        bound = server->bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::BindFailure, "cannot bind " + host);
    } else if (!server->bind_to_port(host, port)) {
        throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    }
    server_ = std::move(server);
    worker_ = std::thread([s = server_.get()] { s->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void IndexService::wait() {
    if (worker_.joinable()) worker_.join();
}

void IndexService::stop() {
    if (server_) server_->stop();
    if (worker_.joinable()) worker_.join();
    server_.reset();
}

}  // namespace esvforge
