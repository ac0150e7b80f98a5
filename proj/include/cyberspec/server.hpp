#pragma once

// HTTP front end of the collector.
//   POST /api/v1/vectors                 behavior-vector JSON -> 201 {record, verdict}
//   GET  /api/v1/verdicts/{sensor_id}    -> 200 [verdict, ...]
// Schema problems answer 400 with {"error": reason}; storage failures 500.

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cyberspec/collector.hpp"

namespace cyberspec {

class CollectorServer {
public:
    explicit CollectorServer(Collector& collector) : collector_(collector) {
        server_.Post("/api/v1/vectors", [this](const httplib::Request& req, httplib::Response& res) { post_vector(req, res); });
        server_.Get("/api/v1/verdicts/:sensor_id", [this](const httplib::Request& req, httplib::Response& res) {
            const auto& id = req.path_params.at("sensor_id");
            nlohmann::json out = nlohmann::json::array();
            for (const auto& v : collector_.session().verdicts(id)) out.push_back(to_json(v));
            res.set_content(out.dump(), "application/json");
        });
        server_.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok"})", "application/json");
        });
    }

    /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port) {
        if (port == 0) return server_.bind_to_any_port(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }

    /// Blocks until stop().
    bool run() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

private:
    static void error(httplib::Response& res, int status, const std::string& reason) {
        res.status = status;
        res.set_content(nlohmann::json{{"error", reason}}.dump(), "application/json");
    }

    void post_vector(const httplib::Request& req, httplib::Response& res) {
        BehaviorVector v;
        IngestSource source = IngestSource::simulated;
        try {
            const auto body = nlohmann::json::parse(req.body);
            v = behavior_vector_from_json(body);
            validate_sensor_id(v.sensor_id);
            if (auto s = req.get_header_value("X-Ingest-Source"); !s.empty()) source = parse_ingest_source(s);
        } catch (const nlohmann::json::exception& e) {
            return error(res, 400, std::string("invalid JSON: ") + e.what());
        } catch (const SchemaError& e) {
            return error(res, 400, e.what());
        }
        try {
            const auto r = collector_.ingest(std::move(v), source);
            res.status = 201;
            res.set_content(nlohmann::json{{"offset", r.record.storage_offset},
                                           {"received_at", r.record.received_at},
                                           {"verdict", to_json(r.verdict)}}
                                .dump(),
                            "application/json");
        } catch (const StorageError& e) {
            error(res, 500, e.what());
        } catch (const SchemaError& e) {
            error(res, 400, e.what());
        } catch (const std::exception& e) {
            error(res, 500, e.what());
        }
    }

    Collector& collector_;
    httplib::Server server_;
};

}  // namespace cyberspec
