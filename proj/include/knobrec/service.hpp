#pragma once

#include "knobrec/checkpoint.hpp"
#include "knobrec/data.hpp"

#include <json.hpp>

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace knobrec::service {

inline constexpr std::size_t kMaxResults = 1000;
inline constexpr std::size_t kDefaultResults = 20;

struct Response {
    int status = 200;
    nlohmann::json body;
};

/// Request handling without the transport. Model and dataset are read-only
/// after construction; only the session table is guarded.
class RecommendationService {
public:
    RecommendationService(checkpoint::ModelCheckpoint model, data::InteractionDataset dataset);

    Response model_info() const;
    Response factors() const;
    /// Body: {"items": [...] | "session": id, "knobs": {factor: v}, "n": int}
    Response recommendations(const std::string& body) const;

    /// Body: {"items": [...]}; stores the fold-in representation.
    Response create_session(const std::string& body);
    Response get_session(const std::string& id) const;
    Response delete_session(const std::string& id);

    const checkpoint::ModelCheckpoint& model() const { return model_; }
    const data::InteractionDataset& dataset() const { return dataset_; }

private:
    struct Session {
        std::vector<std::size_t> items;
        RealVector z;
    };

    std::vector<std::size_t> resolve_items(const nlohmann::json& items) const;

    checkpoint::ModelCheckpoint model_;
    data::InteractionDataset dataset_;
    std::optional<control::KnobMapping> mapping_;
    std::unordered_map<std::string, std::size_t> item_index_;
    std::map<std::string, std::size_t> factor_index_;
    std::string training_digest_;

    mutable std::mutex sessions_mutex_;
    std::map<std::string, Session> sessions_;
    std::size_t next_session_ = 1;
};

/// Registers every route plus permissive CORS handling on `server`.
void mount(httplib::Server& server, RecommendationService& service);

/// Blocks serving on host:port until the process is stopped.
void serve(RecommendationService& service, const std::string& host, int port);

} // namespace knobrec::service
