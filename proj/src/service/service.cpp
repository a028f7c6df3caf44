#include "knobrec/service.hpp"

#include "knobrec/control.hpp"
#include "knobrec/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>

namespace knobrec::service {

namespace {

struct RequestError {
    int status;
    std::string message;
};

Response error(int status, const std::string& message) { return {status, {{"error", message}}}; }

nlohmann::json parse_body(const std::string& body) {
    try {
        nlohmann::json j = nlohmann::json::parse(body);
        if (!j.is_object()) throw RequestError{400, "request body must be a JSON object"};
        return j;
    } catch (const nlohmann::json::parse_error&) {
        throw RequestError{400, "request body is not valid JSON"};
    }
}

std::string id_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw RequestError{400, "item ids must be strings or integers"};
}

} // namespace

RecommendationService::RecommendationService(checkpoint::ModelCheckpoint model, data::InteractionDataset dataset)
    : model_(std::move(model)), dataset_(std::move(dataset)), mapping_(model_.mapping()) {
    if (model_.params.dims().n_items != dataset_.n_items()) {
        throw ConfigError("service: checkpoint item count does not match the dataset");
    }
    if (model_.factor_names != dataset_.factor_names) {
        throw ConfigError("service: checkpoint factor vocabulary does not match the dataset");
    }
    for (std::size_t i = 0; i < dataset_.n_items(); ++i) item_index_.emplace(dataset_.item_ids[i], i);
    for (std::size_t a = 0; a < dataset_.n_factors(); ++a) factor_index_.emplace(dataset_.factor_names[a], a);

    const std::string text = model_.training.dump();
    const auto crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()),
                           static_cast<uInt>(text.size()));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    training_digest_ = buf;
}

Response RecommendationService::model_info() const {
    const auto& dims = model_.params.dims();
    nlohmann::json body;
    body["dimensions"] = checkpoint::to_json(dims);
    body["latent_dim"] = dims.latent;
    body["activation"] = model::to_string(model_.params.activation());
    body["factors"] = model_.factor_names;
    body["supervised_factor_count"] = mapping_ ? mapping_->size() : 0;
    body["knob_dims"] = model_.knob_dims;
    body["supervision_fraction"] = model_.loss.supervision_fraction;
    body["loss"] = checkpoint::to_json(model_.loss);
    body["selected_epoch"] = model_.selected_epoch;
    body["validation_ndcg"] = model_.validation_ndcg;
    body["training_digest"] = training_digest_;
    body["n_items"] = dataset_.n_items();
    return {200, body};
}

Response RecommendationService::factors() const {
    const auto prevalence = dataset_.factor_prevalence();
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t a = 0; a < dataset_.n_factors(); ++a) {
        nlohmann::json f = {{"name", dataset_.factor_names[a]}, {"index", a}, {"items", prevalence[a]},
                             {"prevalence", static_cast<double>(prevalence[a]) / static_cast<double>(dataset_.n_items())}};
        const bool knob = mapping_ && a < mapping_->size();
        f["knob"] = knob;
        f["dimension"] = knob ? nlohmann::json(mapping_->dimension(a)) : nlohmann::json(nullptr);
        list.push_back(std::move(f));
    }
    return {200, {{"factors", list}}};
}

std::vector<std::size_t> RecommendationService::resolve_items(const nlohmann::json& items) const {
    if (!items.is_array()) throw RequestError{400, "\"items\" must be an array"};
    if (items.empty()) throw RequestError{422, "\"items\" must not be empty"};
    std::vector<std::size_t> out;
    for (const auto& v : items) {
        const std::string id = id_string(v);
        const auto it = item_index_.find(id);
        if (it == item_index_.end()) throw RequestError{400, "unknown item: " + id};
        out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Response RecommendationService::recommendations(const std::string& body) const {
    try {
        const nlohmann::json req = parse_body(body);

        std::vector<std::size_t> items;
        RealVector z;
        if (req.contains("session")) {
            if (!req.at("session").is_string()) throw RequestError{400, "\"session\" must be a string"};
            std::lock_guard lock(sessions_mutex_);
            const auto it = sessions_.find(req.at("session").get<std::string>());
            if (it == sessions_.end()) throw RequestError{404, "unknown session"};
            items = it->second.items;
            z = it->second.z;
        } else {
            if (!req.contains("items")) throw RequestError{422, "\"items\" is required"};
            items = resolve_items(req.at("items"));
            z = control::infer_representation(model_.params, items);
        }

        std::size_t n = kDefaultResults;
        if (req.contains("n")) {
            const auto& v = req.at("n");
            if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > static_cast<long long>(kMaxResults)) {
                throw RequestError{400, "\"n\" must be an integer in [1, " + std::to_string(kMaxResults) + "]"};
            }
            n = v.get<std::size_t>();
        }

        nlohmann::json applied = nlohmann::json::object();
        if (req.contains("knobs")) {
            const auto& knobs = req.at("knobs");
            if (!knobs.is_object()) throw RequestError{400, "\"knobs\" must be an object"};
            for (const auto& [name, value] : knobs.items()) {
                const auto f = factor_index_.find(name);
                if (f == factor_index_.end()) throw RequestError{400, "unknown factor: " + name};
                if (!mapping_ || f->second >= mapping_->size()) {
                    throw RequestError{400, "factor has no knob in this model: " + name};
                }
                if (!value.is_number()) throw RequestError{400, "knob value for " + name + " must be a number"};
                const double v = value.get<double>();
                if (!(v >= 0.0 && v <= 1.0)) throw RequestError{400, "knob value for " + name + " must lie in [0, 1]"};
                z = control::manipulate(z, {f->second, v}, *mapping_);
                applied[name] = v;
            }
        }

        const control::RankedList ranked = control::recommend(model_.params, z, items, n);
        nlohmann::json list = nlohmann::json::array();
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            const std::size_t i = ranked.items[r];
            nlohmann::json tags = nlohmann::json::array();
            for (std::size_t a : dataset_.item_factors[i]) tags.push_back(dataset_.factor_names[a]);
            list.push_back({{"rank", r + 1},
                            {"id", dataset_.item_ids[i]},
                            {"title", dataset_.item_titles[i]},
                            {"score", ranked.scores[r]},
                            {"factors", tags}});
        }
        nlohmann::json counts = nlohmann::json::object();
        for (std::size_t a = 0; a < dataset_.n_factors(); ++a) {
            counts[dataset_.factor_names[a]] = control::count_with_factor(ranked, dataset_, a);
        }
        return {200, {{"items", list}, {"counts", counts}, {"knobs", applied}, {"n", n}}};
    } catch (const RequestError& e) {
        return error(e.status, e.message);
    }
}

Response RecommendationService::create_session(const std::string& body) {
    try {
        const nlohmann::json req = parse_body(body);
        if (!req.contains("items")) throw RequestError{422, "\"items\" is required"};
        Session s;
        s.items = resolve_items(req.at("items"));
        s.z = control::infer_representation(model_.params, s.items);
        std::lock_guard lock(sessions_mutex_);
        const std::string id = "s" + std::to_string(next_session_++);
        sessions_.emplace(id, std::move(s));
        return {201, {{"session", id}}};
    } catch (const RequestError& e) {
        return error(e.status, e.message);
    }
}

Response RecommendationService::get_session(const std::string& id) const {
    std::lock_guard lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return error(404, "unknown session");
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i : it->second.items) items.push_back(dataset_.item_ids[i]);
    return {200, {{"session", id}, {"items", items}}};
}

Response RecommendationService::delete_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    if (sessions_.erase(id) == 0) return error(404, "unknown session");
    return {204, nullptr};
}

} // namespace knobrec::service
