#pragma once

#include "knobrec/control.hpp"
#include "knobrec/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace knobrec::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

/// A trained model plus what serving and evaluation need to interpret it.
struct ModelCheckpoint {
    model::ModelParams params;
    model::LossConfig loss;
    std::vector<std::string> factor_names;
    /// Empty when the model was trained without supervision.
    std::vector<std::size_t> knob_dims;
    std::uint64_t seed = 0;
    std::size_t selected_epoch = 0;
    double validation_ndcg = 0.0;
    std::size_t supervised_users = 0;
    /// Free-form training settings (epochs, batch size, learning rate...).
    nlohmann::json training = nlohmann::json::object();

    std::optional<control::KnobMapping> mapping() const;
};

void save_model(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
/// Throws CheckpointError on a bad magic, version, checksum or layout.
ModelCheckpoint load_model(const std::filesystem::path& path);

/// Trainer state for resuming, with the caller's config fingerprint.
void save_trainer_state(const std::filesystem::path& path, const model::TrainerState& state,
                        const nlohmann::json& config);
model::TrainerState load_trainer_state(const std::filesystem::path& path, nlohmann::json* config = nullptr);

nlohmann::json to_json(const model::LossConfig& loss);
model::LossConfig loss_from_json(const nlohmann::json& j);
nlohmann::json to_json(const model::Dimensions& dims);
model::Dimensions dims_from_json(const nlohmann::json& j);

// Low-level container, exposed for tests.
struct Container {
    std::string kind;
    nlohmann::json header;
    std::vector<RealMatrix> arrays;
};
std::string encode_container(const std::string& kind, const nlohmann::json& header,
                             const std::vector<std::pair<std::string, const RealMatrix*>>& arrays);
Container decode_container(const std::string& bytes, const std::string& expected_kind);

} // namespace knobrec::checkpoint
