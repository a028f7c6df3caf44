#pragma once

#include "knobrec/data.hpp"
#include "knobrec/metrics.hpp"
#include "knobrec/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace knobrec::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numerical_error = 3 };

/// Every accepted key with its default. Anything else is rejected.
nlohmann::json default_config();

/// Parses the supported TOML subset: [section] tables, key = value with
/// strings, integers, floats, booleans and one-line arrays, # comments.
nlohmann::json parse_toml(const std::string& text, const std::string& source = "<config>");
nlohmann::json parse_toml_value(const std::string& text);
std::string to_toml(const nlohmann::json& config);

/// Overlays `overrides` onto `config`, rejecting unknown keys and type
/// mismatches.
void merge_config(nlohmann::json& config, const nlohmann::json& overrides, const std::string& source);
/// "section.key=value" on top of `config`.
void apply_set(nlohmann::json& config, const std::string& assignment);

struct ConfigSources {
    std::optional<std::filesystem::path> file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};
/// Defaults, then the file, then --set, then --seed / --out.
nlohmann::json resolve_config(const ConfigSources& sources);

data::FilterOptions filter_options(const nlohmann::json& config);
data::SyntheticSpec synthetic_spec(const nlohmann::json& config);
/// Training setup for one beta; gamma_ss is forced to 0 without supervision.
model::TrainConfig train_config(const nlohmann::json& config, std::size_t n_items, double beta);
std::vector<double> beta_values(const nlohmann::json& config);
metrics::EvalOptions eval_options(const nlohmann::json& config);

std::filesystem::path output_dir(const nlohmann::json& config);
std::filesystem::path prepared_dir(const nlohmann::json& config);

int cmd_synth(const nlohmann::json& config);
int cmd_prepare(const nlohmann::json& config);
int cmd_train(const nlohmann::json& config, bool resume);
int cmd_evaluate(const nlohmann::json& config, const std::optional<std::filesystem::path>& checkpoint);
int cmd_serve(const nlohmann::json& config, const std::optional<std::filesystem::path>& checkpoint);

/// Entry point; maps exceptions onto ExitCode.
int run(int argc, char** argv);

} // namespace knobrec::cli
