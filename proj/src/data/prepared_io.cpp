#include "knobrec/data.hpp"

#include "knobrec/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace knobrec::data {

namespace {

using nlohmann::json;

json eval_users_json(const std::vector<EvalUser>& users) {
    json out = json::array();
    for (const EvalUser& e : users) out.push_back({{"user", e.user}, {"fold_in", e.fold_in}, {"holdout", e.holdout}});
    return out;
}

std::vector<EvalUser> eval_users_from(const json& j) {
    std::vector<EvalUser> out;
    for (const json& e : j) {
        out.push_back({e.at("user").get<std::size_t>(), e.at("fold_in").get<std::vector<std::size_t>>(),
                       e.at("holdout").get<std::vector<std::size_t>>()});
    }
    return out;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

} // namespace

void save_prepared(const PreparedData& prepared, const std::filesystem::path& dir) {
    const InteractionDataset& ds = prepared.dataset;
    std::filesystem::create_directories(dir);

    json items = json::array();
    for (std::size_t i = 0; i < ds.n_items(); ++i) {
        items.push_back({{"id", ds.item_ids[i]}, {"title", ds.item_titles[i]}, {"factors", ds.item_factors[i]}});
    }
    json dataset = {{"factors", ds.factor_names}, {"users", ds.user_ids}, {"items", items}};
    write_text(dir / "dataset.json", dataset.dump() + "\n");

    std::ostringstream interactions;
    interactions << "user,item\n";
    std::size_t n_interactions = 0;
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        for (std::size_t i : ds.user_items[u]) interactions << u << ',' << i << '\n';
        n_interactions += ds.user_items[u].size();
    }
    write_text(dir / "interactions.csv", interactions.str());

    const UserSplit& split = prepared.split;
    json split_json = {{"train", split.train_users},
                       {"validation", eval_users_json(split.validation)},
                       {"test", eval_users_json(split.test)}};
    write_text(dir / "split.json", split_json.dump() + "\n");

    const FactorMatrix factors = compute_preference_distribution(ds);
    std::ostringstream factor_csv;
    factor_csv.precision(17);
    factor_csv << "userId";
    for (const std::string& name : ds.factor_names) factor_csv << ',' << name;
    factor_csv << '\n';
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        factor_csv << ds.user_ids[u];
        for (double v : factors.row(u)) factor_csv << ',' << v;
        factor_csv << '\n';
    }
    write_text(dir / "factors.csv", factor_csv.str());

    json prevalence = json::object();
    const auto counts = ds.factor_prevalence();
    for (std::size_t j = 0; j < ds.n_factors(); ++j) prevalence[ds.factor_names[j]] = counts[j];
    json stats = {{"users", ds.n_users()},
                  {"items", ds.n_items()},
                  {"factors", ds.n_factors()},
                  {"interactions", n_interactions},
                  {"density", static_cast<double>(n_interactions) /
                                  (static_cast<double>(ds.n_users()) * static_cast<double>(ds.n_items()))},
                  {"train_users", split.train_users.size()},
                  {"validation_users", split.validation.size()},
                  {"test_users", split.test.size()},
                  {"factor_prevalence", prevalence}};
    write_text(dir / "stats.json", stats.dump(2) + "\n");
}

PreparedData load_prepared(const std::filesystem::path& dir) {
    PreparedData out;
    InteractionDataset& ds = out.dataset;
    try {
        const json dataset = read_json(dir / "dataset.json");
        ds.factor_names = dataset.at("factors").get<std::vector<std::string>>();
        ds.user_ids = dataset.at("users").get<std::vector<std::string>>();
        for (const json& item : dataset.at("items")) {
            ds.item_ids.push_back(item.at("id").get<std::string>());
            ds.item_titles.push_back(item.at("title").get<std::string>());
            ds.item_factors.push_back(item.at("factors").get<std::vector<std::size_t>>());
        }
        const json split = read_json(dir / "split.json");
        out.split.train_users = split.at("train").get<std::vector<std::size_t>>();
        out.split.validation = eval_users_from(split.at("validation"));
        out.split.test = eval_users_from(split.at("test"));
    } catch (const json::exception& e) {
        throw DataError("prepared data in " + dir.string() + " is malformed: " + e.what());
    }

    ds.user_items.assign(ds.user_ids.size(), {});
    std::ifstream interactions(dir / "interactions.csv");
    if (!interactions) throw DataError("cannot open " + (dir / "interactions.csv").string());
    std::string line;
    std::getline(interactions, line);
    std::size_t line_no = 1;
    while (std::getline(interactions, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t u = 0, i = 0;
        char comma = 0;
        std::istringstream row(line);
        if (!(row >> u >> comma >> i) || comma != ',' || u >= ds.user_items.size() || i >= ds.item_ids.size()) {
            throw DataError((dir / "interactions.csv").string() + ":" + std::to_string(line_no) + ": bad row");
        }
        ds.user_items[u].push_back(i);
    }
    for (auto& items : ds.user_items) std::sort(items.begin(), items.end());
    ds.validate();
    return out;
}

} // namespace knobrec::data
